#pragma once

#include <string>
#include <vector>

#include "zood/bundle.hpp"
#include "zood/evidence.hpp"

namespace zood {

struct MultiDomainDataset {
  MatrixXd features;  // n x d
  Eigen::VectorXi labels;
  Eigen::VectorXi domains;
  int class_count = 0;
  int domain_count = 0;

  void validate() const;
  static MultiDomainDataset from_bundle(const FeatureBundle& bundle);
};

// n x C indicator matrix.
MatrixXd one_hot(const Eigen::VectorXi& labels, int class_count);

struct ShiftTerms {
  double total = 0.0;
  VectorXd per_sample;
};

// Held-out rows scored under a Gaussian fitted to the training rows (biased covariance plus jitter).
ShiftTerms covariate_shift(const MatrixRef& train_features, const MatrixRef& heldout_features,
                           double jitter_scale = 1e-6);

struct CorrelationShiftTerms {
  double total = 0.0;
  VectorXd per_sample;       // summed over classes
  VectorXd per_class_total;  // evidence ratio per class
  bool evidence_warning = false;
};

// Targets are n x C (one column per class). Totals use the evidence ratio
// log p(y_all | Phi_all) - log p(y_train | Phi_train) at the training optimum;
// per-sample values are marginal predictive log-densities.
CorrelationShiftTerms correlation_shift(const MatrixRef& train_features, const MatrixRef& train_targets,
                                        const MatrixRef& heldout_features, const MatrixRef& heldout_targets,
                                        const FitOptions& options = {});

enum class ScoreNormalization { PerSample, Total };

std::string_view to_string(ScoreNormalization mode);

struct RankingOptions {
  ScoreNormalization normalization = ScoreNormalization::PerSample;
  double jitter_scale = 1e-6;
  bool standardize = false;
  FitOptions evidence;
};

struct DomainSplitScore {
  int held_out_domain = 0;
  double corr_total = 0.0;
  double cov_total = 0.0;
  VectorXd corr_per_sample;
  VectorXd cov_per_sample;
  bool evidence_warning = false;
};

struct ZoodScore {
  std::string model_id;
  double score = 0.0;
  double lambda = 0.0;
  std::vector<DomainSplitScore> splits;
  int dropped_columns = 0;
  ScoreNormalization normalization = ScoreNormalization::PerSample;
  double seconds = 0.0;

  bool evidence_warning() const;
};

ZoodScore zood_score(const MultiDomainDataset& dataset, const std::string& model_id,
                     const RankingOptions& options = {});

// Scores every bundle (up to `jobs` at a time) and sorts descending, ties by model_id.
std::vector<ZoodScore> rank_zoo(const std::vector<FeatureBundle>& zoo, const RankingOptions& options = {},
                                int jobs = 1);

}  // namespace zood
