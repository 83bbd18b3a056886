#pragma once

#include <memory>
#include <vector>

#include <Eigen/Dense>

#include "zood/error.hpp"

namespace zood {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;
using MatrixRef = Eigen::Ref<const MatrixXd>;
using VectorRef = Eigen::Ref<const VectorXd>;

struct DesignPair {
  MatrixXd features;  // n x d, rows are samples
  VectorXd targets;   // n

  Index rows() const { return features.rows(); }
  Index dim() const { return features.cols(); }
  void validate() const;
};

// Eigendecomposition of a Gram matrix G = PhiᵀPhi, shared by every fit on the same design.
class GramSpectrum {
 public:
  static std::shared_ptr<const GramSpectrum> from_features(const MatrixRef& features);
  static std::shared_ptr<const GramSpectrum> from_gram(const MatrixXd& gram, Index rows);

  Index rows() const { return rows_; }
  Index dim() const { return eigenvalues_.size(); }
  const VectorXd& eigenvalues() const { return eigenvalues_; }  // clipped at 0
  const MatrixXd& eigenvectors() const { return eigenvectors_; }

 private:
  Index rows_ = 0;
  VectorXd eigenvalues_;
  MatrixXd eigenvectors_;
};

// Sufficient statistics of one target vector against a spectrum: Vᵀ(Phiᵀy) and yᵀy.
struct TargetMoments {
  VectorXd projected;
  double sum_squares = 0.0;
};

TargetMoments project_targets(const GramSpectrum& spectrum, const VectorRef& cross, double sum_squares);

struct FitOptions {
  double init_alpha = 1.0;
  double init_beta = 1.0;
  int max_iter = 200;
  double tol = 1e-6;
};

struct EvidenceFit {
  double alpha = 1.0;
  double beta = 1.0;
  VectorXd post_mean;
  double log_evidence = 0.0;
  double gamma = 0.0;
  int iterations = 0;
  bool converged = false;
  bool degenerate_residual = false;
  int em_fallbacks = 0;               // fixed-point steps replaced by an EM step
  std::vector<double> evidence_trace;  // log L at every iterate, starting with the initial point
  std::shared_ptr<const GramSpectrum> spectrum;

  // A = alpha I + beta PhiᵀPhi, rebuilt from the spectrum.
  MatrixXd post_precision() const;
};

class EvidenceNotConverged : public Error {
 public:
  explicit EvidenceNotConverged(EvidenceFit fit);
  const EvidenceFit& last_fit() const noexcept { return fit_; }

 private:
  EvidenceFit fit_;
};

// Direct route: Cholesky of A.
double log_evidence(const DesignPair& pair, double alpha, double beta);
double log_evidence(const MatrixRef& features, const VectorRef& targets, double alpha, double beta);

// Spectral route, O(d) per call once the spectrum is known.
double log_evidence(const GramSpectrum& spectrum, const TargetMoments& moments, double alpha, double beta);

EvidenceFit fit_evidence(const DesignPair& pair, const FitOptions& options = {});
EvidenceFit fit_evidence(std::shared_ptr<const GramSpectrum> spectrum, const TargetMoments& moments,
                         const FitOptions& options = {});

struct Predictive {
  VectorXd mean;
  VectorXd variance;
};

Predictive posterior_predictive(const EvidenceFit& fit, const MatrixRef& new_features);

}  // namespace zood
