#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "zood/bundle.hpp"
#include "zood/evidence.hpp"
#include "zood/ranking.hpp"

namespace zood {

struct RegressionSpec {
  int d = 100;
  int k = 50;
  int n = 200;
  std::uint64_t seed = 0;

  void validate() const;
};

struct RegressionData {
  DesignPair data;
  std::vector<bool> truth;  // first k columns
  VectorXd coefficients;
};

// x ~ N(0, 1); beta_j ~ U(1, 3) on the first k features, 0 elsewhere; y ~ N(x beta, 1).
RegressionData gen_regression(const RegressionSpec& spec);

struct InvariantDomainSpec {
  int d_star = 2;
  int d = 6;
  int m_dom = 2;
  int n_per = 500;
  double s2 = 0.05;
  double sigma2 = 1.0;
  std::optional<VectorXd> beta_iv;  // default: U(1, 3) entries
  bool zero_mixing = false;         // force A_D = 0
  std::uint64_t seed = 0;

  void validate() const;
};

// Rows are grouped by domain: domain 0 first, then 1, ...
struct InvariantDataset {
  MatrixXd features;  // [x_iv, x_D]
  VectorXd response;
  Eigen::VectorXi domains;
  int domain_count = 0;
  std::vector<bool> invariant;  // first d_star columns
  VectorXd beta_iv;
  std::vector<MatrixXd> mixing;  // A_D per domain, d_star x (d - d_star)

  // Labels from equal-mass bins of the pooled response.
  MultiDomainDataset classification(int class_count) const;
};

InvariantDataset gen_multidomain(const InvariantDomainSpec& spec);

// Mean over ordered domain pairs (train D, validate D~) of the per-sample squared
// error of OLS fitted on D and evaluated on D~, restricted to the columns in `subset`.
double subset_cv_loss(const InvariantDataset& dataset, const std::vector<int>& subset);

struct SubsetLoss {
  std::vector<int> subset;
  double loss = 0.0;
};

// Losses of all 2^d - 1 non-empty subsets via per-domain Gram matrices, ordered by bitmask.
std::vector<SubsetLoss> all_subset_losses(const InvariantDataset& dataset, int max_d = 12);

// Argmin of subset_cv_loss; ties go to fewer columns, then lexicographic order.
std::vector<int> exhaustive_subset_argmin(const InvariantDataset& dataset, int max_d = 12);

enum class ZooMemberKind { Invariant, Spurious, Noise };

struct ZooMember {
  std::string model_id;
  ZooMemberKind kind = ZooMemberKind::Invariant;
  int informative_width = 0;  // columns derived from x_iv (Invariant) or x_D (Spurious)
  int noise_width = 0;        // appended N(0, 1) columns
  double feature_noise = 0.0;  // std of noise added to informative columns
  std::vector<int> latent;     // source columns read, indexed within x_iv or x_D; empty reads all
};

struct SyntheticZooSpec {
  InvariantDomainSpec data;
  int class_count = 2;
  std::vector<ZooMember> members;
};

struct SyntheticZoo {
  InvariantDataset source;
  std::vector<FeatureBundle> bundles;
};

// Each member is a fixed random linear read-out of the latent invariant or
// domain-specific block, shared by all domains, plus optional noise columns.
SyntheticZoo gen_synthetic_zoo(const SyntheticZooSpec& spec);

}  // namespace zood
