#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "zood/bundle.hpp"
#include "zood/evidence.hpp"

namespace zood {

enum class UpdateRule {
  Conjugate,    // shape += count/2, rate += moment/2, E ln a = psi(shape) + ln scale
  Strict,       // shape += count, rate += moment, E ln a = psi(shape/2) + ln 2 + ln scale
};

enum class ResidualSign {
  Derivation,  // m_i uses x_iᵀ(y - sum_{j!=i} m_j x_j)
  Reversed,    // m_i uses x_iᵀ(sum_{j!=i} m_j x_j - y)
};

struct SelectPriors {
  double pi0 = 0.5;
  // (nu01, nu02) noise shape/scale, (nu_i1, nu_i2) slab, (nu_i3, nu_i4) spike.
  std::array<double, 6> nu{1.0, 1.0, 1.0, 1.0, 5.0, 1.0};
  double tau = 0.5;
  int max_iter = 1000;
  int batch_size = 256;
  double epsilon = 0.5;
  bool early_stop = true;
  std::uint64_t seed = 0;
  UpdateRule update_rule = UpdateRule::Conjugate;
  ResidualSign residual_sign = ResidualSign::Derivation;

  void validate() const;
};

// Inclusion probabilities plus Gamma (shape, scale) pairs; used both for the
// priors (pi, nu) and for the variational factors (pi~, nu~).
struct SpikeSlabParams {
  VectorXd pi;
  VectorXd slab_shape, slab_scale;
  VectorXd spike_shape, spike_scale;
  double noise_shape = 1.0;
  double noise_scale = 1.0;

  static SpikeSlabParams broadcast(const SelectPriors& priors, Index d);
  Index dim() const { return pi.size(); }
};

struct SelectionState {
  VectorXd m;            // E[w_i]
  VectorXd lambda_prec;  // 1 / Var[w_i]
  SpikeSlabParams q;     // pi~ and nu~
  SpikeSlabParams prior;  // current pi and nu (moved by the M-step)

  void validate() const;
};

SelectionState init_state(const DesignPair& data, const SelectPriors& priors);

// One E-step sweep on a batch: noise factor, then per feature pi~_i, nu~_i, (m_i, lambda_i).
SelectionState vem_step(const SelectionState& state, const DesignPair& batch, const SelectPriors& priors);

// ARD M-step: priors take the variational parameters.
void absorb_posterior(SelectionState& state);

struct ElboTerms {
  double expected_loglik = 0.0;
  double kl_w = 0.0;  // E_q[ln q(w) - ln p(w | z, alpha)]
  double kl_z = 0.0;
  double kl_alpha = 0.0;
  double kl_beta = 0.0;

  double total() const { return expected_loglik - kl_w - kl_z - kl_alpha - kl_beta; }
};

ElboTerms elbo_terms(const SelectionState& state, const DesignPair& data);
double elbo(const SelectionState& state, const DesignPair& data, const SelectPriors& priors);

struct SelectionResult {
  VectorXd inclusion_prob;
  std::vector<bool> mask;
  std::vector<double> elbo_trace;  // full-batch runs only; entry 0 is the initial state
  int iterations = 0;
  bool early_stopped = false;
};

SelectionResult select_features(const DesignPair& data, const SelectPriors& priors);

// One run per target column; probabilities are the element-wise max and masks are ORed.
SelectionResult select_features(const MatrixRef& features, const MatrixRef& targets, const SelectPriors& priors);

FeatureBundle concat_features(const std::vector<FeatureBundle>& bundles);
FeatureBundle apply_mask(const FeatureBundle& bundle, const std::vector<bool>& mask);

struct RidgeClassifier {
  MatrixXd weights;  // d x C
  Eigen::RowVectorXd intercept;
  int class_count = 0;
};

// One-vs-rest ridge regression on one-hot targets with an unpenalized intercept.
RidgeClassifier ridge_classifier(const MatrixRef& features, const Eigen::VectorXi& labels, int class_count,
                                 double ridge);
RidgeClassifier ridge_classifier(const FeatureBundle& train, double ridge);
Eigen::VectorXi classify(const RidgeClassifier& model, const MatrixRef& features);
double accuracy(const Eigen::VectorXi& predicted, const Eigen::VectorXi& labels);

}  // namespace zood
