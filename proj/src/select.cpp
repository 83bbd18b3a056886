#include "zood/select.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include <boost/math/special_functions/digamma.hpp>
#include <boost/random/uniform_int_distribution.hpp>

#include "zood/rng.hpp"

namespace zood {
namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;
constexpr double kProbFloor = 1e-12;
constexpr double kMinPrec = 1e-6;
constexpr double kMaxPrec = 1e6;

double digamma(double x) { return boost::math::digamma(x); }

double expected_log(double shape, double scale, UpdateRule rule) {
  if (rule == UpdateRule::Strict) return digamma(0.5 * shape) + std::log(2.0) + std::log(scale);
  return digamma(shape) + std::log(scale);
}

double sigmoid(double logit) {
  if (logit >= 0) return 1.0 / (1.0 + std::exp(-logit));
  const double e = std::exp(logit);
  return e / (1.0 + e);
}

double gamma_kl(double shape_q, double scale_q, double shape_p, double scale_p) {
  return (shape_q - shape_p) * digamma(shape_q) - std::lgamma(shape_q) + std::lgamma(shape_p) +
         shape_p * (std::log(scale_p) - std::log(scale_q)) + shape_q * (scale_q - scale_p) / scale_p;
}

double bernoulli_kl(double q, double p) {
  auto term = [](double a, double b) { return a > 0.0 ? a * std::log(a / b) : 0.0; };
  return term(q, p) + term(1.0 - q, 1.0 - p);
}

bool positive(const VectorXd& v) { return v.size() == 0 || (v.array() > 0.0).all(); }

void check_params(const SpikeSlabParams& p, Index d, const char* what) {
  const bool shapes = p.pi.size() == d && p.slab_shape.size() == d && p.slab_scale.size() == d &&
                      p.spike_shape.size() == d && p.spike_scale.size() == d;
  if (!shapes) throw Error(Errc::DimensionMismatch, std::string(what) + " has the wrong dimension");
  if (!p.pi.allFinite() || (p.pi.array() < 0.0).any() || (p.pi.array() > 1.0).any()) {
    throw Error(Errc::NonFinite, std::string(what) + ": inclusion probability outside [0, 1]");
  }
  if (!positive(p.slab_shape) || !positive(p.slab_scale) || !positive(p.spike_shape) || !positive(p.spike_scale) ||
      !(p.noise_shape > 0.0) || !(p.noise_scale > 0.0)) {
    throw Error(Errc::NonFinite, std::string(what) + ": Gamma parameters must be positive");
  }
}

}  // namespace

void SelectPriors::validate() const {
  if (!(pi0 > 0.0 && pi0 < 1.0)) throw Error(Errc::InvalidArgument, "pi0 must lie in (0, 1)");
  for (double v : nu) {
    if (!(v > 0.0) || !std::isfinite(v)) throw Error(Errc::InvalidArgument, "nu entries must be positive");
  }
  if (!(tau > 0.0 && tau < 1.0)) throw Error(Errc::InvalidArgument, "tau must lie in (0, 1)");
  if (max_iter < 1) throw Error(Errc::InvalidArgument, "max_iter must be >= 1");
  if (batch_size < 1) throw Error(Errc::InvalidArgument, "batch_size must be >= 1");
  if (!(epsilon > 0.0)) throw Error(Errc::InvalidArgument, "epsilon must be positive");
}

SpikeSlabParams SpikeSlabParams::broadcast(const SelectPriors& priors, Index d) {
  SpikeSlabParams p;
  p.pi = VectorXd::Constant(d, priors.pi0);
  p.noise_shape = priors.nu[0];
  p.noise_scale = priors.nu[1];
  p.slab_shape = VectorXd::Constant(d, priors.nu[2]);
  p.slab_scale = VectorXd::Constant(d, priors.nu[3]);
  p.spike_shape = VectorXd::Constant(d, priors.nu[4]);
  p.spike_scale = VectorXd::Constant(d, priors.nu[5]);
  return p;
}

void SelectionState::validate() const {
  const Index d = m.size();
  if (lambda_prec.size() != d) throw Error(Errc::DimensionMismatch, "lambda_prec length != d");
  if (!m.allFinite() || !lambda_prec.allFinite() || (lambda_prec.array() <= 0.0).any()) {
    throw Error(Errc::NonFinite, "variational means/precisions must be finite with positive precision");
  }
  check_params(q, d, "variational factor");
  check_params(prior, d, "prior");
}

SelectionState init_state(const DesignPair& data, const SelectPriors& priors) {
  data.validate();
  priors.validate();
  const Index d = data.dim();
  MatrixXd gram = data.features.transpose() * data.features;
  const double ridge = 1e-6 * gram.trace() / static_cast<double>(d);
  gram.diagonal().array() += ridge;
  SelectionState s;
  Eigen::LDLT<MatrixXd> ldlt(gram);
  s.m = ldlt.solve(data.features.transpose() * data.targets);
  if (!s.m.allFinite()) s.m.setZero();
  s.lambda_prec = s.m.array().square().inverse().min(kMaxPrec).max(kMinPrec).matrix();
  s.prior = SpikeSlabParams::broadcast(priors, d);
  s.q = s.prior;
  return s;
}

SelectionState vem_step(const SelectionState& state, const DesignPair& batch, const SelectPriors& priors) {
  batch.validate();
  const Index d = state.m.size();
  if (batch.dim() != d) throw Error(Errc::DimensionMismatch, "batch width != state dimension");
  const UpdateRule rule = priors.update_rule;
  const double half = rule == UpdateRule::Conjugate ? 0.5 : 1.0;
  const SpikeSlabParams& p = state.prior;
  SelectionState next = state;
  SpikeSlabParams& q = next.q;

  const MatrixXd& x = batch.features;
  const VectorXd col_sq = x.colwise().squaredNorm().transpose();
  VectorXd residual = batch.targets - x * next.m;

  // Noise precision from E||y - Xw||^2 = ||y - Xm||^2 + sum_i ||x_i||^2 / lambda_i.
  const double expected_sse = residual.squaredNorm() + (col_sq.array() / next.lambda_prec.array()).sum();
  q.noise_shape = p.noise_shape + half * static_cast<double>(batch.rows());
  q.noise_scale = 1.0 / (1.0 / p.noise_scale + half * expected_sse);
  const double e_beta = q.noise_shape * q.noise_scale;
  const double sign = priors.residual_sign == ResidualSign::Derivation ? 1.0 : -1.0;
  const double ln_coef = rule == UpdateRule::Conjugate ? 0.5 : 1.0;

  for (Index i = 0; i < d; ++i) {
    const double e_w2 = next.m[i] * next.m[i] + 1.0 / next.lambda_prec[i];
    const double prior_pi = std::clamp(p.pi[i], kProbFloor, 1.0 - kProbFloor);
    const double slab_mean = q.slab_shape[i] * q.slab_scale[i];
    const double spike_mean = q.spike_shape[i] * q.spike_scale[i];
    const double logit = ln_coef * (expected_log(q.slab_shape[i], q.slab_scale[i], rule) -
                                    expected_log(q.spike_shape[i], q.spike_scale[i], rule)) -
                         0.5 * (slab_mean - spike_mean) * e_w2 + std::log(prior_pi) - std::log1p(-prior_pi);
    if (std::isnan(logit)) {
      throw Error(Errc::NumericalUnderflow, "inclusion log-odds for feature " + std::to_string(i) + " is NaN");
    }
    const double pt = std::clamp(sigmoid(logit), kProbFloor, 1.0 - kProbFloor);
    q.pi[i] = pt;

    q.slab_shape[i] = p.slab_shape[i] + half * pt;
    q.slab_scale[i] = 1.0 / (1.0 / p.slab_scale[i] + half * pt * e_w2);
    q.spike_shape[i] = p.spike_shape[i] + half * (1.0 - pt);
    q.spike_scale[i] = 1.0 / (1.0 / p.spike_scale[i] + half * (1.0 - pt) * e_w2);

    const double lambda = e_beta * col_sq[i] + pt * q.slab_shape[i] * q.slab_scale[i] +
                          (1.0 - pt) * q.spike_shape[i] * q.spike_scale[i];
    const auto xi = x.col(i);
    residual += next.m[i] * xi;  // now excludes feature i
    const double mi = sign * e_beta * xi.dot(residual) / lambda;
    residual -= mi * xi;
    next.m[i] = mi;
    next.lambda_prec[i] = lambda;
  }
  if (!next.m.allFinite() || !next.lambda_prec.allFinite()) {
    throw Error(Errc::NonFinite, "variational update produced non-finite values");
  }
  return next;
}

void absorb_posterior(SelectionState& state) { state.prior = state.q; }

ElboTerms elbo_terms(const SelectionState& state, const DesignPair& data) {
  data.validate();
  state.validate();
  const Index d = state.m.size();
  if (data.dim() != d) throw Error(Errc::DimensionMismatch, "data width != state dimension");
  const SpikeSlabParams& q = state.q;
  const SpikeSlabParams& p = state.prior;
  constexpr UpdateRule rule = UpdateRule::Conjugate;

  ElboTerms t;
  const double n = static_cast<double>(data.rows());
  const VectorXd col_sq = data.features.colwise().squaredNorm().transpose();
  const double expected_sse = (data.targets - data.features * state.m).squaredNorm() +
                              (col_sq.array() / state.lambda_prec.array()).sum();
  const double e_beta = q.noise_shape * q.noise_scale;
  const double e_ln_beta = expected_log(q.noise_shape, q.noise_scale, rule);
  t.expected_loglik = 0.5 * n * (e_ln_beta - kLog2Pi) - 0.5 * e_beta * expected_sse;

  for (Index i = 0; i < d; ++i) {
    const double e_w2 = state.m[i] * state.m[i] + 1.0 / state.lambda_prec[i];
    const double pt = q.pi[i];
    const double slab = 0.5 * expected_log(q.slab_shape[i], q.slab_scale[i], rule) -
                        0.5 * q.slab_shape[i] * q.slab_scale[i] * e_w2;
    const double spike = 0.5 * expected_log(q.spike_shape[i], q.spike_scale[i], rule) -
                         0.5 * q.spike_shape[i] * q.spike_scale[i] * e_w2;
    const double e_log_prior = -0.5 * kLog2Pi + pt * slab + (1.0 - pt) * spike;
    const double entropy = 0.5 * (kLog2Pi + 1.0 - std::log(state.lambda_prec[i]));
    t.kl_w -= e_log_prior + entropy;
    t.kl_z += bernoulli_kl(pt, p.pi[i]);
    t.kl_alpha += gamma_kl(q.slab_shape[i], q.slab_scale[i], p.slab_shape[i], p.slab_scale[i]) +
                  gamma_kl(q.spike_shape[i], q.spike_scale[i], p.spike_shape[i], p.spike_scale[i]);
  }
  t.kl_beta = gamma_kl(q.noise_shape, q.noise_scale, p.noise_shape, p.noise_scale);
  if (!std::isfinite(t.total())) throw Error(Errc::NonFinite, "ELBO is not finite");
  return t;
}

double elbo(const SelectionState& state, const DesignPair& data, const SelectPriors& priors) {
  return elbo_terms(state, data).total();
}

SelectionResult select_features(const DesignPair& data, const SelectPriors& priors) {
  return select_features(data.features, data.targets, priors);
}

namespace {

SelectionResult select_single(const MatrixRef& features, const VectorRef& targets, const SelectPriors& priors,
                              std::uint64_t stream) {
  DesignPair full{features, targets};
  SelectionState state = init_state(full, priors);
  const Index n = full.rows();
  const Index d = full.dim();
  const bool full_batch = priors.batch_size >= n;
  SelectionResult out;
  if (full_batch) out.elbo_trace.push_back(elbo_terms(state, full).total());

  Philox4x64 engine(priors.seed, stream_id(StreamTag::Batches, stream));
  std::vector<Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), Index{0});
  const auto batch_n = static_cast<std::size_t>(std::min<Index>(priors.batch_size, n));
  DesignPair batch;
  std::vector<VectorXd> history;

  for (int t = 1; t <= priors.max_iter; ++t) {
    try {
      if (full_batch) {
        state = vem_step(state, full, priors);
      } else {
        // Partial Fisher-Yates: the first batch_n slots are a uniform sample without replacement.
        for (std::size_t k = 0; k < batch_n; ++k) {
          boost::random::uniform_int_distribution<std::size_t> pick(k, perm.size() - 1);
          std::swap(perm[k], perm[pick(engine)]);
        }
        const std::vector<Index> rows(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(batch_n));
        batch.features = full.features(rows, Eigen::all);
        batch.targets = full.targets(rows);
        state = vem_step(state, batch, priors);
      }
      absorb_posterior(state);
      if (full_batch) out.elbo_trace.push_back(elbo_terms(state, full).total());
    } catch (const Error& e) {
      throw e.with_context("iteration " + std::to_string(t) + ": ");
    }
    out.iterations = t;
    history.push_back(state.prior.pi);
    if (history.size() > 3) history.erase(history.begin());
    if (priors.early_stop && t >= 3) {
      const VectorXd mean = (history[0] + history[1] + history[2]) / 3.0;
      if ((history[2] - mean).lpNorm<1>() < priors.epsilon) {
        out.early_stopped = true;
        break;
      }
    }
  }
  out.inclusion_prob = state.prior.pi;
  out.mask.resize(static_cast<std::size_t>(d));
  for (Index i = 0; i < d; ++i) out.mask[static_cast<std::size_t>(i)] = out.inclusion_prob[i] >= priors.tau;
  return out;
}

}  // namespace

SelectionResult select_features(const MatrixRef& features, const MatrixRef& targets, const SelectPriors& priors) {
  priors.validate();
  if (targets.rows() != features.rows() || targets.cols() < 1) {
    throw Error(Errc::DimensionMismatch, "targets must have one row per sample and at least one column");
  }
  SelectionResult merged;
  for (Index c = 0; c < targets.cols(); ++c) {
    SelectionResult r;
    try {
      r = select_single(features, targets.col(c), priors, static_cast<std::uint64_t>(c));
    } catch (const Error& e) {
      throw targets.cols() > 1 ? e.with_context("target " + std::to_string(c) + ": ") : e;
    }
    if (c == 0) {
      merged = std::move(r);
      continue;
    }
    merged.inclusion_prob = merged.inclusion_prob.cwiseMax(r.inclusion_prob);
    for (std::size_t i = 0; i < merged.mask.size(); ++i) merged.mask[i] = merged.mask[i] || r.mask[i];
    merged.iterations = std::max(merged.iterations, r.iterations);
    merged.early_stopped = merged.early_stopped && r.early_stopped;
    merged.elbo_trace.clear();
  }
  return merged;
}

FeatureBundle concat_features(const std::vector<FeatureBundle>& bundles) {
  if (bundles.empty()) throw Error(Errc::InvalidArgument, "nothing to concatenate");
  const FeatureBundle& first = bundles.front();
  Index width = 0;
  for (const auto& b : bundles) {
    if (!same_samples(first, b) || b.rows() != first.rows()) {
      throw Error(Errc::InconsistentBundles, "model '" + b.model_id + "' does not share samples with '" +
                                                 first.model_id + "'");
    }
    width += b.width();
  }
  FeatureBundle out;
  out.labels = first.labels;
  out.domains = first.domains;
  out.class_count = first.class_count;
  out.domain_count = first.domain_count;
  out.features.resize(first.rows(), width);
  Index col = 0;
  for (const auto& b : bundles) {
    out.features.middleCols(col, b.width()) = b.features;
    col += b.width();
    const auto sources = b.column_sources();
    out.provenance.insert(out.provenance.end(), sources.begin(), sources.end());
    out.model_id += (out.model_id.empty() ? "" : "+") + b.model_id;
  }
  return out;
}

FeatureBundle apply_mask(const FeatureBundle& bundle, const std::vector<bool>& mask) {
  if (static_cast<Index>(mask.size()) != bundle.width()) {
    throw Error(Errc::DimensionMismatch, "mask length " + std::to_string(mask.size()) + " != width " +
                                             std::to_string(bundle.width()));
  }
  const auto sources = bundle.column_sources();
  std::vector<Index> keep;
  FeatureBundle out = bundle;
  out.provenance.clear();
  for (std::size_t j = 0; j < mask.size(); ++j) {
    if (!mask[j]) continue;
    keep.push_back(static_cast<Index>(j));
    out.provenance.push_back(sources[j]);
  }
  out.features = bundle.features(Eigen::all, keep);
  return out;
}

RidgeClassifier ridge_classifier(const MatrixRef& features, const Eigen::VectorXi& labels, int class_count,
                                 double ridge) {
  if (labels.size() != features.rows()) throw Error(Errc::DimensionMismatch, "labels length != rows");
  if (!(ridge >= 0.0)) throw Error(Errc::InvalidArgument, "ridge must be nonnegative");
  if (labels.size() == 0 || labels.minCoeff() < 0 || labels.maxCoeff() >= class_count) {
    throw Error(Errc::RangeViolation, "labels outside [0, class_count)");
  }
  std::vector<int> counts(static_cast<std::size_t>(class_count), 0);
  for (Index i = 0; i < labels.size(); ++i) ++counts[static_cast<std::size_t>(labels[i])];
  if (std::count_if(counts.begin(), counts.end(), [](int c) { return c > 0; }) < 2) {
    throw Error(Errc::InvalidArgument, "ridge classifier needs at least 2 classes in training");
  }
  MatrixXd y = MatrixXd::Zero(labels.size(), class_count);
  for (Index i = 0; i < labels.size(); ++i) y(i, labels[i]) = 1.0;
  const Eigen::RowVectorXd x_mean = features.colwise().mean();
  const Eigen::RowVectorXd y_mean = y.colwise().mean();
  const MatrixXd xc = features.rowwise() - x_mean;
  RidgeClassifier model;
  model.class_count = class_count;
  if (features.cols() == 0) {
    model.weights = MatrixXd::Zero(0, class_count);
  } else {
    MatrixXd gram = xc.transpose() * xc;
    gram.diagonal().array() += ridge;
    Eigen::LLT<MatrixXd> llt(gram);
    if (llt.info() != Eigen::Success) throw Error(Errc::SingularSystem, "ridge system is not positive definite");
    model.weights = llt.solve(xc.transpose() * (y.rowwise() - y_mean));
  }
  model.intercept = y_mean - x_mean * model.weights;
  return model;
}

RidgeClassifier ridge_classifier(const FeatureBundle& train, double ridge) {
  return ridge_classifier(train.features, train.labels, train.class_count, ridge);
}

Eigen::VectorXi classify(const RidgeClassifier& model, const MatrixRef& features) {
  if (features.cols() != model.weights.rows()) throw Error(Errc::DimensionMismatch, "feature width mismatch");
  const MatrixXd scores = (features * model.weights).rowwise() + model.intercept;
  Eigen::VectorXi out(features.rows());
  for (Index i = 0; i < scores.rows(); ++i) scores.row(i).maxCoeff(&out[i]);
  return out;
}

double accuracy(const Eigen::VectorXi& predicted, const Eigen::VectorXi& labels) {
  if (predicted.size() != labels.size() || labels.size() == 0) {
    throw Error(Errc::DimensionMismatch, "prediction and label lengths differ");
  }
  return static_cast<double>((predicted.array() == labels.array()).count()) / static_cast<double>(labels.size());
}

}  // namespace zood
