#include "zood/evidence.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace zood {
namespace {

constexpr double kGammaGuard = 1e-8;
constexpr double kMinPrecision = 1e-12;
constexpr double kMaxPrecision = 1e12;
constexpr double kLog2Pi = 1.8378770664093454835606594728112;

bool all_finite(const MatrixRef& m) { return m.allFinite(); }

void check_hyper(double alpha, double beta) {
  if (!(alpha > 0.0) || !(beta > 0.0) || !std::isfinite(alpha) || !std::isfinite(beta)) {
    throw Error(Errc::InvalidArgument, "alpha and beta must be positive and finite");
  }
}

// Everything the fixed point needs at one (alpha, beta).
struct SpectralState {
  double gamma = 0.0;
  double mean_norm2 = 0.0;  // ||m||^2
  double residual = 0.0;    // ||y - Phi m||^2
  double trace_inv = 0.0;   // tr A^-1
  double trace_gram_inv = 0.0;  // tr(PhiᵀPhi A^-1)
  double log_det = 0.0;
  double log_evidence = 0.0;
};

SpectralState evaluate(const GramSpectrum& s, const TargetMoments& t, double alpha, double beta) {
  const VectorXd& lam = s.eigenvalues();
  const VectorXd& z = t.projected;
  SpectralState out;
  double cross = 0.0;
  double quad = 0.0;
  for (Index j = 0; j < lam.size(); ++j) {
    const double denom = alpha + beta * lam[j];
    const double u = beta * z[j] / denom;
    out.gamma += beta * lam[j] / denom;
    out.mean_norm2 += u * u;
    cross += u * z[j];
    quad += lam[j] * u * u;
    out.trace_inv += 1.0 / denom;
    out.trace_gram_inv += lam[j] / denom;
    out.log_det += std::log(denom);
  }
  out.residual = std::max(t.sum_squares - 2.0 * cross + quad, 0.0);
  const double n = static_cast<double>(s.rows());
  const double d = static_cast<double>(s.dim());
  out.log_evidence = 0.5 * n * std::log(beta) + 0.5 * d * std::log(alpha) - 0.5 * n * kLog2Pi -
                     0.5 * beta * out.residual - 0.5 * alpha * out.mean_norm2 - 0.5 * out.log_det;
  return out;
}

double clamp_precision(double v) {
  if (std::isnan(v)) return kMaxPrecision;
  return std::clamp(v, kMinPrecision, kMaxPrecision);
}

}  // namespace

void DesignPair::validate() const {
  if (features.rows() < 1 || features.cols() < 1) {
    throw Error(Errc::InvalidArgument, "design needs n >= 1 and d >= 1");
  }
  if (targets.size() != features.rows()) {
    throw Error(Errc::DimensionMismatch, "targets length " + std::to_string(targets.size()) +
                                             " != rows " + std::to_string(features.rows()));
  }
  if (!features.allFinite() || !targets.allFinite()) {
    throw Error(Errc::NonFinite, "design contains non-finite entries");
  }
}

std::shared_ptr<const GramSpectrum> GramSpectrum::from_features(const MatrixRef& features) {
  MatrixXd gram = MatrixXd::Zero(features.cols(), features.cols());
  gram.selfadjointView<Eigen::Lower>().rankUpdate(features.transpose());
  return from_gram(gram, features.rows());
}

std::shared_ptr<const GramSpectrum> GramSpectrum::from_gram(const MatrixXd& gram, Index rows) {
  if (gram.rows() != gram.cols()) throw Error(Errc::DimensionMismatch, "Gram matrix is not square");
  if (!gram.allFinite()) throw Error(Errc::NonFinite, "Gram matrix contains non-finite entries");
  // Only the lower triangle is read.
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(gram);
  if (eig.info() != Eigen::Success) throw Error(Errc::SingularSystem, "eigendecomposition failed");
  auto out = std::make_shared<GramSpectrum>();
  out->rows_ = rows;
  out->eigenvalues_ = eig.eigenvalues().cwiseMax(0.0);
  out->eigenvectors_ = eig.eigenvectors();
  return out;
}

TargetMoments project_targets(const GramSpectrum& spectrum, const VectorRef& cross, double sum_squares) {
  if (cross.size() != spectrum.dim()) throw Error(Errc::DimensionMismatch, "cross moment length != d");
  return {spectrum.eigenvectors().transpose() * cross, sum_squares};
}

MatrixXd EvidenceFit::post_precision() const {
  const MatrixXd& v = spectrum->eigenvectors();
  const VectorXd diag = (alpha + beta * spectrum->eigenvalues().array()).matrix();
  return v * diag.asDiagonal() * v.transpose();
}

EvidenceNotConverged::EvidenceNotConverged(EvidenceFit fit)
    : Error(Errc::DidNotConverge,
            "evidence fixed point did not converge in " + std::to_string(fit.iterations) + " iterations"),
      fit_(std::move(fit)) {}

double log_evidence(const MatrixRef& features, const VectorRef& targets, double alpha, double beta) {
  check_hyper(alpha, beta);
  if (targets.size() != features.rows()) throw Error(Errc::DimensionMismatch, "targets length != rows");
  if (!all_finite(features) || !targets.allFinite()) throw Error(Errc::NonFinite, "non-finite design");
  const double n = static_cast<double>(features.rows());
  const double d = static_cast<double>(features.cols());

  MatrixXd a = MatrixXd::Zero(features.cols(), features.cols());
  a.selfadjointView<Eigen::Lower>().rankUpdate(features.transpose(), beta);
  a.diagonal().array() += alpha;
  Eigen::LLT<MatrixXd> llt(a);
  if (llt.info() != Eigen::Success) throw Error(Errc::SingularSystem, "posterior precision not SPD");
  const VectorXd m = beta * llt.solve(features.transpose() * targets);
  const double residual = (targets - features * m).squaredNorm();
  const double log_det = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  const double value = 0.5 * n * std::log(beta) + 0.5 * d * std::log(alpha) - 0.5 * n * kLog2Pi -
                       0.5 * beta * residual - 0.5 * alpha * m.squaredNorm() - 0.5 * log_det;
  if (!std::isfinite(value)) throw Error(Errc::NonFinite, "log evidence is not finite");
  return value;
}

double log_evidence(const DesignPair& pair, double alpha, double beta) {
  pair.validate();
  return log_evidence(pair.features, pair.targets, alpha, beta);
}

double log_evidence(const GramSpectrum& spectrum, const TargetMoments& moments, double alpha, double beta) {
  check_hyper(alpha, beta);
  const double value = evaluate(spectrum, moments, alpha, beta).log_evidence;
  if (!std::isfinite(value)) throw Error(Errc::NonFinite, "log evidence is not finite");
  return value;
}

EvidenceFit fit_evidence(std::shared_ptr<const GramSpectrum> spectrum, const TargetMoments& moments,
                         const FitOptions& options) {
  check_hyper(options.init_alpha, options.init_beta);
  if (options.max_iter < 1 || !(options.tol > 0.0)) {
    throw Error(Errc::InvalidArgument, "max_iter must be >= 1 and tol > 0");
  }
  if (moments.projected.size() != spectrum->dim()) {
    throw Error(Errc::DimensionMismatch, "target moments do not match the spectrum");
  }
  const double n = static_cast<double>(spectrum->rows());
  const double d = static_cast<double>(spectrum->dim());

  EvidenceFit fit;
  fit.alpha = options.init_alpha;
  fit.beta = options.init_beta;
  SpectralState state = evaluate(*spectrum, moments, fit.alpha, fit.beta);
  fit.evidence_trace.push_back(state.log_evidence);

  for (int it = 1; it <= options.max_iter; ++it) {
    double denom = n - state.gamma;
    if (denom <= kGammaGuard) {
      denom = kGammaGuard;
      fit.degenerate_residual = true;
    }
    double alpha = clamp_precision(state.gamma / state.mean_norm2);
    double beta = clamp_precision(denom / state.residual);
    SpectralState next = evaluate(*spectrum, moments, alpha, beta);
    const double slack = 1e-12 * std::max(1.0, std::abs(state.log_evidence));
    if (next.log_evidence < state.log_evidence - slack) {
      // MacKay's update overshot; the EM step cannot decrease the evidence.
      alpha = clamp_precision(d / (state.mean_norm2 + state.trace_inv));
      beta = clamp_precision(n / (state.residual + state.trace_gram_inv));
      next = evaluate(*spectrum, moments, alpha, beta);
      ++fit.em_fallbacks;
    }
    const double change = std::max(std::abs(alpha - fit.alpha) / fit.alpha, std::abs(beta - fit.beta) / fit.beta);
    fit.alpha = alpha;
    fit.beta = beta;
    state = next;
    fit.evidence_trace.push_back(state.log_evidence);
    fit.iterations = it;
    if (change < options.tol) {
      fit.converged = true;
      break;
    }
  }

  if (n - state.gamma <= kGammaGuard) fit.degenerate_residual = true;
  const VectorXd& lam = spectrum->eigenvalues();
  const VectorXd u = (fit.beta * moments.projected.array() / (fit.alpha + fit.beta * lam.array())).matrix();
  fit.post_mean = spectrum->eigenvectors() * u;
  fit.gamma = std::clamp(state.gamma, 0.0, d);
  fit.log_evidence = state.log_evidence;
  fit.spectrum = std::move(spectrum);
  if (!std::isfinite(fit.log_evidence)) throw Error(Errc::NonFinite, "log evidence is not finite");
  if (!fit.converged) throw EvidenceNotConverged(std::move(fit));
  return fit;
}

EvidenceFit fit_evidence(const DesignPair& pair, const FitOptions& options) {
  pair.validate();
  auto spectrum = GramSpectrum::from_features(pair.features);
  const TargetMoments moments =
      project_targets(*spectrum, pair.features.transpose() * pair.targets, pair.targets.squaredNorm());
  return fit_evidence(std::move(spectrum), moments, options);
}

Predictive posterior_predictive(const EvidenceFit& fit, const MatrixRef& new_features) {
  if (!fit.spectrum) throw Error(Errc::InvalidArgument, "fit carries no spectrum");
  if (new_features.cols() != fit.spectrum->dim()) {
    throw Error(Errc::DimensionMismatch, "new features have " + std::to_string(new_features.cols()) +
                                             " columns, fit has " + std::to_string(fit.spectrum->dim()));
  }
  const VectorXd inv =
      (1.0 / (fit.alpha + fit.beta * fit.spectrum->eigenvalues().array())).matrix();
  const MatrixXd rotated = new_features * fit.spectrum->eigenvectors();
  Predictive out;
  out.mean = new_features * fit.post_mean;
  out.variance = (rotated.array().square().matrix() * inv).array() + 1.0 / fit.beta;
  return out;
}

}  // namespace zood
