#include "zood/ranking.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <numeric>
#include <string>
#include <thread>

namespace zood {
namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;
constexpr int kJitterDoublings = 8;

struct Gaussian {
  VectorXd mean;
  Eigen::LLT<MatrixXd> llt;
  double log_det = 0.0;
};

// Fits N(mu, Sigma) from column sums and the lower triangle of the Gram matrix.
Gaussian fit_gaussian(const VectorXd& sum, const MatrixXd& gram, Index rows, double jitter_scale) {
  const Index d = sum.size();
  Gaussian g;
  g.mean = sum / static_cast<double>(rows);
  MatrixXd cov = gram / static_cast<double>(rows);
  cov.triangularView<Eigen::Lower>() -= g.mean * g.mean.transpose();
  const double base = jitter_scale * cov.diagonal().sum() / static_cast<double>(d);
  double jitter = base;
  for (int attempt = 0; attempt <= kJitterDoublings; ++attempt) {
    MatrixXd shifted = cov;
    shifted.diagonal().array() += jitter;
    g.llt.compute(shifted);
    if (g.llt.info() == Eigen::Success && g.llt.matrixLLT().diagonal().minCoeff() > 0.0) {
      g.log_det = 2.0 * g.llt.matrixLLT().diagonal().array().log().sum();
      if (std::isfinite(g.log_det)) return g;
    }
    jitter *= 2.0;
  }
  throw Error(Errc::CovarianceDegenerate, "feature covariance is not positive definite after jitter retries");
}

ShiftTerms gaussian_log_pdf(const Gaussian& g, const MatrixRef& rows) {
  ShiftTerms out;
  out.per_sample.resize(rows.rows());
  if (rows.rows() == 0) return out;
  const Index d = g.mean.size();
  MatrixXd centered = (rows.rowwise() - g.mean.transpose()).transpose();
  g.llt.matrixL().solveInPlace(centered);
  const VectorXd quad = centered.colwise().squaredNorm().transpose();
  out.per_sample = (-0.5 * (static_cast<double>(d) * kLog2Pi + g.log_det + quad.array())).matrix();
  out.total = out.per_sample.sum();
  return out;
}

MatrixXd lower_gram(const MatrixRef& x) {
  MatrixXd g = MatrixXd::Zero(x.cols(), x.cols());
  g.selfadjointView<Eigen::Lower>().rankUpdate(x.transpose());
  return g;
}

// Sufficient statistics of one design against every target column.
struct SplitDesign {
  std::shared_ptr<const GramSpectrum> spectrum;
  MatrixXd cross;         // d x C
  VectorXd sum_squares;   // C
};

CorrelationShiftTerms correlation_core(const SplitDesign& train, const SplitDesign& all,
                                       const MatrixRef& heldout_features, const MatrixRef& heldout_targets,
                                       const FitOptions& options) {
  const Index classes = train.cross.cols();
  CorrelationShiftTerms out;
  out.per_class_total.resize(classes);
  out.per_sample = VectorXd::Zero(heldout_features.rows());
  const MatrixXd rotated = heldout_features * train.spectrum->eigenvectors();
  const MatrixXd rotated_sq = rotated.array().square().matrix();
  for (Index c = 0; c < classes; ++c) {
    try {
      const TargetMoments moments = project_targets(*train.spectrum, train.cross.col(c), train.sum_squares[c]);
      EvidenceFit fit;
      try {
        fit = fit_evidence(train.spectrum, moments, options);
      } catch (const EvidenceNotConverged& e) {
        fit = e.last_fit();
        out.evidence_warning = true;
      }
      if (fit.degenerate_residual) out.evidence_warning = true;
      const TargetMoments all_moments = project_targets(*all.spectrum, all.cross.col(c), all.sum_squares[c]);
      out.per_class_total[c] = log_evidence(*all.spectrum, all_moments, fit.alpha, fit.beta) - fit.log_evidence;

      const VectorXd inv = (1.0 / (fit.alpha + fit.beta * train.spectrum->eigenvalues().array())).matrix();
      const VectorXd mean = heldout_features * fit.post_mean;
      const VectorXd var = (rotated_sq * inv).array() + 1.0 / fit.beta;
      const VectorXd resid = heldout_targets.col(c) - mean;
      out.per_sample.array() += -0.5 * (kLog2Pi + var.array().log() + resid.array().square() / var.array());
    } catch (const Error& e) {
      throw e.with_context("class " + std::to_string(c) + ": ");
    }
  }
  out.total = out.per_class_total.sum();
  if (!std::isfinite(out.total) || !out.per_sample.allFinite()) {
    throw Error(Errc::NonFinite, "correlation shift is not finite");
  }
  return out;
}

double sample_std(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

}  // namespace

void MultiDomainDataset::validate() const {
  const Index n = features.rows();
  if (labels.size() != n || domains.size() != n) {
    throw Error(Errc::DimensionMismatch, "labels/domains length != feature rows");
  }
  if (domain_count < 2) throw Error(Errc::TooFewDomains, "leave-one-domain-out needs at least 2 domains");
  if (class_count < 1) throw Error(Errc::InvalidArgument, "class_count must be positive");
  if (n == 0 || features.cols() == 0) throw Error(Errc::InvalidArgument, "dataset is empty");
  if (labels.minCoeff() < 0 || labels.maxCoeff() >= class_count) {
    throw Error(Errc::RangeViolation, "label outside [0, class_count)");
  }
  if (domains.minCoeff() < 0 || domains.maxCoeff() >= domain_count) {
    throw Error(Errc::RangeViolation, "domain outside [0, domain_count)");
  }
  std::vector<int> seen(static_cast<std::size_t>(domain_count), 0);
  for (Index i = 0; i < n; ++i) ++seen[static_cast<std::size_t>(domains[i])];
  for (int k = 0; k < domain_count; ++k) {
    if (seen[static_cast<std::size_t>(k)] == 0) {
      throw Error(Errc::TooFewDomains, "domain " + std::to_string(k) + " has no samples");
    }
  }
  if (!features.allFinite()) throw Error(Errc::NonFinite, "features contain non-finite values");
}

MultiDomainDataset MultiDomainDataset::from_bundle(const FeatureBundle& bundle) {
  return {bundle.features, bundle.labels, bundle.domains, bundle.class_count, bundle.domain_count};
}

MatrixXd one_hot(const Eigen::VectorXi& labels, int class_count) {
  MatrixXd y = MatrixXd::Zero(labels.size(), class_count);
  for (Index i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= class_count) throw Error(Errc::RangeViolation, "label out of range");
    y(i, labels[i]) = 1.0;
  }
  return y;
}

ShiftTerms covariate_shift(const MatrixRef& train_features, const MatrixRef& heldout_features,
                           double jitter_scale) {
  if (train_features.cols() != heldout_features.cols()) {
    throw Error(Errc::DimensionMismatch, "train and held-out feature widths differ");
  }
  if (train_features.rows() < 2) throw Error(Errc::InvalidArgument, "covariate shift needs >= 2 training rows");
  if (!(jitter_scale >= 0.0)) throw Error(Errc::InvalidArgument, "jitter_scale must be nonnegative");
  const Gaussian g = fit_gaussian(train_features.colwise().sum().transpose(), lower_gram(train_features),
                                  train_features.rows(), jitter_scale);
  return gaussian_log_pdf(g, heldout_features);
}

CorrelationShiftTerms correlation_shift(const MatrixRef& train_features, const MatrixRef& train_targets,
                                        const MatrixRef& heldout_features, const MatrixRef& heldout_targets,
                                        const FitOptions& options) {
  if (train_features.cols() != heldout_features.cols() || train_targets.cols() != heldout_targets.cols() ||
      train_targets.rows() != train_features.rows() || heldout_targets.rows() != heldout_features.rows()) {
    throw Error(Errc::DimensionMismatch, "correlation shift inputs disagree in shape");
  }
  if (train_features.rows() < 1 || train_features.cols() < 1) {
    throw Error(Errc::InvalidArgument, "empty training design");
  }
  if (!train_features.allFinite() || !heldout_features.allFinite() || !train_targets.allFinite() ||
      !heldout_targets.allFinite()) {
    throw Error(Errc::NonFinite, "non-finite correlation shift input");
  }
  const MatrixXd train_gram = lower_gram(train_features);
  SplitDesign train{GramSpectrum::from_gram(train_gram, train_features.rows()),
                    train_features.transpose() * train_targets,
                    train_targets.colwise().squaredNorm().transpose()};
  SplitDesign all{GramSpectrum::from_gram(train_gram + lower_gram(heldout_features),
                                          train_features.rows() + heldout_features.rows()),
                  train.cross + heldout_features.transpose() * heldout_targets,
                  train.sum_squares + heldout_targets.colwise().squaredNorm().transpose()};
  return correlation_core(train, all, heldout_features, heldout_targets, options);
}

std::string_view to_string(ScoreNormalization mode) {
  return mode == ScoreNormalization::PerSample ? "per-sample" : "total";
}

bool ZoodScore::evidence_warning() const {
  return std::any_of(splits.begin(), splits.end(), [](const DomainSplitScore& s) { return s.evidence_warning; });
}

ZoodScore zood_score(const MultiDomainDataset& dataset, const std::string& model_id, const RankingOptions& options) {
  const auto start = std::chrono::steady_clock::now();
  dataset.validate();

  // Constant columns carry no information and make the covariance singular.
  std::vector<Index> keep;
  for (Index j = 0; j < dataset.features.cols(); ++j) {
    const auto col = dataset.features.col(j);
    if (col.maxCoeff() > col.minCoeff()) keep.push_back(j);
  }
  if (keep.empty()) throw Error(Errc::InvalidArgument, "model '" + model_id + "': every feature column is constant");
  MatrixXd phi = dataset.features(Eigen::all, keep);
  if (options.standardize) {
    const Eigen::RowVectorXd mean = phi.colwise().mean();
    phi.rowwise() -= mean;
    const Eigen::RowVectorXd sd = (phi.colwise().squaredNorm() / static_cast<double>(phi.rows())).array().sqrt();
    phi.array().rowwise() /= sd.array();
  }
  const Index n = phi.rows();
  const MatrixXd y = one_hot(dataset.labels, dataset.class_count);

  const MatrixXd gram = lower_gram(phi);
  const VectorXd col_sum = phi.colwise().sum().transpose();
  SplitDesign all{GramSpectrum::from_gram(gram, n), phi.transpose() * y, y.colwise().squaredNorm().transpose()};

  ZoodScore out;
  out.model_id = model_id;
  out.dropped_columns = static_cast<int>(dataset.features.cols()) - static_cast<int>(keep.size());
  out.normalization = options.normalization;
  std::vector<double> pooled_corr, pooled_cov;

  for (int dom = 0; dom < dataset.domain_count; ++dom) {
    std::vector<Index> rows;
    for (Index i = 0; i < n; ++i) {
      if (dataset.domains[i] == dom) rows.push_back(i);
    }
    const Index n_train = n - static_cast<Index>(rows.size());
    try {
      if (n_train < 2) throw Error(Errc::InvalidArgument, "fewer than 2 training rows");
      const MatrixXd held = phi(rows, Eigen::all);
      const MatrixXd held_y = y(rows, Eigen::all);
      const MatrixXd train_gram = gram - lower_gram(held);
      SplitDesign train{GramSpectrum::from_gram(train_gram, n_train), all.cross - held.transpose() * held_y,
                        all.sum_squares - held_y.colwise().squaredNorm().transpose()};
      const CorrelationShiftTerms corr = correlation_core(train, all, held, held_y, options.evidence);
      const Gaussian g = fit_gaussian(col_sum - held.colwise().sum().transpose(), train_gram, n_train,
                                      options.jitter_scale);
      const ShiftTerms cov = gaussian_log_pdf(g, held);

      DomainSplitScore split;
      split.held_out_domain = dom;
      split.corr_total = corr.total;
      split.cov_total = cov.total;
      split.corr_per_sample = corr.per_sample;
      split.cov_per_sample = cov.per_sample;
      split.evidence_warning = corr.evidence_warning;
      pooled_corr.insert(pooled_corr.end(), corr.per_sample.begin(), corr.per_sample.end());
      pooled_cov.insert(pooled_cov.end(), cov.per_sample.begin(), cov.per_sample.end());
      out.splits.push_back(std::move(split));
    } catch (const Error& e) {
      throw e.with_context("model '" + model_id + "', domain " + std::to_string(dom) + ": ");
    }
  }

  const double sd_cov = sample_std(pooled_cov);
  out.lambda = sd_cov > 0.0 ? sample_std(pooled_corr) / sd_cov : 0.0;
  double acc = 0.0;
  for (const auto& s : out.splits) {
    if (options.normalization == ScoreNormalization::PerSample) {
      const double size = static_cast<double>(s.cov_per_sample.size());
      acc += s.corr_total / size + out.lambda * s.cov_per_sample.mean();
    } else {
      acc += s.corr_total + out.lambda * s.cov_total;
    }
  }
  out.score = acc / static_cast<double>(out.splits.size());
  if (!std::isfinite(out.score)) throw Error(Errc::NonFinite, "model '" + model_id + "': score is not finite");
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

std::vector<ZoodScore> rank_zoo(const std::vector<FeatureBundle>& zoo, const RankingOptions& options, int jobs) {
  if (zoo.empty()) throw Error(Errc::InvalidArgument, "zoo is empty");
  for (const auto& b : zoo) {
    if (!same_samples(zoo.front(), b)) {
      throw Error(Errc::InconsistentBundles,
                  "model '" + b.model_id + "': labels/domains differ from '" + zoo.front().model_id + "'");
    }
  }
  std::vector<ZoodScore> scores(zoo.size());
  std::vector<std::exception_ptr> failures(zoo.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < zoo.size(); i = next++) {
      try {
        scores[i] = zood_score(MultiDomainDataset::from_bundle(zoo[i]), zoo[i].model_id, options);
      } catch (...) {
        failures[i] = std::current_exception();
      }
    }
  };
  const auto workers = static_cast<std::size_t>(std::clamp<int>(jobs, 1, static_cast<int>(zoo.size())));
  {
    std::vector<std::jthread> pool;
    for (std::size_t t = 1; t < workers; ++t) pool.emplace_back(worker);
    worker();
  }
  for (const auto& f : failures) {
    if (f) std::rethrow_exception(f);
  }
  std::sort(scores.begin(), scores.end(), [](const ZoodScore& a, const ZoodScore& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.model_id < b.model_id;
  });
  return scores;
}

}  // namespace zood
