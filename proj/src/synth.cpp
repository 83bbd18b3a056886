#include "zood/synth.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "zood/rng.hpp"

namespace zood {
namespace {

MatrixXd normal_matrix(NormalSource& rng, Index rows, Index cols, double scale = 1.0) {
  MatrixXd m(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    for (Index j = 0; j < cols; ++j) m(i, j) = scale * rng();
  }
  return m;
}

// Least squares on a Gram system, with the ridge fallback for rank-deficient designs.
VectorXd solve_normal_equations(const MatrixXd& gram, const VectorXd& cross) {
  Eigen::LLT<MatrixXd> llt(gram);
  if (llt.info() == Eigen::Success) return llt.solve(cross);
  const double ridge = 1e-8 * std::max(gram.trace() / static_cast<double>(gram.rows()), 1.0);
  MatrixXd shifted = gram;
  shifted.diagonal().array() += ridge;
  llt.compute(shifted);
  if (llt.info() != Eigen::Success) throw Error(Errc::SingularFit, "least squares failed even with ridge");
  return llt.solve(cross);
}

struct DomainBlock {
  Index begin = 0;
  Index size = 0;
};

std::vector<DomainBlock> domain_blocks(const InvariantDataset& ds) {
  std::vector<DomainBlock> blocks(static_cast<std::size_t>(ds.domain_count));
  for (Index i = 0; i < ds.domains.size(); ++i) {
    auto& b = blocks[static_cast<std::size_t>(ds.domains[i])];
    if (b.size == 0) b.begin = i;
    ++b.size;
  }
  return blocks;
}

void check_subset(const std::vector<int>& subset, Index d) {
  if (subset.empty()) throw Error(Errc::InvalidArgument, "subset is empty");
  for (int j : subset) {
    if (j < 0 || j >= d) throw Error(Errc::RangeViolation, "subset index " + std::to_string(j) + " out of range");
  }
}

// Losses this close are treated as ties; redundant all-zero columns differ only by rounding.
constexpr double kTieRelTol = 1e-10;

bool smaller_subset(const SubsetLoss& a, const SubsetLoss& b) {
  if (a.subset.size() != b.subset.size()) return a.subset.size() < b.subset.size();
  return a.subset < b.subset;
}

}  // namespace

void RegressionSpec::validate() const {
  if (d < 1 || k < 1 || k > d || n < 1) throw Error(Errc::InvalidArgument, "regression spec needs 1 <= k <= d, n >= 1");
}

RegressionData gen_regression(const RegressionSpec& spec) {
  spec.validate();
  NormalSource xs(spec.seed, stream_id(StreamTag::Regression));
  NormalSource coef(spec.seed, stream_id(StreamTag::Coefficients));
  NormalSource noise(spec.seed, stream_id(StreamTag::LabelNoise));
  RegressionData out;
  out.data.features = normal_matrix(xs, spec.n, spec.d);
  out.coefficients = VectorXd::Zero(spec.d);
  for (int j = 0; j < spec.k; ++j) out.coefficients[j] = coef.uniform(1.0, 3.0);
  out.data.targets = out.data.features * out.coefficients;
  for (int i = 0; i < spec.n; ++i) out.data.targets[i] += noise();
  out.truth.assign(static_cast<std::size_t>(spec.d), false);
  std::fill(out.truth.begin(), out.truth.begin() + spec.k, true);
  return out;
}

void InvariantDomainSpec::validate() const {
  if (d_star < 1 || d_star >= d) throw Error(Errc::InvalidArgument, "need 1 <= d_star < d");
  if (m_dom < 2) throw Error(Errc::InvalidArgument, "need at least 2 domains");
  if (n_per < 1) throw Error(Errc::InvalidArgument, "n_per must be positive");
  if (!(s2 >= 0.0) || !(sigma2 > 0.0)) throw Error(Errc::InvalidArgument, "need s2 >= 0 and sigma2 > 0");
  if (beta_iv && beta_iv->size() != d_star) throw Error(Errc::DimensionMismatch, "beta_iv length != d_star");
}

InvariantDataset gen_multidomain(const InvariantDomainSpec& spec) {
  spec.validate();
  const int d_sp = spec.d - spec.d_star;
  InvariantDataset out;
  out.domain_count = spec.m_dom;
  out.features.resize(static_cast<Index>(spec.m_dom) * spec.n_per, spec.d);
  out.response.resize(out.features.rows());
  out.domains.resize(out.features.rows());
  if (spec.beta_iv) {
    out.beta_iv = *spec.beta_iv;
  } else {
    NormalSource coef(spec.seed, stream_id(StreamTag::Coefficients));
    out.beta_iv.resize(spec.d_star);
    for (int j = 0; j < spec.d_star; ++j) out.beta_iv[j] = coef.uniform(1.0, 3.0);
  }
  const double s = std::sqrt(spec.s2);
  const double sigma = std::sqrt(spec.sigma2);
  for (int dom = 0; dom < spec.m_dom; ++dom) {
    const auto tag = static_cast<std::uint64_t>(dom);
    NormalSource rows(spec.seed, stream_id(StreamTag::InvariantRows, tag));
    NormalSource mixing(spec.seed, stream_id(StreamTag::Mixing, tag));
    NormalSource spurious(spec.seed, stream_id(StreamTag::SpuriousNoise, tag));
    NormalSource label(spec.seed, stream_id(StreamTag::LabelNoise, tag));
    const MatrixXd x_iv = normal_matrix(rows, spec.n_per, spec.d_star);
    const MatrixXd a = spec.zero_mixing ? MatrixXd::Zero(spec.d_star, d_sp) : normal_matrix(mixing, spec.d_star, d_sp);
    const MatrixXd x_d = x_iv * a + normal_matrix(spurious, spec.n_per, d_sp, s);
    const Index begin = static_cast<Index>(dom) * spec.n_per;
    out.features.block(begin, 0, spec.n_per, spec.d_star) = x_iv;
    out.features.block(begin, spec.d_star, spec.n_per, d_sp) = x_d;
    out.response.segment(begin, spec.n_per) = x_iv * out.beta_iv;
    for (int i = 0; i < spec.n_per; ++i) out.response[begin + i] += sigma * label();
    out.domains.segment(begin, spec.n_per).setConstant(dom);
    out.mixing.push_back(a);
  }
  out.invariant.assign(static_cast<std::size_t>(spec.d), false);
  std::fill(out.invariant.begin(), out.invariant.begin() + spec.d_star, true);
  return out;
}

MultiDomainDataset InvariantDataset::classification(int class_count) const {
  if (class_count < 2) throw Error(Errc::InvalidArgument, "class_count must be >= 2");
  std::vector<double> sorted(response.data(), response.data() + response.size());
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> cuts;
  for (int c = 1; c < class_count; ++c) {
    cuts.push_back(sorted[static_cast<std::size_t>(c) * sorted.size() / static_cast<std::size_t>(class_count)]);
  }
  MultiDomainDataset out{features, Eigen::VectorXi(response.size()), domains, class_count, domain_count};
  for (Index i = 0; i < response.size(); ++i) {
    out.labels[i] = static_cast<int>(std::upper_bound(cuts.begin(), cuts.end(), response[i]) - cuts.begin());
  }
  return out;
}

double subset_cv_loss(const InvariantDataset& dataset, const std::vector<int>& subset) {
  check_subset(subset, dataset.features.cols());
  const auto blocks = domain_blocks(dataset);
  const std::vector<Index> cols(subset.begin(), subset.end());
  std::vector<VectorXd> coef;
  for (const auto& b : blocks) {
    if (static_cast<Index>(subset.size()) >= b.size) {
      throw Error(Errc::InvalidArgument, "subset size must be below every domain size");
    }
    const MatrixXd x = dataset.features.middleRows(b.begin, b.size)(Eigen::all, cols);
    coef.push_back(solve_normal_equations(x.transpose() * x, x.transpose() * dataset.response.segment(b.begin, b.size)));
  }
  double total = 0.0;
  int pairs = 0;
  for (std::size_t train = 0; train < blocks.size(); ++train) {
    for (std::size_t val = 0; val < blocks.size(); ++val) {
      if (train == val) continue;
      const auto& b = blocks[val];
      const MatrixXd x = dataset.features.middleRows(b.begin, b.size)(Eigen::all, cols);
      total += (dataset.response.segment(b.begin, b.size) - x * coef[train]).squaredNorm() / static_cast<double>(b.size);
      ++pairs;
    }
  }
  return total / pairs;
}

std::vector<SubsetLoss> all_subset_losses(const InvariantDataset& dataset, int max_d) {
  const Index d = dataset.features.cols();
  if (d > max_d || d > 20) {
    throw Error(Errc::TooLarge, "exhaustive search over d=" + std::to_string(d) + " exceeds max_d=" +
                                    std::to_string(max_d));
  }
  const auto blocks = domain_blocks(dataset);
  std::vector<MatrixXd> grams;
  std::vector<VectorXd> cross;
  std::vector<double> yy;
  for (const auto& b : blocks) {
    const auto x = dataset.features.middleRows(b.begin, b.size);
    const auto y = dataset.response.segment(b.begin, b.size);
    grams.push_back(x.transpose() * x);
    cross.push_back(x.transpose() * y);
    yy.push_back(y.squaredNorm());
  }
  std::vector<SubsetLoss> out;
  for (std::uint32_t mask = 1; mask < (1U << d); ++mask) {
    SubsetLoss entry;
    for (int j = 0; j < d; ++j) {
      if (mask & (1U << j)) entry.subset.push_back(j);
    }
    const std::vector<Index> idx(entry.subset.begin(), entry.subset.end());
    double total = 0.0;
    int pairs = 0;
    for (std::size_t train = 0; train < blocks.size(); ++train) {
      if (static_cast<Index>(idx.size()) >= blocks[train].size) {
        throw Error(Errc::InvalidArgument, "subset size must be below every domain size");
      }
      const VectorXd coef = solve_normal_equations(grams[train](idx, idx), cross[train](idx));
      for (std::size_t val = 0; val < blocks.size(); ++val) {
        if (val == train) continue;
        const double sse = yy[val] - 2.0 * coef.dot(cross[val](idx)) + coef.dot(grams[val](idx, idx) * coef);
        total += sse / static_cast<double>(blocks[val].size);
        ++pairs;
      }
    }
    entry.loss = total / pairs;
    out.push_back(std::move(entry));
  }
  return out;
}

std::vector<int> exhaustive_subset_argmin(const InvariantDataset& dataset, int max_d) {
  const auto losses = all_subset_losses(dataset, max_d);
  double best = std::numeric_limits<double>::infinity();
  for (const auto& entry : losses) best = std::min(best, entry.loss);
  const SubsetLoss* pick = nullptr;
  for (const auto& entry : losses) {
    if (entry.loss > best + kTieRelTol * std::abs(best)) continue;
    if (!pick || smaller_subset(entry, *pick)) pick = &entry;
  }
  return pick->subset;
}

SyntheticZoo gen_synthetic_zoo(const SyntheticZooSpec& spec) {
  if (spec.members.empty()) throw Error(Errc::InvalidArgument, "synthetic zoo has no members");
  SyntheticZoo zoo;
  zoo.source = gen_multidomain(spec.data);
  const MultiDomainDataset labelled = zoo.source.classification(spec.class_count);
  const Index n = zoo.source.features.rows();
  const int d_star = spec.data.d_star;
  const int d_sp = spec.data.d - d_star;
  const MatrixXd x_iv = zoo.source.features.leftCols(d_star);
  const MatrixXd x_d = zoo.source.features.rightCols(d_sp);
  for (std::size_t k = 0; k < spec.members.size(); ++k) {
    const ZooMember& member = spec.members[k];
    if (member.informative_width < 0 || member.noise_width < 0 ||
        member.informative_width + member.noise_width < 1) {
      throw Error(Errc::InvalidArgument, "zoo member '" + member.model_id + "' has no columns");
    }
    NormalSource rng(spec.data.seed, stream_id(StreamTag::ZooFeatures, k));
    const int w = member.informative_width;
    MatrixXd informative(n, w);
    auto mix = [&](const MatrixXd& source) -> MatrixXd {
      std::vector<Index> cols(member.latent.begin(), member.latent.end());
      if (cols.empty()) {
        cols.resize(static_cast<std::size_t>(source.cols()));
        std::iota(cols.begin(), cols.end(), Index{0});
      }
      for (Index c : cols) {
        if (c < 0 || c >= source.cols()) {
          throw Error(Errc::RangeViolation, "zoo member '" + member.model_id + "' reads a missing latent column");
        }
      }
      const auto k = static_cast<Index>(cols.size());
      return source(Eigen::all, cols) * normal_matrix(rng, k, w, 1.0 / std::sqrt(static_cast<double>(k)));
    };
    switch (member.kind) {
      case ZooMemberKind::Invariant:
        informative = mix(x_iv);
        break;
      case ZooMemberKind::Spurious:
        informative = mix(x_d);
        break;
      case ZooMemberKind::Noise:
        informative = normal_matrix(rng, n, w);
        break;
    }
    if (member.feature_noise > 0.0) informative += normal_matrix(rng, n, w, member.feature_noise);
    FeatureBundle b;
    b.model_id = member.model_id;
    b.features.resize(n, w + member.noise_width);
    b.features << informative, normal_matrix(rng, n, member.noise_width);
    b.labels = labelled.labels;
    b.domains = labelled.domains;
    b.class_count = labelled.class_count;
    b.domain_count = labelled.domain_count;
    zoo.bundles.push_back(std::move(b));
  }
  return zoo;
}

}  // namespace zood
