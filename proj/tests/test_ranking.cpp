#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <random>

#include <doctest.h>

#include "oracles.hpp"
#include "zood/ranking.hpp"
#include "zood/synth.hpp"

using namespace zood;

namespace {

// Two-class data whose class means differ by `gap` along every feature.
MultiDomainDataset separable(std::mt19937_64& gen, int per_domain, int domains, int d, double gap) {
  std::normal_distribution<double> z;
  const int n = per_domain * domains;
  MultiDomainDataset ds{MatrixXd(n, d), Eigen::VectorXi(n), Eigen::VectorXi(n), 2, domains};
  for (int i = 0; i < n; ++i) {
    ds.labels[i] = i % 2;
    ds.domains[i] = i / per_domain;
    for (int j = 0; j < d; ++j) ds.features(i, j) = z(gen) + (ds.labels[i] ? gap : 0.0);
  }
  return ds;
}

SyntheticZooSpec two_member_zoo(std::uint64_t seed) {
  SyntheticZooSpec s;
  s.data.d = 8;
  s.data.d_star = 3;
  s.data.m_dom = 3;
  s.data.n_per = 500;
  s.data.seed = seed;
  s.members = {{"invariant", ZooMemberKind::Invariant, 16, 0, 0.1, {}},
               {"spurious", ZooMemberKind::Spurious, 16, 0, 0.1, {}}};
  return s;
}

Errc code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return Errc::IoError;
}

}  // namespace

TEST_CASE("covariate shift matches a dense Gaussian log-density") {
  std::mt19937_64 gen(3);
  const MatrixXd train = oracle::random_matrix(gen, 200, 3);
  const MatrixXd held = oracle::random_matrix(gen, 40, 3);
  const double jitter = 1e-6;
  const ShiftTerms terms = covariate_shift(train, held, jitter);

  const VectorXd mu = train.colwise().mean().transpose();
  const MatrixXd centered = train.rowwise() - mu.transpose();
  MatrixXd cov = centered.transpose() * centered / 200.0;
  cov.diagonal().array() += jitter * cov.trace() / 3.0;
  REQUIRE(terms.per_sample.size() == 40);
  for (int i = 0; i < 40; ++i) {
    CHECK(terms.per_sample[i] == doctest::Approx(oracle::gaussian_log_pdf(held.row(i).transpose(), mu, cov)).epsilon(1e-10));
  }
  CHECK(terms.total == doctest::Approx(terms.per_sample.sum()).epsilon(1e-12));
}

TEST_CASE("covariate shift penalizes a translated held-out domain") {
  std::mt19937_64 gen(5);
  const MatrixXd train = oracle::random_matrix(gen, 1000, 3);
  const MatrixXd shifted = (train.array() + 10.0).matrix();
  const double same = covariate_shift(train, train).total;
  const double moved = covariate_shift(train, shifted).total;
  CHECK(moved < same - 10.0 * 1000);
}

TEST_CASE("covariate shift edge cases") {
  std::mt19937_64 gen(1);
  const MatrixXd train = oracle::random_matrix(gen, 10, 2);
  const ShiftTerms empty = covariate_shift(train, MatrixXd(0, 2));
  CHECK(empty.total == 0.0);
  CHECK(empty.per_sample.size() == 0);
  CHECK(code_of([&] { covariate_shift(train, MatrixXd(3, 4)); }) == Errc::DimensionMismatch);

  MatrixXd flat(6, 2);
  flat << 1, 2, 2, 2, 3, 2, 1, 2, 2, 2, 4, 2;
  CHECK(code_of([&] { covariate_shift(flat, flat, 0.0); }) == Errc::CovarianceDegenerate);
  CHECK_NOTHROW(covariate_shift(flat, flat));
}

TEST_CASE("correlation shift total is the evidence ratio at the training optimum") {
  std::mt19937_64 gen(11);
  const MatrixXd train_x = oracle::random_matrix(gen, 80, 3);
  const MatrixXd held_x = oracle::random_matrix(gen, 30, 3);
  const VectorXd w = oracle::random_vector(gen, 3);
  const VectorXd train_y = train_x * w + 0.5 * oracle::random_vector(gen, 80);
  const VectorXd held_y = held_x * w + 0.5 * oracle::random_vector(gen, 30);

  const CorrelationShiftTerms terms = correlation_shift(train_x, train_y, held_x, held_y);
  const EvidenceFit fit = fit_evidence(DesignPair{train_x, train_y});
  MatrixXd all_x(110, 3);
  all_x << train_x, held_x;
  VectorXd all_y(110);
  all_y << train_y, held_y;
  const double ratio = oracle::marginal_evidence(all_x, all_y, fit.alpha, fit.beta) -
                       oracle::marginal_evidence(train_x, train_y, fit.alpha, fit.beta);
  CHECK(terms.total == doctest::Approx(ratio).epsilon(1e-8));
  CHECK(terms.per_class_total.size() == 1);
  CHECK_FALSE(terms.evidence_warning);

  // Per-sample values are marginal predictive densities, not a split of the total.
  const VectorXd mean = held_x * fit.post_mean;
  const VectorXd var = oracle::dense_predictive_variance(train_x, fit.alpha, fit.beta, held_x);
  for (int i = 0; i < 30; ++i) {
    const double expected = -0.5 * (std::log(2 * M_PI * var[i]) + std::pow(held_y[i] - mean[i], 2) / var[i]);
    CHECK(terms.per_sample[i] == doctest::Approx(expected).epsilon(1e-10));
  }
  CHECK(std::abs(terms.per_sample.sum() - terms.total) > 1e-6);
}

TEST_CASE("correlation shift sums over target columns") {
  std::mt19937_64 gen(2);
  const MatrixXd tx = oracle::random_matrix(gen, 60, 2);
  const MatrixXd hx = oracle::random_matrix(gen, 20, 2);
  const MatrixXd ty = tx * oracle::random_matrix(gen, 2, 3) + oracle::random_matrix(gen, 60, 3);
  const MatrixXd hy = hx * oracle::random_matrix(gen, 2, 3) + oracle::random_matrix(gen, 20, 3);
  const CorrelationShiftTerms joint = correlation_shift(tx, ty, hx, hy);
  double total = 0.0;
  VectorXd per_sample = VectorXd::Zero(20);
  for (int c = 0; c < 3; ++c) {
    const CorrelationShiftTerms one = correlation_shift(tx, ty.col(c), hx, hy.col(c));
    CHECK(joint.per_class_total[c] == doctest::Approx(one.total).epsilon(1e-12));
    total += one.total;
    per_sample += one.per_sample;
  }
  CHECK(joint.total == doctest::Approx(total).epsilon(1e-12));
  CHECK((joint.per_sample - per_sample).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("correlation shift penalizes a flipped relationship") {
  std::mt19937_64 gen(8);
  const MatrixXd tx = oracle::random_matrix(gen, 200, 1);
  const MatrixXd hx = oracle::random_matrix(gen, 200, 1);
  const VectorXd noise_t = 0.3 * oracle::random_vector(gen, 200);
  const VectorXd noise_h = 0.3 * oracle::random_vector(gen, 200);
  const VectorXd ty = 2.0 * tx.col(0) + noise_t;
  const double same = correlation_shift(tx, ty, hx, VectorXd(2.0 * hx.col(0) + noise_h)).total;
  const double flipped = correlation_shift(tx, ty, hx, VectorXd(-2.0 * hx.col(0) + noise_h)).total;
  CHECK(flipped < same);
}

TEST_CASE("permuting held-out labels never raises the correlation total") {
  std::mt19937_64 gen(21);
  for (int trial = 0; trial < 50; ++trial) {
    const MultiDomainDataset ds = separable(gen, 100, 2, 3, 2.0);
    const MatrixXd y = one_hot(ds.labels, 2);
    const MatrixXd tx = ds.features.topRows(100), hx = ds.features.bottomRows(100);
    const MatrixXd ty = y.topRows(100), hy = y.bottomRows(100);
    std::vector<int> perm(100);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), gen);
    const MatrixXd shuffled = hy(perm, Eigen::all);
    CHECK(correlation_shift(tx, ty, hx, shuffled).total <= correlation_shift(tx, ty, hx, hy).total);
  }
}

TEST_CASE("zood score recombines the split terms") {
  std::mt19937_64 gen(4);
  const MultiDomainDataset ds = separable(gen, 60, 3, 4, 1.0);
  for (auto mode : {ScoreNormalization::PerSample, ScoreNormalization::Total}) {
    RankingOptions opts;
    opts.normalization = mode;
    const ZoodScore s = zood_score(ds, "m", opts);
    REQUIRE(s.splits.size() == 3);
    std::vector<double> corr, cov;
    double expected = 0.0;
    for (const auto& split : s.splits) {
      CHECK(split.corr_per_sample.size() == 60);
      CHECK(split.cov_total == doctest::Approx(split.cov_per_sample.sum()).epsilon(1e-12));
      corr.insert(corr.end(), split.corr_per_sample.begin(), split.corr_per_sample.end());
      cov.insert(cov.end(), split.cov_per_sample.begin(), split.cov_per_sample.end());
    }
    auto sd = [](const std::vector<double>& v) {
      const double m = std::accumulate(v.begin(), v.end(), 0.0) / v.size();
      double q = 0;
      for (double x : v) q += (x - m) * (x - m);
      return std::sqrt(q / (v.size() - 1));
    };
    CHECK(s.lambda == doctest::Approx(sd(corr) / sd(cov)).epsilon(1e-12));
    for (const auto& split : s.splits) {
      expected += mode == ScoreNormalization::PerSample
                      ? split.corr_total / 60.0 + s.lambda * split.cov_per_sample.mean()
                      : split.corr_total + s.lambda * split.cov_total;
    }
    CHECK(s.score == doctest::Approx(expected / 3.0).epsilon(1e-12));
    CHECK(s.normalization == mode);
  }
}

TEST_CASE("split terms agree with the standalone shift functions") {
  std::mt19937_64 gen(6);
  const MultiDomainDataset ds = separable(gen, 50, 2, 3, 1.5);
  const ZoodScore s = zood_score(ds, "m");
  const MatrixXd y = one_hot(ds.labels, 2);
  const CorrelationShiftTerms corr =
      correlation_shift(ds.features.bottomRows(50), y.bottomRows(50), ds.features.topRows(50), y.topRows(50));
  const ShiftTerms cov = covariate_shift(ds.features.bottomRows(50), ds.features.topRows(50));
  CHECK(s.splits[0].held_out_domain == 0);
  CHECK(s.splits[0].corr_total == doctest::Approx(corr.total).epsilon(1e-9));
  CHECK(s.splits[0].cov_total == doctest::Approx(cov.total).epsilon(1e-9));
}

TEST_CASE("shuffled held-out labels lower the score of duplicated domains") {
  std::mt19937_64 gen(12);
  MultiDomainDataset ds = separable(gen, 200, 1, 3, 2.0);
  ds.features = ds.features.replicate(2, 1).eval();
  ds.labels = ds.labels.replicate(2, 1).eval();
  ds.domains = (Eigen::VectorXi(400) << Eigen::VectorXi::Zero(200), Eigen::VectorXi::Ones(200)).finished();
  ds.domain_count = 2;
  MultiDomainDataset shuffled = ds;
  std::vector<int> perm(200);
  std::iota(perm.begin(), perm.end(), 200);
  std::shuffle(perm.begin(), perm.end(), gen);
  for (int i = 0; i < 200; ++i) shuffled.labels[200 + i] = ds.labels[perm[i]];
  CHECK(zood_score(ds, "a").score > zood_score(shuffled, "a").score);
}

TEST_CASE("zood score preconditions") {
  std::mt19937_64 gen(1);
  MultiDomainDataset ds = separable(gen, 20, 2, 2, 1.0);
  MultiDomainDataset one = ds;
  one.domain_count = 1;
  one.domains.setZero();
  CHECK(code_of([&] { zood_score(one, "x"); }) == Errc::TooFewDomains);
  MultiDomainDataset gap = ds;
  gap.domain_count = 3;
  CHECK(code_of([&] { zood_score(gap, "x"); }) == Errc::TooFewDomains);
  MultiDomainDataset bad = ds;
  bad.labels[0] = 5;
  CHECK(code_of([&] { zood_score(bad, "x"); }) == Errc::RangeViolation);
  MultiDomainDataset flat = ds;
  flat.features.setConstant(1.0);
  CHECK(code_of([&] { zood_score(flat, "x"); }) == Errc::InvalidArgument);
}

TEST_CASE("constant columns are dropped before scoring") {
  std::mt19937_64 gen(9);
  const MultiDomainDataset ds = separable(gen, 40, 2, 3, 1.0);
  MultiDomainDataset padded = ds;
  padded.features.conservativeResize(Eigen::NoChange, 4);
  padded.features.col(3).setConstant(7.0);
  const ZoodScore a = zood_score(ds, "m"), b = zood_score(padded, "m");
  CHECK(b.dropped_columns == 1);
  CHECK(a.dropped_columns == 0);
  CHECK(b.score == a.score);
}

TEST_CASE("scores are deterministic and invariant to row order within domains") {
  std::mt19937_64 gen(15);
  const MultiDomainDataset ds = separable(gen, 80, 3, 4, 1.0);
  const ZoodScore a = zood_score(ds, "m");
  CHECK(zood_score(ds, "m").score == a.score);

  std::vector<int> order;
  for (int dom = 0; dom < 3; ++dom) {
    std::vector<int> block(80);
    std::iota(block.begin(), block.end(), dom * 80);
    std::shuffle(block.begin(), block.end(), gen);
    order.insert(order.end(), block.begin(), block.end());
  }
  MultiDomainDataset permuted = ds;
  permuted.features = ds.features(order, Eigen::all);
  permuted.labels = ds.labels(order);
  permuted.domains = ds.domains(order);
  CHECK(std::abs(zood_score(permuted, "m").score - a.score) < 1e-9);
}

TEST_CASE("lambda is nonnegative and finite") {
  std::mt19937_64 gen(30);
  for (int trial = 0; trial < 20; ++trial) {
    const ZoodScore s = zood_score(separable(gen, 30, 2, 1 + trial % 4, 0.2 * trial), "m");
    CHECK(s.lambda >= 0.0);
    CHECK(std::isfinite(s.lambda));
  }
}

TEST_CASE("invariant extractor outranks a spurious one") {
  int wins = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const SyntheticZoo zoo = gen_synthetic_zoo(two_member_zoo(seed));
    wins += rank_zoo(zoo.bundles).front().model_id == "invariant";
  }
  CHECK(wins >= 95);
}

TEST_CASE("informative extractor outranks pure noise") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    SyntheticZooSpec spec = two_member_zoo(seed);
    spec.members[1] = {"noise", ZooMemberKind::Noise, 16, 0, 0.0, {}};
    CHECK(rank_zoo(gen_synthetic_zoo(spec).bundles).front().model_id == "invariant");
  }
}

TEST_CASE("common feature scaling shifts only the covariate terms") {
  // Evidence terms are scale free; each Gaussian log-density moves by -d log c.
  const double c = 25.0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    SyntheticZooSpec spec = two_member_zoo(seed);
    spec.members.push_back({"noise", ZooMemberKind::Noise, 8, 0, 0.0, {}});
    spec.members.push_back({"mixed", ZooMemberKind::Invariant, 4, 4, 0.3, {}});
    const SyntheticZoo zoo = gen_synthetic_zoo(spec);
    std::vector<FeatureBundle> scaled = zoo.bundles;
    for (auto& b : scaled) b.features *= c;
    for (size_t m = 0; m < zoo.bundles.size(); ++m) {
      const ZoodScore a = zood_score(MultiDomainDataset::from_bundle(zoo.bundles[m]), "m");
      const ZoodScore b = zood_score(MultiDomainDataset::from_bundle(scaled[m]), "m");
      const double shift = -static_cast<double>(zoo.bundles[m].width()) * std::log(c);
      CHECK(b.lambda == doctest::Approx(a.lambda).epsilon(1e-6));
      for (size_t k = 0; k < a.splits.size(); ++k) {
        CHECK(b.splits[k].corr_total == doctest::Approx(a.splits[k].corr_total).epsilon(1e-6));
        CHECK((b.splits[k].cov_per_sample.array() - a.splits[k].cov_per_sample.array() - shift).abs().maxCoeff() < 1e-6);
      }
    }
    RankingOptions opts;
    opts.standardize = true;
    const auto ra = rank_zoo(zoo.bundles, opts), rb = rank_zoo(scaled, opts);
    for (size_t k = 0; k < ra.size(); ++k) CHECK(ra[k].model_id == rb[k].model_id);
  }
}

TEST_CASE("rank_zoo ordering, ties and parallelism") {
  const SyntheticZoo zoo = gen_synthetic_zoo(two_member_zoo(1));
  const auto single = rank_zoo({zoo.bundles[1]});
  REQUIRE(single.size() == 1);
  CHECK(single[0].model_id == "spurious");

  FeatureBundle b = zoo.bundles[0], a = zoo.bundles[0];
  b.model_id = "b";
  a.model_id = "a";
  const auto tied = rank_zoo({b, a});
  CHECK(tied[0].score == tied[1].score);
  CHECK(tied[0].model_id == "a");

  SyntheticZooSpec spec = two_member_zoo(2);
  for (int k = 0; k < 6; ++k) {
    spec.members.push_back({"extra" + std::to_string(k), k % 2 ? ZooMemberKind::Spurious : ZooMemberKind::Invariant,
                            4 + k, k, 0.2, {}});
  }
  const SyntheticZoo big = gen_synthetic_zoo(spec);
  const auto serial = rank_zoo(big.bundles, {}, 1);
  const auto parallel = rank_zoo(big.bundles, {}, 4);
  REQUIRE(serial.size() == 8);
  for (size_t k = 0; k < serial.size(); ++k) {
    CHECK(serial[k].model_id == parallel[k].model_id);
    CHECK(serial[k].score == parallel[k].score);
    if (k > 0) CHECK(serial[k - 1].score >= serial[k].score);
  }
}

TEST_CASE("rank_zoo rejects mismatched bundles and reports failing models") {
  const SyntheticZoo zoo = gen_synthetic_zoo(two_member_zoo(3));
  FeatureBundle other = zoo.bundles[1];
  other.labels[0] = 1 - other.labels[0];
  CHECK(code_of([&] { rank_zoo({zoo.bundles[0], other}); }) == Errc::InconsistentBundles);
  CHECK(code_of([&] { rank_zoo({}); }) == Errc::InvalidArgument);

  FeatureBundle flat = zoo.bundles[1];
  flat.model_id = "flat";
  flat.features.setZero();
  try {
    rank_zoo({zoo.bundles[0], flat}, {}, 2);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("flat") != std::string::npos);
  }
}

TEST_CASE("standardization makes scores scale free") {
  std::mt19937_64 gen(40);
  const MultiDomainDataset ds = separable(gen, 50, 2, 3, 1.0);
  MultiDomainDataset scaled = ds;
  scaled.features.col(1) *= 1000.0;
  RankingOptions opts;
  opts.standardize = true;
  CHECK(zood_score(scaled, "m", opts).score == doctest::Approx(zood_score(ds, "m", opts).score).epsilon(1e-9));
}
