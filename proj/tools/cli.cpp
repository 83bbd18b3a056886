#include "cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>

#include "zood/error.hpp"
#include "zood/io.hpp"
#include "zood/metrics.hpp"

namespace zood::cli {

using nlohmann::json;

namespace {

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

int exit_code(Errc code) {
  if (is_io_error(code)) return kIo;
  switch (code) {
    case Errc::InvalidArgument:
    case Errc::DimensionMismatch:
    case Errc::RangeViolation:
    case Errc::TooFewDomains:
    case Errc::InconsistentBundles:
    case Errc::UnknownDataset:
    case Errc::UnknownMethod:
    case Errc::TooLarge:
      return kValidation;
    default:
      return kOther;
  }
}

const FeatureBundle& find_bundle(const std::vector<FeatureBundle>& zoo, const std::string& id) {
  for (const auto& b : zoo) {
    if (b.model_id == id) return b;
  }
  throw Error(Errc::InvalidArgument, "no bundle for model '" + id + "'");
}

struct Standardizer {
  Eigen::RowVectorXd mean, scale;

  explicit Standardizer(const MatrixXd& x) {
    mean = x.colwise().mean();
    scale = ((x.rowwise() - mean).array().square().colwise().sum() / static_cast<double>(x.rows())).sqrt();
    for (Index j = 0; j < scale.size(); ++j) {
      if (!(scale[j] > 0.0)) scale[j] = 1.0;
    }
  }

  MatrixXd operator()(const MatrixXd& x) const {
    return (x.rowwise() - mean).array().rowwise() / scale.array();
  }
};

// Centered one-hot targets in units of the least-squares residual deviation.
MatrixXd noise_unit_targets(const MatrixXd& xs, const Eigen::VectorXi& labels, int class_count) {
  MatrixXd y = one_hot(labels, class_count);
  y = y.rowwise() - y.colwise().mean();
  const Index n = xs.rows();
  const Index d = xs.cols();
  MatrixXd gram = xs.transpose() * xs;
  gram.diagonal().array() += 1e-6 * std::max(1.0, gram.trace() / static_cast<double>(std::max<Index>(d, 1)));
  const MatrixXd resid = y - xs * gram.llt().solve(xs.transpose() * y);
  const double dof = static_cast<double>(n > d + 1 ? n - d : n);
  for (Index c = 0; c < y.cols(); ++c) {
    const double spread = std::sqrt(y.col(c).squaredNorm() / static_cast<double>(n));
    if (spread == 0.0) continue;
    double sigma = std::sqrt(resid.col(c).squaredNorm() / dof);
    if (!(sigma > 1e-8 * spread)) sigma = spread;
    y.col(c) /= sigma;
  }
  return y;
}

double sample_std(const std::vector<double>& v, double mean) {
  if (v.size() < 2) return 0.0;
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

std::string percent(double x) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(2) << 100.0 * x << '%';
  return os.str();
}

json priors_json(const SelectPriors& p) {
  return {{"pi0", p.pi0},
          {"nu", p.nu},
          {"tau", p.tau},
          {"max_iter", p.max_iter},
          {"batch_size", p.batch_size},
          {"epsilon", p.epsilon},
          {"early_stop", p.early_stop},
          {"seed", p.seed},
          {"update_rule", p.update_rule == UpdateRule::Conjugate ? "conjugate" : "strict"}};
}

void emit(const std::string& text, const std::string& out_path, std::ostream& out) {
  if (out_path.empty()) {
    out << text;
    return;
  }
  std::ofstream f(out_path, std::ios::binary);
  if (!f) throw Error(Errc::IoError, "cannot open '" + out_path + "' for writing");
  f << text;
  if (!f) throw Error(Errc::IoError, "write failed for '" + out_path + "'");
}

}  // namespace

int resolve_jobs(std::optional<int> flag) {
  int jobs = 1;
  if (flag) {
    jobs = *flag;
  } else if (const char* env = std::getenv("ZOOD_JOBS"); env != nullptr && *env != '\0') {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (*end != '\0' || v < 1 || v > 4096) throw Error(Errc::InvalidArgument, "ZOOD_JOBS must be a positive integer");
    jobs = static_cast<int>(v);
  }
  if (jobs < 1) throw Error(Errc::InvalidArgument, "--jobs must be at least 1");
  return jobs;
}

json ranking_json(const std::vector<ZoodScore>& ranking) {
  json models = json::array();
  for (std::size_t r = 0; r < ranking.size(); ++r) {
    const ZoodScore& s = ranking[r];
    json domains = json::array();
    for (const auto& split : s.splits) {
      const auto n = static_cast<double>(split.corr_per_sample.size());
      domains.push_back({{"held_out_domain", split.held_out_domain},
                         {"samples", split.corr_per_sample.size()},
                         {"corr_total", split.corr_total},
                         {"cov_total", split.cov_total},
                         {"cov_mean", n > 0 ? split.cov_per_sample.sum() / n : 0.0},
                         {"evidence_warning", split.evidence_warning}});
    }
    models.push_back({{"rank", r + 1},
                      {"model_id", s.model_id},
                      {"score", s.score},
                      {"lambda", s.lambda},
                      {"dropped_columns", s.dropped_columns},
                      {"seconds", s.seconds},
                      {"evidence_warning", s.evidence_warning()},
                      {"domains", domains}});
  }
  return models;
}

json rank_report(const std::string& dataset, const RankingOptions& options, int jobs,
                 const std::vector<ZoodScore>& ranking, double seconds) {
  return {{"schema_version", kSchemaVersion},
          {"command", "rank"},
          {"dataset", dataset},
          {"score_normalization", std::string(to_string(options.normalization))},
          {"standardize", options.standardize},
          {"jobs", jobs},
          {"seconds", seconds},
          {"models", ranking_json(ranking)}};
}

std::string rank_table(const std::vector<ZoodScore>& ranking) {
  std::ostringstream os;
  os << std::left << std::setw(6) << "rank" << std::setw(24) << "model" << std::right << std::setw(16) << "score"
     << std::setw(14) << "lambda" << std::setw(9) << "dropped" << '\n';
  for (std::size_t r = 0; r < ranking.size(); ++r) {
    const ZoodScore& s = ranking[r];
    os << std::left << std::setw(6) << r + 1 << std::setw(24) << s.model_id << std::right << std::setw(16)
       << std::setprecision(8) << s.score << std::setw(14) << std::setprecision(6) << s.lambda << std::setw(9)
       << s.dropped_columns << (s.evidence_warning() ? "  (evidence warning)" : "") << '\n';
  }
  return os.str();
}

FeatureBundle domain_rows(const FeatureBundle& bundle, int domain, bool keep) {
  if (domain < 0 || domain >= bundle.domain_count) {
    throw Error(Errc::RangeViolation, "domain " + std::to_string(domain) + " outside [0, domain_count)");
  }
  std::vector<Index> rows;
  for (Index i = 0; i < bundle.rows(); ++i) {
    if ((bundle.domains[i] == domain) == keep) rows.push_back(i);
  }
  FeatureBundle out;
  out.model_id = bundle.model_id;
  out.features = bundle.features(rows, Eigen::all);
  out.labels = bundle.labels(rows);
  out.domains = bundle.domains(rows);
  out.class_count = bundle.class_count;
  out.provenance = bundle.provenance;
  if (keep) {
    out.domains.setZero();
    out.domain_count = 1;
  } else {
    for (Index i = 0; i < out.domains.size(); ++i) {
      if (out.domains[i] > domain) --out.domains[i];
    }
    out.domain_count = bundle.domain_count - 1;
  }
  return out;
}

double bic_target_scale(const SelectPriors& priors, Index n) {
  const double slab = priors.nu[2] * priors.nu[3];
  const double spike = priors.nu[4] * priors.nu[5];
  if (!(spike > slab) || n < 3) return 1.0;
  // Equal prior mass at |w| = m: pi0 N(m; 0, 1/slab) = (1 - pi0) N(m; 0, 1/spike).
  const double m2 = (std::log(spike / slab) + 2.0 * std::log((1.0 - priors.pi0) / priors.pi0)) / (spike - slab);
  if (!(m2 > 0.0)) return 1.0;
  const auto rows = static_cast<double>(n);
  return std::sqrt(m2 * rows / std::log(rows));
}

SelectOutcome run_select(const std::vector<FeatureBundle>& zoo, const SelectConfig& config) {
  if (zoo.empty()) throw Error(Errc::InvalidArgument, "empty zoo");
  if (config.top_k < 1 || config.top_k > static_cast<int>(zoo.size())) {
    throw Error(Errc::InvalidArgument, "top_k " + std::to_string(config.top_k) + " outside [1, " +
                                           std::to_string(zoo.size()) + "]");
  }
  if (!(config.ridge >= 0.0)) throw Error(Errc::InvalidArgument, "ridge must be nonnegative");
  config.priors.validate();

  SelectOutcome outcome;
  outcome.holdout_domain = config.holdout_domain;
  const auto training = [&](const FeatureBundle& b) {
    return config.holdout_domain ? domain_rows(b, *config.holdout_domain, false) : b;
  };

  std::vector<FeatureBundle> train_zoo;
  train_zoo.reserve(zoo.size());
  for (const auto& b : zoo) train_zoo.push_back(training(b));
  outcome.ranking = rank_zoo(train_zoo, config.ranking, config.jobs);

  std::vector<FeatureBundle> members;
  for (int k = 0; k < config.top_k; ++k) {
    outcome.ensemble.push_back(outcome.ranking[static_cast<std::size_t>(k)].model_id);
    members.push_back(find_bundle(zoo, outcome.ensemble.back()));
  }
  const FeatureBundle ensemble = concat_features(members);
  const FeatureBundle train = training(ensemble);

  const Standardizer standardize(train.features);
  const MatrixXd xs = standardize(train.features);
  outcome.target_scale = config.target_scale.value_or(bic_target_scale(config.priors, train.rows()));
  if (!(outcome.target_scale > 0.0)) throw Error(Errc::InvalidArgument, "target scale must be positive");
  const MatrixXd ys = outcome.target_scale * noise_unit_targets(xs, train.labels, train.class_count);
  outcome.selection = select_features(xs, ys, config.priors);
  outcome.masked = apply_mask(ensemble, outcome.selection.mask);
  outcome.total_columns = static_cast<int>(ensemble.width());
  outcome.selected_columns = static_cast<int>(outcome.masked.width());
  outcome.f_ratio = static_cast<double>(outcome.selected_columns) / outcome.total_columns;

  if (config.holdout_domain) {
    const FeatureBundle test = domain_rows(ensemble, *config.holdout_domain, true);
    const MatrixXd test_xs = standardize(test.features);
    std::vector<Index> keep;
    for (std::size_t j = 0; j < outcome.selection.mask.size(); ++j) {
      if (outcome.selection.mask[j]) keep.push_back(static_cast<Index>(j));
    }
    const auto score = [&](const MatrixXd& tr, const MatrixXd& te) {
      const RidgeClassifier model = ridge_classifier(tr, train.labels, train.class_count, config.ridge);
      return accuracy(classify(model, te), test.labels);
    };
    outcome.accuracy_all = score(xs, test_xs);
    outcome.accuracy_selected = score(xs(Eigen::all, keep), test_xs(Eigen::all, keep));
  }
  return outcome;
}

json select_report(const SelectConfig& config, const SelectOutcome& outcome) {
  json columns = json::array();
  const auto sources = outcome.masked.column_sources();
  for (const auto& s : sources) columns.push_back({{"model_id", s.model_id}, {"column", s.column}});
  json holdout = nullptr;
  if (outcome.holdout_domain) {
    holdout = {{"domain", *outcome.holdout_domain},
               {"ridge", config.ridge},
               {"accuracy_selected", *outcome.accuracy_selected},
               {"accuracy_all", *outcome.accuracy_all}};
  }
  std::vector<double> prob(outcome.selection.inclusion_prob.data(),
                           outcome.selection.inclusion_prob.data() + outcome.selection.inclusion_prob.size());
  std::vector<int> mask;
  for (bool b : outcome.selection.mask) mask.push_back(b ? 1 : 0);
  return {{"schema_version", kSchemaVersion},
          {"command", "select"},
          {"top_k", config.top_k},
          {"ensemble", outcome.ensemble},
          {"score_normalization", std::string(to_string(config.ranking.normalization))},
          {"ranking", ranking_json(outcome.ranking)},
          {"priors", priors_json(config.priors)},
          {"target_scale", outcome.target_scale},
          {"iterations", outcome.selection.iterations},
          {"early_stopped", outcome.selection.early_stopped},
          {"total_columns", outcome.total_columns},
          {"selected_columns", outcome.selected_columns},
          {"f_ratio", outcome.f_ratio},
          {"inclusion_prob", prob},
          {"mask", mask},
          {"selected", columns},
          {"holdout", holdout}};
}

TprFprSummary simulate_tprfpr(const TprFprSpec& spec) {
  if (spec.reps < 1) throw Error(Errc::InvalidArgument, "reps must be at least 1");
  SelectPriors priors = spec.priors;
  priors.batch_size = spec.ns;
  priors.validate();
  std::vector<double> tpr, fpr;
  for (int r = 0; r < spec.reps; ++r) {
    RegressionSpec rs{spec.d, spec.k, spec.n, spec.seed + static_cast<std::uint64_t>(r)};
    rs.validate();
    const RegressionData data = gen_regression(rs);
    priors.seed = spec.priors.seed + static_cast<std::uint64_t>(r);
    const Rates rates = tpr_fpr(select_features(data.data, priors).mask, data.truth);
    tpr.push_back(rates.tpr);
    fpr.push_back(rates.fpr);
  }
  TprFprSummary s;
  s.reps = spec.reps;
  const auto mean = [](const std::vector<double>& v) {
    double t = 0.0;
    for (double x : v) t += x;
    return t / static_cast<double>(v.size());
  };
  s.tpr_mean = mean(tpr);
  s.fpr_mean = mean(fpr);
  s.tpr_std = sample_std(tpr, s.tpr_mean);
  s.fpr_std = sample_std(fpr, s.fpr_mean);
  std::ostringstream row;
  row << "d=" << spec.d << ", k=" << spec.k << ", n=" << spec.n << ", n^s=" << spec.ns << ": TPR "
      << percent(s.tpr_mean) << "±" << percent(s.tpr_std) << ", FPR " << percent(s.fpr_mean) << "±"
      << percent(s.fpr_std);
  s.row = row.str();
  return s;
}

EvalResult eval_fixture(const std::string& dataset, const std::string& method) {
  const ScoreMethod m = parse_method(method);
  const FixtureTable table = load_fixture(dataset);
  PairedSeries series;
  for (const auto& row : table.rows) {
    if (const auto s = row.score(m)) {
      series.scores.push_back(*s);
      series.targets.push_back(row.accuracy);
    }
  }
  EvalResult r;
  r.dataset = table.dataset_name;
  r.method = std::string(to_string(m));
  r.tau = kendall_tau(series);
  r.tau_w = weighted_kendall_tau(series);
  r.models = static_cast<int>(series.scores.size());
  return r;
}

SyntheticZooSpec zoo_spec(const ZooSimSpec& spec) {
  if (spec.models < 1) throw Error(Errc::InvalidArgument, "zoo needs at least one model");
  if (spec.latent_per_member < 0) throw Error(Errc::InvalidArgument, "latent_per_member must be nonnegative");
  if (spec.noise_members < 0 || spec.noise_members > spec.models) {
    throw Error(Errc::InvalidArgument, "noise_members outside [0, models]");
  }
  SyntheticZooSpec out;
  out.data = spec.data;
  out.class_count = spec.class_count;
  const int informative = spec.models - spec.noise_members;
  for (int i = 0; i < spec.models; ++i) {
    ZooMember m;
    std::ostringstream id;
    if (i >= informative) {
      id << "noise_" << std::setw(2) << std::setfill('0') << i - informative;
      m.kind = ZooMemberKind::Noise;
    } else {
      const bool invariant = i % 2 == 0;
      id << (invariant ? "invariant_" : "spurious_") << std::setw(2) << std::setfill('0') << i / 2;
      m.kind = invariant ? ZooMemberKind::Invariant : ZooMemberKind::Spurious;
      const int source = invariant ? spec.data.d_star : spec.data.d - spec.data.d_star;
      for (int c = 0; c < spec.latent_per_member; ++c) m.latent.push_back((i / 2 * spec.latent_per_member + c) % source);
    }
    m.model_id = id.str();
    m.informative_width = spec.width;
    m.noise_width = spec.noise_width;
    m.feature_noise = spec.feature_noise;
    out.members.push_back(std::move(m));
  }
  return out;
}

std::filesystem::path write_zoo(const SyntheticZoo& zoo, const std::string& dataset,
                                const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(Errc::IoError, "cannot create '" + dir.string() + "': " + ec.message());
  ZooManifest manifest;
  manifest.dataset_name = dataset;
  for (const auto& b : zoo.bundles) {
    const std::string file = b.model_id + ".zfb";
    write_bundle(b, dir / file, BundleEncoding::Binary);
    manifest.models.push_back({b.model_id, file});
  }
  manifest.class_count = zoo.bundles.front().class_count;
  manifest.domain_count = zoo.bundles.front().domain_count;
  for (int d = 0; d < manifest.domain_count; ++d) manifest.domain_names.push_back("domain_" + std::to_string(d));
  const auto path = dir / "manifest.json";
  write_manifest(manifest, path);
  return path;
}

namespace {

ZooSimSpec default_zoo() {
  ZooSimSpec z;
  z.data.d_star = 3;
  z.data.d = 8;
  z.data.m_dom = 3;
  return z;
}

struct Flags {
  std::string manifest;
  std::string normalization = "per-sample";
  bool standardize = false;
  std::optional<int> jobs;
  std::string format = "json";
  std::string out;
  std::string out_dir;

  int top_k = 3;
  SelectPriors priors;
  std::vector<double> nu;
  bool no_early_stop = false;
  std::string update_rule = "conjugate";
  std::optional<int> holdout;
  double ridge = 1.0;
  std::optional<double> target_scale;

  TprFprSpec tprfpr;
  InvariantDomainSpec invariant;
  int classes = 2;
  ZooSimSpec zoo = default_zoo();
  std::string dataset = "synthetic";
  std::string method = "zood";
};

RankingOptions ranking_options(const Flags& f) {
  RankingOptions o;
  o.normalization = f.normalization == "total" ? ScoreNormalization::Total : ScoreNormalization::PerSample;
  o.standardize = f.standardize;
  return o;
}

SelectPriors select_priors(const Flags& f) {
  SelectPriors p = f.priors;
  if (!f.nu.empty()) {
    if (f.nu.size() != p.nu.size()) throw Error(Errc::InvalidArgument, "--nu takes exactly 6 values");
    std::copy(f.nu.begin(), f.nu.end(), p.nu.begin());
  }
  p.early_stop = !f.no_early_stop;
  p.update_rule = f.update_rule == "strict" ? UpdateRule::Strict : UpdateRule::Conjugate;
  p.validate();
  return p;
}

std::vector<FeatureBundle> load_manifest_zoo(const std::string& path, std::string& dataset) {
  const ZooManifest manifest = read_manifest(path);
  dataset = manifest.dataset_name;
  return load_zoo(manifest, std::filesystem::path(path).parent_path());
}

void add_prior_flags(CLI::App* cmd, Flags& f) {
  cmd->add_option("--pi0", f.priors.pi0, "Prior inclusion probability")->capture_default_str();
  cmd->add_option("--nu", f.nu, "Gamma hyper-parameters: noise shape, scale, slab shape, scale, spike shape, scale")
      ->expected(6);
  cmd->add_option("--tau", f.priors.tau, "Inclusion threshold")->capture_default_str();
  cmd->add_option("--max-iter", f.priors.max_iter, "EM iteration cap")->capture_default_str();
  cmd->add_option("--epsilon", f.priors.epsilon, "Early-stop threshold on the L1 change of probabilities")
      ->capture_default_str();
  cmd->add_flag("--no-early-stop", f.no_early_stop, "Run all iterations");
  cmd->add_option("--select-seed", f.priors.seed, "Mini-batch seed")->capture_default_str();
  cmd->add_option("--update-rule", f.update_rule, "Gamma update convention")
      ->check(CLI::IsMember({"conjugate", "strict"}))
      ->capture_default_str();
}

void add_ranking_flags(CLI::App* cmd, Flags& f) {
  cmd->add_option("--manifest", f.manifest, "Zoo manifest (JSON)")->required();
  cmd->add_option("--score-normalization", f.normalization, "Score recombination")
      ->check(CLI::IsMember({"per-sample", "total"}))
      ->capture_default_str();
  cmd->add_flag("--standardize", f.standardize, "Z-score features per training split");
  cmd->add_option("--jobs", f.jobs, "Models scored in parallel (default: ZOOD_JOBS or 1)");
}

void add_invariant_flags(CLI::App* cmd, InvariantDomainSpec& s) {
  cmd->add_option("--d", s.d, "Total latent columns")->capture_default_str();
  cmd->add_option("--dstar", s.d_star, "Invariant columns")->capture_default_str();
  cmd->add_option("--mdom", s.m_dom, "Domains")->capture_default_str();
  cmd->add_option("--nper", s.n_per, "Samples per domain")->capture_default_str();
  cmd->add_option("--s2", s.s2, "Mixing variance")->capture_default_str();
  cmd->add_option("--sigma2", s.sigma2, "Response noise variance")->capture_default_str();
  cmd->add_option("--seed", s.seed, "Generator seed")->capture_default_str();
}

int cmd_rank(const Flags& f, std::ostream& out, std::ostream& err) {
  const RankingOptions options = ranking_options(f);
  const int jobs = resolve_jobs(f.jobs);
  std::string dataset;
  const auto zoo = load_manifest_zoo(f.manifest, dataset);
  const auto start = std::chrono::steady_clock::now();
  const auto ranking = rank_zoo(zoo, options, jobs);
  const double seconds = seconds_since(start);
  for (const auto& s : ranking) {
    err << "scored " << s.model_id << " in " << std::fixed << std::setprecision(3) << s.seconds << " s\n"
        << std::defaultfloat;
  }
  emit(f.format == "table" ? rank_table(ranking) : rank_report(dataset, options, jobs, ranking, seconds).dump(2) + "\n",
       f.out, out);
  return kOk;
}

int cmd_select(const Flags& f, std::ostream& out) {
  SelectConfig config;
  config.top_k = f.top_k;
  config.priors = select_priors(f);
  config.ranking = ranking_options(f);
  config.jobs = resolve_jobs(f.jobs);
  config.holdout_domain = f.holdout;
  config.ridge = f.ridge;
  config.target_scale = f.target_scale;
  std::string dataset;
  const auto zoo = load_manifest_zoo(f.manifest, dataset);
  const SelectOutcome outcome = run_select(zoo, config);
  json report = select_report(config, outcome);
  report["dataset"] = dataset;
  if (!f.out_dir.empty()) {
    const std::filesystem::path dir(f.out_dir);
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw Error(Errc::IoError, "cannot create '" + f.out_dir + "': " + ec.message());
    write_bundle(outcome.masked, dir / "selected.zfb", BundleEncoding::Binary);
    report["masked_bundle"] = "selected.zfb";
    emit(report.dump(2) + "\n", (dir / "select_report.json").string(), out);
  }
  if (f.format == "table") {
    std::ostringstream os;
    os << "ensemble:";
    for (const auto& id : outcome.ensemble) os << ' ' << id;
    os << "\nselected " << outcome.selected_columns << " of " << outcome.total_columns
       << " columns (F-ratio " << std::setprecision(4) << outcome.f_ratio << ")\n";
    if (outcome.holdout_domain) {
      os << "held-out domain " << *outcome.holdout_domain << ": accuracy selected " << *outcome.accuracy_selected
         << ", all " << *outcome.accuracy_all << '\n';
    }
    emit(os.str(), f.out, out);
  } else {
    emit(report.dump(2) + "\n", f.out, out);
  }
  return kOk;
}

int cmd_tprfpr(const Flags& f, std::ostream& out) {
  TprFprSpec spec = f.tprfpr;
  spec.priors = select_priors(f);
  spec.priors.batch_size = spec.ns;
  const TprFprSummary s = simulate_tprfpr(spec);
  if (f.format == "table") {
    emit(s.row + "\n", f.out, out);
    return kOk;
  }
  const json report = {{"schema_version", kSchemaVersion},
                       {"command", "simulate tprfpr"},
                       {"d", spec.d},
                       {"k", spec.k},
                       {"n", spec.n},
                       {"ns", spec.ns},
                       {"reps", s.reps},
                       {"seed", spec.seed},
                       {"priors", priors_json(spec.priors)},
                       {"tpr_mean", s.tpr_mean},
                       {"tpr_std", s.tpr_std},
                       {"fpr_mean", s.fpr_mean},
                       {"fpr_std", s.fpr_std},
                       {"row", s.row}};
  emit(report.dump(2) + "\n", f.out, out);
  return kOk;
}

int cmd_invariant(const Flags& f, std::ostream& out) {
  f.invariant.validate();
  const InvariantDataset data = gen_multidomain(f.invariant);
  const auto losses = all_subset_losses(data);
  const auto argmin = exhaustive_subset_argmin(data);
  std::vector<int> invariant;
  for (int j = 0; j < f.invariant.d_star; ++j) invariant.push_back(j);
  if (!f.out_dir.empty()) {
    const MultiDomainDataset labelled = data.classification(f.classes);
    FeatureBundle b;
    b.model_id = "invariant_dataset";
    b.features = labelled.features;
    b.labels = labelled.labels;
    b.domains = labelled.domains;
    b.class_count = labelled.class_count;
    b.domain_count = labelled.domain_count;
    std::error_code ec;
    std::filesystem::create_directories(f.out_dir, ec);
    if (ec) throw Error(Errc::IoError, "cannot create '" + f.out_dir + "': " + ec.message());
    write_bundle(b, std::filesystem::path(f.out_dir) / "invariant.zfb", BundleEncoding::Binary);
  }
  if (f.format == "table") {
    std::ostringstream os;
    for (const auto& l : losses) {
      os << '{';
      for (std::size_t i = 0; i < l.subset.size(); ++i) os << (i ? "," : "") << l.subset[i];
      os << "}\t" << std::setprecision(10) << l.loss << '\n';
    }
    os << "argmin {";
    for (std::size_t i = 0; i < argmin.size(); ++i) os << (i ? "," : "") << argmin[i];
    os << "}" << (argmin == invariant ? " (invariant set)" : "") << '\n';
    emit(os.str(), f.out, out);
    return kOk;
  }
  json table = json::array();
  for (const auto& l : losses) table.push_back({{"subset", l.subset}, {"loss", l.loss}});
  const auto& s = f.invariant;
  const json report = {{"schema_version", kSchemaVersion},
                       {"command", "simulate invariant"},
                       {"d", s.d},
                       {"dstar", s.d_star},
                       {"mdom", s.m_dom},
                       {"nper", s.n_per},
                       {"s2", s.s2},
                       {"sigma2", s.sigma2},
                       {"seed", s.seed},
                       {"losses", table},
                       {"argmin", argmin},
                       {"argmin_is_invariant", argmin == invariant}};
  emit(report.dump(2) + "\n", f.out, out);
  return kOk;
}

int cmd_zoo(const Flags& f, std::ostream& out) {
  const SyntheticZoo zoo = gen_synthetic_zoo(zoo_spec(f.zoo));
  const auto manifest = write_zoo(zoo, f.dataset, f.out_dir);
  const json report = {{"schema_version", kSchemaVersion},
                       {"command", "simulate zoo"},
                       {"manifest", manifest.string()},
                       {"models", zoo.bundles.size()},
                       {"rows", zoo.bundles.front().rows()}};
  emit(report.dump(2) + "\n", f.out, out);
  return kOk;
}

int cmd_eval(const Flags& f, std::ostream& out) {
  const EvalResult r = eval_fixture(f.dataset, f.method);
  if (f.format == "table") {
    std::ostringstream os;
    os << r.dataset << ' ' << r.method << ": tau " << std::fixed << std::setprecision(4) << r.tau << ", tau_w "
       << r.tau_w << " over " << r.models << " models\n";
    emit(os.str(), f.out, out);
    return kOk;
  }
  const json report = {{"schema_version", kSchemaVersion},
                       {"command", "eval"},
                       {"dataset", r.dataset},
                       {"method", r.method},
                       {"tau", r.tau},
                       {"tau_w", r.tau_w},
                       {"models", r.models}};
  emit(report.dump(2) + "\n", f.out, out);
  return kOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  Flags f;
  CLI::App app{"Rank pre-trained feature extractors for out-of-domain use and select ensemble features"};
  app.require_subcommand(1);
  const auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--format", f.format, "Output format")
        ->check(CLI::IsMember({"json", "table"}))
        ->capture_default_str();
    cmd->add_option("--out", f.out, "Write the report here instead of stdout");
  };

  auto* rank = app.add_subcommand("rank", "Score and order every model in a zoo manifest");
  add_ranking_flags(rank, f);
  add_common(rank);

  auto* select = app.add_subcommand("select", "Rank, concatenate the top models and select features");
  add_ranking_flags(select, f);
  add_prior_flags(select, f);
  add_common(select);
  select->add_option("--top-k", f.top_k, "Models in the ensemble")->capture_default_str();
  select->add_option("--holdout-domain", f.holdout, "Fit on the other domains and report accuracy on this one");
  select->add_option("--ridge", f.ridge, "Ridge penalty of the held-out classifier")->capture_default_str();
  select->add_option("--target-scale", f.target_scale, "Multiplier on noise-unit targets (default: BIC calibration)");
  select->add_option("--out-dir", f.out_dir, "Write select_report.json and selected.zfb here");

  auto* simulate = app.add_subcommand("simulate", "Synthetic experiments");
  simulate->require_subcommand(1);
  auto* tprfpr = simulate->add_subcommand("tprfpr", "Feature-selection TPR/FPR on sparse regression");
  tprfpr->add_option("--d", f.tprfpr.d, "Features")->capture_default_str();
  tprfpr->add_option("--k", f.tprfpr.k, "True features")->capture_default_str();
  tprfpr->add_option("--n", f.tprfpr.n, "Samples")->capture_default_str();
  tprfpr->add_option("--ns", f.tprfpr.ns, "Mini-batch size")->capture_default_str();
  tprfpr->add_option("--reps", f.tprfpr.reps, "Repetitions")->capture_default_str();
  tprfpr->add_option("--seed", f.tprfpr.seed, "Seed of the first repetition")->capture_default_str();
  add_prior_flags(tprfpr, f);
  add_common(tprfpr);

  auto* invariant = simulate->add_subcommand("invariant", "Leave-one-domain-out loss of every feature subset");
  add_invariant_flags(invariant, f.invariant);
  invariant->add_flag("--zero-mixing", f.invariant.zero_mixing, "Domain columns carry no signal");
  invariant->add_option("--classes", f.classes, "Label bins for the emitted bundle")->capture_default_str();
  invariant->add_option("--out-dir", f.out_dir, "Also write the dataset as invariant.zfb");
  add_common(invariant);

  auto* zoo = simulate->add_subcommand("zoo", "Write a synthetic zoo (bundles plus manifest)");
  add_invariant_flags(zoo, f.zoo.data);
  zoo->add_option("--classes", f.zoo.class_count, "Label bins")->capture_default_str();
  zoo->add_option("--models", f.zoo.models, "Zoo size")->capture_default_str();
  zoo->add_option("--width", f.zoo.width, "Informative columns per model")->capture_default_str();
  zoo->add_option("--noise-width", f.zoo.noise_width, "Extra noise columns per model")->capture_default_str();
  zoo->add_option("--noise-members", f.zoo.noise_members, "Models with noise columns only")->capture_default_str();
  zoo->add_option("--feature-noise", f.zoo.feature_noise, "Noise std on informative columns")->capture_default_str();
  zoo->add_option("--latent-per-member", f.zoo.latent_per_member, "Latent columns each model reads (0: all)")
      ->capture_default_str();
  zoo->add_option("--dataset", f.dataset, "Dataset name in the manifest")->capture_default_str();
  zoo->add_option("--out-dir", f.out_dir, "Output directory")->required();
  add_common(zoo);

  auto* eval = app.add_subcommand("eval", "Rank correlation of a method's fixture scores with accuracy");
  eval->add_option("--dataset", f.dataset, "Fixture name")->required();
  eval->add_option("--method", f.method, "hscore, knn, logme, zood, leep or nce")->required();
  add_common(eval);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kValidation;
  }

  try {
    if (rank->parsed()) return cmd_rank(f, out, err);
    if (select->parsed()) return cmd_select(f, out);
    if (tprfpr->parsed()) return cmd_tprfpr(f, out);
    if (invariant->parsed()) return cmd_invariant(f, out);
    if (zoo->parsed()) return cmd_zoo(f, out);
    if (eval->parsed()) return cmd_eval(f, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code(e.code());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kOther;
  }
  return kOther;
}

}  // namespace zood::cli
