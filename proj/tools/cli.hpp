#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "zood/bundle.hpp"
#include "zood/ranking.hpp"
#include "zood/select.hpp"
#include "zood/synth.hpp"

namespace zood::cli {

inline constexpr int kSchemaVersion = 1;

enum ExitCode : int { kOk = 0, kOther = 1, kIo = 2, kValidation = 3 };

// Parses argv and dispatches; never throws.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

// --jobs if given, else ZOOD_JOBS, else 1.
int resolve_jobs(std::optional<int> flag);

nlohmann::json ranking_json(const std::vector<ZoodScore>& ranking);
nlohmann::json rank_report(const std::string& dataset, const RankingOptions& options, int jobs,
                           const std::vector<ZoodScore>& ranking, double seconds);
std::string rank_table(const std::vector<ZoodScore>& ranking);

struct SelectConfig {
  int top_k = 3;
  SelectPriors priors;
  RankingOptions ranking;
  int jobs = 1;
  std::optional<int> holdout_domain;
  double ridge = 1.0;
  std::optional<double> target_scale;  // default: bic_target_scale
};

struct SelectOutcome {
  std::vector<ZoodScore> ranking;  // on the training domains
  std::vector<std::string> ensemble;
  SelectionResult selection;
  FeatureBundle masked;  // all rows, raw features
  int total_columns = 0;
  int selected_columns = 0;
  double f_ratio = 0.0;
  std::optional<int> holdout_domain;
  std::optional<double> accuracy_selected, accuracy_all;
  double target_scale = 1.0;
};

// Multiplier for noise-unit targets (standardized features) that puts the spike/slab
// crossover of the prior means at the BIC inclusion boundary t^2 = ln n. Returns 1 when
// the priors have no crossover.
double bic_target_scale(const SelectPriors& priors, Index n);

// Rank, concatenate the top_k bundles, select per class and union the masks.
// With a holdout domain, everything is fitted on the remaining domains and both
// the masked and the full ensemble are scored on the holdout with a ridge classifier.
// Selection sees standardized features and one-hot targets centered, divided by the
// least-squares residual standard deviation and multiplied by the target scale.
SelectOutcome run_select(const std::vector<FeatureBundle>& zoo, const SelectConfig& config);

nlohmann::json select_report(const SelectConfig& config, const SelectOutcome& outcome);

// Rows of `bundle` whose domain is (or is not) `domain`; kept domains are renumbered densely.
FeatureBundle domain_rows(const FeatureBundle& bundle, int domain, bool keep);

struct TprFprSpec {
  int d = 100;
  int k = 50;
  int n = 400;
  int ns = 128;
  int reps = 20;
  std::uint64_t seed = 0;
  SelectPriors priors;
};

struct TprFprSummary {
  double tpr_mean = 0.0, tpr_std = 0.0;
  double fpr_mean = 0.0, fpr_std = 0.0;
  int reps = 0;
  std::string row;  // "d=100, k=50, n=400, n^s=128: TPR 100.00%±0.00%, FPR 0.00%±0.00%"
};

TprFprSummary simulate_tprfpr(const TprFprSpec& spec);

struct EvalResult {
  std::string dataset;
  std::string method;
  double tau = 0.0;
  double tau_w = 0.0;
  int models = 0;
};

EvalResult eval_fixture(const std::string& dataset, const std::string& method);

// Members alternate invariant and spurious read-outs; the last `noise_members` are pure noise.
// With latent_per_member > 0 the j-th member of a kind reads the cyclic slice of that many
// latent columns starting at j * latent_per_member.
struct ZooSimSpec {
  InvariantDomainSpec data;
  int class_count = 2;
  int models = 6;
  int width = 16;
  int noise_width = 0;
  int noise_members = 0;
  double feature_noise = 0.1;
  int latent_per_member = 0;
};

SyntheticZooSpec zoo_spec(const ZooSimSpec& spec);

// Writes one binary bundle per member plus manifest.json; returns the manifest path.
std::filesystem::path write_zoo(const SyntheticZoo& zoo, const std::string& dataset,
                                const std::filesystem::path& dir);

}  // namespace zood::cli
