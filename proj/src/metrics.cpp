#include "zood/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>

#include "zood/error.hpp"

namespace zood {
namespace {

bool is_constant(const std::vector<double>& v) {
  return std::all_of(v.begin(), v.end(), [&](double x) { return x == v.front(); });
}

// Counts pairs tied within each run of equal values in an already sorted range.
template <typename Equal>
std::int64_t tied_pairs(std::size_t k, Equal equal) {
  std::int64_t total = 0;
  std::size_t run = 1;
  for (std::size_t i = 1; i <= k; ++i) {
    if (i < k && equal(i - 1, i)) {
      ++run;
    } else {
      total += static_cast<std::int64_t>(run) * static_cast<std::int64_t>(run - 1) / 2;
      run = 1;
    }
  }
  return total;
}

// Merge sort on values, returns the number of inversions (strictly greater before smaller).
std::int64_t count_swaps(std::vector<double>& v, std::vector<double>& scratch, std::size_t lo, std::size_t hi) {
  if (hi - lo < 2) return 0;
  const std::size_t mid = lo + (hi - lo) / 2;
  std::int64_t swaps = count_swaps(v, scratch, lo, mid) + count_swaps(v, scratch, mid, hi);
  std::size_t i = lo, j = mid, out = lo;
  while (i < mid && j < hi) {
    if (v[j] < v[i]) {
      swaps += static_cast<std::int64_t>(mid - i);
      scratch[out++] = v[j++];
    } else {
      scratch[out++] = v[i++];
    }
  }
  while (i < mid) scratch[out++] = v[i++];
  while (j < hi) scratch[out++] = v[j++];
  std::copy(scratch.begin() + static_cast<std::ptrdiff_t>(lo), scratch.begin() + static_cast<std::ptrdiff_t>(hi),
            v.begin() + static_cast<std::ptrdiff_t>(lo));
  return swaps;
}

// Hyperbolic weight of each item when ranked by `key` descending; ties share the mean weight.
std::vector<double> rank_weights(const std::vector<double>& key) {
  const std::size_t k = key.size();
  std::vector<std::size_t> order(k);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return key[a] > key[b]; });
  std::vector<double> weight(k);
  std::size_t start = 0;
  while (start < k) {
    std::size_t end = start + 1;
    while (end < k && key[order[end]] == key[order[start]]) ++end;
    double sum = 0.0;
    for (std::size_t r = start; r < end; ++r) sum += 1.0 / static_cast<double>(r + 1);
    const double mean = sum / static_cast<double>(end - start);
    for (std::size_t r = start; r < end; ++r) weight[order[r]] = mean;
    start = end;
  }
  return weight;
}

double weighted_pass(const PairedSeries& s, const std::vector<double>& weight) {
  const std::size_t k = s.scores.size();
  double concordance = 0.0, tot_x = 0.0, tot_y = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = i + 1; j < k; ++j) {
      const double w = weight[i] + weight[j];
      const double dx = s.scores[i] - s.scores[j];
      const double dy = s.targets[i] - s.targets[j];
      const double sx = (dx > 0) - (dx < 0);
      const double sy = (dy > 0) - (dy < 0);
      concordance += w * sx * sy;
      tot_x += w * sx * sx;
      tot_y += w * sy * sy;
    }
  }
  return concordance / std::sqrt(tot_x * tot_y);
}

}  // namespace

void PairedSeries::validate() const {
  if (scores.size() != targets.size()) {
    throw Error(Errc::DimensionMismatch, "scores and targets differ in length");
  }
  if (scores.size() < 2) throw Error(Errc::DegenerateSeries, "need at least 2 paired values");
  auto finite = [](double x) { return std::isfinite(x); };
  if (!std::all_of(scores.begin(), scores.end(), finite) || !std::all_of(targets.begin(), targets.end(), finite)) {
    throw Error(Errc::NonFinite, "series contains non-finite values");
  }
  if (is_constant(scores) || is_constant(targets)) {
    throw Error(Errc::DegenerateSeries, "a constant series has no rank correlation");
  }
}

double kendall_tau(const PairedSeries& series) {
  series.validate();
  const std::size_t k = series.scores.size();
  std::vector<std::size_t> order(k);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (series.scores[a] != series.scores[b]) return series.scores[a] < series.scores[b];
    return series.targets[a] < series.targets[b];
  });
  std::vector<double> x(k), y(k);
  for (std::size_t i = 0; i < k; ++i) {
    x[i] = series.scores[order[i]];
    y[i] = series.targets[order[i]];
  }
  const std::int64_t pairs = static_cast<std::int64_t>(k) * static_cast<std::int64_t>(k - 1) / 2;
  const std::int64_t ties_x = tied_pairs(k, [&](std::size_t a, std::size_t b) { return x[a] == x[b]; });
  const std::int64_t ties_xy =
      tied_pairs(k, [&](std::size_t a, std::size_t b) { return x[a] == x[b] && y[a] == y[b]; });
  std::vector<double> scratch(k);
  const std::int64_t swaps = count_swaps(y, scratch, 0, k);
  const std::int64_t ties_y = tied_pairs(k, [&](std::size_t a, std::size_t b) { return y[a] == y[b]; });
  const double numer = static_cast<double>(pairs - ties_x - ties_y + ties_xy - 2 * swaps);
  const double denom = std::sqrt(static_cast<double>(pairs - ties_x) * static_cast<double>(pairs - ties_y));
  return std::clamp(numer / denom, -1.0, 1.0);
}

double weighted_kendall_tau(const PairedSeries& series) {
  series.validate();
  const double by_scores = weighted_pass(series, rank_weights(series.scores));
  const double by_targets = weighted_pass(series, rank_weights(series.targets));
  return std::clamp(0.5 * (by_scores + by_targets), -1.0, 1.0);
}

Rates tpr_fpr(const std::vector<bool>& mask, const std::vector<bool>& truth) {
  if (mask.size() != truth.size()) throw Error(Errc::DimensionMismatch, "mask and truth differ in length");
  std::size_t pos = 0, neg = 0, tp = 0, fp = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i]) {
      ++pos;
      tp += mask[i];
    } else {
      ++neg;
      fp += mask[i];
    }
  }
  if (pos == 0 || neg == 0) throw Error(Errc::DegenerateTruth, "truth needs at least one positive and one negative");
  return {static_cast<double>(tp) / static_cast<double>(pos), static_cast<double>(fp) / static_cast<double>(neg)};
}

}  // namespace zood
