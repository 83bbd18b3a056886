#pragma once

#include <vector>

namespace zood {

struct PairedSeries {
  std::vector<double> scores;
  std::vector<double> targets;

  void validate() const;
};

// Kendall tau-b, O(k log k).
double kendall_tau(const PairedSeries& series);

// Weighted tau with additive hyperbolic weights 1/(r+1), r = 0 for the top item.
// Ranks are taken from scores and from targets in turn and the two values averaged.
double weighted_kendall_tau(const PairedSeries& series);

struct Rates {
  double tpr = 0.0;
  double fpr = 0.0;
};

Rates tpr_fpr(const std::vector<bool>& mask, const std::vector<bool>& truth);

}  // namespace zood
