#pragma once

// Independent reference computations used by the unit and acceptance tests.

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include <Eigen/Dense>

namespace oracle {

using Eigen::MatrixXd;
using Eigen::VectorXd;

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

inline MatrixXd random_matrix(std::mt19937_64& gen, int rows, int cols) {
  std::normal_distribution<double> normal;
  MatrixXd m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = normal(gen);
  return m;
}

inline VectorXd random_vector(std::mt19937_64& gen, int n) { return random_matrix(gen, n, 1).col(0); }

// log N(y; mean, cov) through an LU factorization of the full covariance.
inline double gaussian_log_pdf(const VectorXd& y, const VectorXd& mean, const MatrixXd& cov) {
  Eigen::FullPivLU<MatrixXd> lu(cov);
  const VectorXd diff = y - mean;
  const double log_det = lu.matrixLU().diagonal().array().abs().log().sum();
  return -0.5 * (static_cast<double>(y.size()) * kLog2Pi + log_det + diff.dot(lu.solve(diff)));
}

// Evidence as the marginal density of y: N(0, PhiPhiᵀ/alpha + I/beta).
inline double marginal_evidence(const MatrixXd& phi, const VectorXd& y, double alpha, double beta) {
  const auto n = phi.rows();
  const MatrixXd cov = phi * phi.transpose() / alpha + MatrixXd::Identity(n, n) / beta;
  return gaussian_log_pdf(y, VectorXd::Zero(n), cov);
}

// log of the integral over w of p(y | w) p(w) by the trapezoid rule, d = 1 or 2.
inline double quadrature_evidence(const MatrixXd& phi, const VectorXd& y, double alpha, double beta) {
  const int d = static_cast<int>(phi.cols());
  const int n = static_cast<int>(phi.rows());
  // Grid centred at the posterior mode with +-10 posterior standard deviations.
  const MatrixXd a = alpha * MatrixXd::Identity(d, d) + beta * phi.transpose() * phi;
  const VectorXd mode = a.fullPivLu().solve(beta * phi.transpose() * y);
  const VectorXd sd = a.inverse().diagonal().array().sqrt();
  const int points = d == 1 ? 4001 : 801;
  auto log_joint = [&](const VectorXd& w) {
    const double sse = (y - phi * w).squaredNorm();
    return 0.5 * n * std::log(beta / (2 * M_PI)) - 0.5 * beta * sse + 0.5 * d * std::log(alpha / (2 * M_PI)) -
           0.5 * alpha * w.squaredNorm();
  };
  const double peak = log_joint(mode);
  std::vector<double> axis(points), weight(points);
  for (int k = 0; k < points; ++k) {
    axis[k] = -10.0 + 20.0 * k / (points - 1);
    weight[k] = (k == 0 || k == points - 1) ? 0.5 : 1.0;
  }
  const double h = 20.0 / (points - 1);
  double sum = 0.0;
  VectorXd w(d);
  if (d == 1) {
    for (int k = 0; k < points; ++k) {
      w[0] = mode[0] + sd[0] * axis[k];
      sum += weight[k] * std::exp(log_joint(w) - peak);
    }
    return peak + std::log(sum * h * sd[0]);
  }
  for (int k = 0; k < points; ++k) {
    for (int l = 0; l < points; ++l) {
      w[0] = mode[0] + sd[0] * axis[k];
      w[1] = mode[1] + sd[1] * axis[l];
      sum += weight[k] * weight[l] * std::exp(log_joint(w) - peak);
    }
  }
  return peak + std::log(sum * h * h * sd[0] * sd[1]);
}

// Diagonal of I/beta + Phi' A^-1 Phi'ᵀ with an explicit inverse.
inline VectorXd dense_predictive_variance(const MatrixXd& phi_train, double alpha, double beta, const MatrixXd& phi_new) {
  const auto d = phi_train.cols();
  const MatrixXd a = alpha * MatrixXd::Identity(d, d) + beta * phi_train.transpose() * phi_train;
  const MatrixXd cov = phi_new * a.inverse() * phi_new.transpose();
  return cov.diagonal().array() + 1.0 / beta;
}

inline int sign(double v) { return (v > 0) - (v < 0); }

// Tau-b by enumerating all pairs.
inline double kendall_tau_b(const std::vector<double>& x, const std::vector<double>& y) {
  double concordant = 0, discordant = 0, tie_x_only = 0, tie_y_only = 0;
  for (size_t i = 0; i < x.size(); ++i) {
    for (size_t j = i + 1; j < x.size(); ++j) {
      const int sx = sign(x[i] - x[j]);
      const int sy = sign(y[i] - y[j]);
      if (sx == 0 && sy == 0) continue;
      if (sx == 0) ++tie_x_only;
      else if (sy == 0) ++tie_y_only;
      else if (sx == sy) ++concordant;
      else ++discordant;
    }
  }
  return (concordant - discordant) /
         std::sqrt((concordant + discordant + tie_x_only) * (concordant + discordant + tie_y_only));
}

// Weight of each item ranked by key (descending): mean of 1/(r+1) over the ranks its tie group occupies.
inline std::vector<double> hyperbolic_weights(const std::vector<double>& key) {
  std::vector<double> w(key.size());
  for (size_t i = 0; i < key.size(); ++i) {
    int above = 0, equal = 0;
    for (double v : key) {
      above += v > key[i];
      equal += v == key[i];
    }
    double s = 0;
    for (int r = above; r < above + equal; ++r) s += 1.0 / (r + 1);
    w[i] = s / equal;
  }
  return w;
}

inline double weighted_tau_pass(const std::vector<double>& x, const std::vector<double>& y, const std::vector<double>& w) {
  double num = 0, dx = 0, dy = 0;
  for (size_t i = 0; i < x.size(); ++i) {
    for (size_t j = 0; j < x.size(); ++j) {
      if (i == j) continue;
      const double pw = w[i] + w[j];
      num += pw * sign(x[i] - x[j]) * sign(y[i] - y[j]);
      dx += pw * std::abs(sign(x[i] - x[j]));
      dy += pw * std::abs(sign(y[i] - y[j]));
    }
  }
  return num / std::sqrt(dx * dy);
}

inline double weighted_tau(const std::vector<double>& x, const std::vector<double>& y) {
  return 0.5 * (weighted_tau_pass(x, y, hyperbolic_weights(x)) + weighted_tau_pass(x, y, hyperbolic_weights(y)));
}

// Exact Bayesian model selection over all 2^d slab/spike assignments with fixed precisions.
inline std::vector<bool> best_mask(const MatrixXd& x, const VectorXd& y, double slab_prec, double spike_prec,
                                   double noise_prec, double pi) {
  const int d = static_cast<int>(x.cols());
  const auto n = x.rows();
  double best = -INFINITY;
  unsigned best_bits = 0;
  for (unsigned bits = 0; bits < (1u << d); ++bits) {
    VectorXd prior_var(d);
    int on = 0;
    for (int j = 0; j < d; ++j) {
      const bool in = bits & (1u << j);
      on += in;
      prior_var[j] = in ? 1.0 / slab_prec : 1.0 / spike_prec;
    }
    const MatrixXd cov = x * prior_var.asDiagonal() * x.transpose() + MatrixXd::Identity(n, n) / noise_prec;
    const double score = gaussian_log_pdf(y, VectorXd::Zero(n), cov) + on * std::log(pi) + (d - on) * std::log1p(-pi);
    if (score > best) {
      best = score;
      best_bits = bits;
    }
  }
  std::vector<bool> mask(d);
  for (int j = 0; j < d; ++j) mask[j] = best_bits & (1u << j);
  return mask;
}

// log p(y) for d = 2 under the spike-and-slab hierarchy: sum over the 4 masks of
// a trapezoid integral over (log a_1, log a_2, log beta) with Gamma(shape, scale) priors.
struct SpikeSlabHyper {
  double pi, slab_shape, slab_scale, spike_shape, spike_scale, noise_shape, noise_scale;
};

inline double log_gamma_pdf_log_var(double u, double shape, double scale) {
  // density of u = log a when a ~ Gamma(shape, scale)
  return shape * u - std::exp(u) / scale - std::lgamma(shape) - shape * std::log(scale);
}

inline double hierarchical_log_marginal(const MatrixXd& phi, const VectorXd& y, const SpikeSlabHyper& h,
                                        int grid = 160, double lo = -14.0, double hi = 8.0) {
  const double n = static_cast<double>(phi.rows());
  const Eigen::Matrix2d g = phi.transpose() * phi;
  const Eigen::Vector2d c = phi.transpose() * y;
  const double yy = y.squaredNorm();
  const double step = (hi - lo) / (grid - 1);
  std::vector<double> u(grid), wt(grid, step);
  for (int k = 0; k < grid; ++k) u[k] = lo + k * step;
  wt.front() = wt.back() = 0.5 * step;
  std::vector<double> terms;
  for (int mask = 0; mask < 4; ++mask) {
    const bool in1 = mask & 1, in2 = mask & 2;
    const double log_pz = (in1 ? std::log(h.pi) : std::log1p(-h.pi)) + (in2 ? std::log(h.pi) : std::log1p(-h.pi));
    std::vector<double> p1(grid), p2(grid), pb(grid);
    for (int k = 0; k < grid; ++k) {
      p1[k] = in1 ? log_gamma_pdf_log_var(u[k], h.slab_shape, h.slab_scale) : log_gamma_pdf_log_var(u[k], h.spike_shape, h.spike_scale);
      p2[k] = in2 ? log_gamma_pdf_log_var(u[k], h.slab_shape, h.slab_scale) : log_gamma_pdf_log_var(u[k], h.spike_shape, h.spike_scale);
      pb[k] = log_gamma_pdf_log_var(u[k], h.noise_shape, h.noise_scale);
    }
    double peak = -INFINITY;
    std::vector<double> vals;
    vals.reserve(static_cast<std::size_t>(grid) * grid * grid);
    for (int i = 0; i < grid; ++i) {
      for (int j = 0; j < grid; ++j) {
        for (int k = 0; k < grid; ++k) {
          const double a1 = std::exp(u[i]), a2 = std::exp(u[j]), b = std::exp(u[k]);
          Eigen::Matrix2d A = b * g;
          A(0, 0) += a1;
          A(1, 1) += a2;
          const double quad = b * yy - b * b * c.dot(A.ldlt().solve(c));
          const double log_det = -n * u[k] - u[i] - u[j] + std::log(A.determinant());
          const double v = -0.5 * (n * std::log(2 * M_PI) + log_det + quad) + p1[i] + p2[j] + pb[k] +
                           std::log(wt[i] * wt[j] * wt[k]);
          vals.push_back(v);
          peak = std::max(peak, v);
        }
      }
    }
    double acc = 0.0;
    for (double v : vals) acc += std::exp(v - peak);
    terms.push_back(log_pz + peak + std::log(acc));
  }
  const double top = *std::max_element(terms.begin(), terms.end());
  double acc = 0.0;
  for (double t : terms) acc += std::exp(t - top);
  return top + std::log(acc);
}

}  // namespace oracle
