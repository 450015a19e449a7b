#pragma once

// Test-only reference implementations, kept independent of the solver paths
// they check.

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "relabund/design.hpp"
#include "relabund/rng.hpp"
#include "relabund/types.hpp"

namespace oracles {

// Direct negative log-likelihood over the free coefficients (constants
// dropped), evaluated from the design rows.
inline double direct_nll(const relabund::DesignSpec& d, const relabund::CountTable& counts,
                         const Eigen::VectorXd& theta) {
  double f = 0.0;
  for (const relabund::DesignRow& row : d.rows) {
    double eta = row.offset;
    if (row.col_n >= 0) eta += theta[row.col_n];
    if (row.col_e >= 0) eta += theta[row.col_e];
    if (row.col_p >= 0) eta += theta[row.col_p];
    f += std::exp(eta) - static_cast<double>(counts.at(row.species, row.site, row.dataset)) * eta;
  }
  return f;
}

// Derivative-free likelihood maximization: cyclic coordinate descent with a
// golden-section search per coordinate. The objective is convex, so this
// converges to the optimum without sharing any machinery with the IRLS path.
inline Eigen::VectorXd brute_force_mle(const relabund::DesignSpec& d,
                                       const relabund::CountTable& counts, int max_sweeps = 600,
                                       double window = 20.0) {
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(d.n_cols());
  const double inv_phi = 0.6180339887498949;
  double f_prev = direct_nll(d, counts, theta);
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    for (int c = 0; c < d.n_cols(); ++c) {
      double a = theta[c] - window, b = theta[c] + window;
      double x1 = b - inv_phi * (b - a), x2 = a + inv_phi * (b - a);
      auto eval = [&](double v) {
        Eigen::VectorXd t = theta;
        t[c] = v;
        return direct_nll(d, counts, t);
      };
      double f1 = eval(x1), f2 = eval(x2);
      for (int it = 0; it < 90; ++it) {
        if (f1 < f2) {
          b = x2;
          x2 = x1;
          f2 = f1;
          x1 = b - inv_phi * (b - a);
          f1 = eval(x1);
        } else {
          a = x1;
          x1 = x2;
          f1 = f2;
          x2 = a + inv_phi * (b - a);
          f2 = eval(x2);
        }
      }
      theta[c] = 0.5 * (a + b);
    }
    const double f = direct_nll(d, counts, theta);
    if (f_prev - f < 1e-13 * (1.0 + std::fabs(f))) break;
    f_prev = f;
  }
  return theta;
}

inline double rel_diff(double a, double b) {
  const double scale = std::max(std::fabs(a), std::fabs(b));
  return scale > 0.0 ? std::fabs(a - b) / scale : 0.0;
}

// Poisson pmf, for total-variation checks.
inline double poisson_pmf(long long x, double mean) {
  return std::exp(static_cast<double>(x) * std::log(mean) - mean -
                  std::lgamma(static_cast<double>(x) + 1.0));
}

}  // namespace oracles
