#pragma once

#include <Eigen/Dense>
#include <optional>
#include <utility>
#include <vector>

#include "relabund/design.hpp"
#include "relabund/parameters.hpp"
#include "relabund/types.hpp"

namespace relabund {

// Quadratic proximity penalty on natural-scale abundances:
// nu * sum_i sum_j sum_m proximity(j, m) * (N_ij - N_im)^2,
// summed over ordered site pairs.
struct ProximityPenalty {
  double nu = 0.0;
  Eigen::MatrixXd proximity;  // J x J, symmetric, non-negative, zero diagonal
};

enum class DispersionMode { kPoisson, kQuasiPoisson };

struct FitOptions {
  int max_iterations = 100;
  double deviance_rel_tol = 1e-10;
  int step_halving_max = 30;
  DispersionMode dispersion_mode = DispersionMode::kQuasiPoisson;
  std::optional<ProximityPenalty> penalty;
};

struct FitResult {
  ParameterSet params;
  std::vector<DesignColumn> coef;  // layout of coef_values / coef_cov
  Eigen::VectorXd coef_values;     // log scale
  Eigen::MatrixXd coef_cov;        // inverse information, dispersion-scaled if quasi-Poisson
  double deviance = 0.0;
  double log_likelihood = 0.0;
  double dispersion = 1.0;
  int dispersion_df = 0;
  int iterations = 0;
  bool converged = false;
  double max_abs_score = 0.0;
  std::vector<std::pair<int, int>> separation_flags;  // (species, site) with zero total counts
  std::vector<int> zero_opp_sites;
  std::vector<int> zero_std_species;
};

// Maximum (penalized) Poisson likelihood via iteratively reweighted least
// squares with step halving; the penalized refinement is a damped Newton pass
// seeded by the unpenalized solution.
FitResult fit(const DesignSpec& design, const CountTable& counts, const FitOptions& options = {});

// Pearson X^2 over residual degrees of freedom.
double estimate_dispersion(const FitResult& fit, const CountTable& counts);

// Log-likelihood minus the proximity penalty, at the given parameters.
double penalized_objective(const DesignSpec& design, const CountTable& counts,
                           const ParameterSet& params, double nu,
                           const Eigen::MatrixXd& proximity);

}  // namespace relabund
