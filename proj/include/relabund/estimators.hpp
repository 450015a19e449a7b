#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "relabund/types.hpp"

namespace relabund {

struct AbundanceEstimate {
  std::string method;
  Eigen::MatrixXd values;  // I x J, finite, >= 0; undefined cells are zero and listed below
  std::optional<Eigen::VectorXd> opp_effort;  // estimated opportunistic intensities per site
  std::vector<int> excluded_sites;
  std::vector<std::string> excluded_reasons;  // parallel to excluded_sites
  std::vector<std::pair<int, int>> undefined_cells;
  int iterations = 0;
  bool converged = true;

  bool site_excluded(int j) const;
};

// Closed-form maximum likelihood solution, valid when every species shares
// the same standardized detection ratio:
//   N_ij = (X_ij0 + X_ij1) / (X_#j0 + X_#j1) * X_#j0 / effort_j.
// Sites with X_#j0 = 0 are excluded and flagged.
AbundanceEstimate closed_form_mle(const CountTable& counts, const EffortSpec& effort);

// Alternating solution of the likelihood equations for known standardized
// detection ratios p0 (entries may be zero for species without standardized
// coverage):
//   N_ij = (X_ij0 + X_ij1) / (p0_i * effort_j + E_j1),  E_j1 = X_#j1 / N_#j.
AbundanceEstimate fixed_point_mle(const CountTable& counts, const EffortSpec& effort,
                                  const Eigen::VectorXd& p0, double rel_tol = 1e-10,
                                  int max_iterations = 10000);

// Standardized-dataset baseline: counts per listening point-year.
AbundanceEstimate baseline_standardized(const CountTable& counts,
                                        const std::vector<double>& points_std);

// Opportunistic baselines: counts per site area, and counts as a share of the
// site total.
AbundanceEstimate baseline_area(const CountTable& counts, const std::vector<double>& areas);
AbundanceEstimate baseline_totalcount(const CountTable& counts);

}  // namespace relabund
