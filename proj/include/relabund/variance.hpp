#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "relabund/parameters.hpp"
#include "relabund/types.hpp"

namespace relabund {

// Large-opportunistic-effort limit variances of the combined maximum
// likelihood abundance estimator, against the standardized-dataset-only
// estimator.
struct VarianceReport {
  Eigen::MatrixXd var_combined;       // N_ij^2 / (sum_l p_l0 N_lj * e_j0)
  Eigen::MatrixXd var_std_only;       // N_ij / (p_i0 * e_j0); zero where undefined
  Eigen::MatrixXd reduction_factor;   // var_combined / var_std_only where defined
  std::vector<std::vector<char>> std_only_defined;  // [i][j]
};

VarianceReport asymptotic_variance(const ParameterSet& params, const EffortSpec& effort);

// p_i0 * N_ij / sum_l p_l0 * N_lj per cell.
Eigen::MatrixXd reduction_factor(const ParameterSet& params);

// Variance ratio against an imaginary standardized dataset that would have
// monitored species i with detection value p_imag_i:
// (p_imag_i * N_ij + sum_l p_l0 N_lj) / sum_l p_l0 N_lj.
Eigen::MatrixXd imaginary_comparison(const ParameterSet& params, const Eigen::VectorXd& p_imag);

struct VarianceMcOptions {
  double band = 0.15;            // relative agreement band
  double expected_floor = 5.0;   // assert only cells with E[X_ij0] >= floor
  double max_failure_rate = 0.01;
  int threads = 0;
  bool assert_std_only = false;  // also band-check the standardized-only estimator variance
};

struct VarianceMcCell {
  int species = 0, site = 0;
  double expected_std_count = 0.0;
  double mean_estimate = 0.0;
  double emp_var = 0.0, analytic_var = 0.0, var_ratio = 0.0;
  double emp_var_std_only = 0.0, analytic_var_std_only = 0.0;
  double emp_reduction = 0.0, analytic_reduction = 0.0;
  bool std_only_defined = false;
  bool asserted = false;
  bool pass = true;
};

struct VarianceMcReport {
  std::vector<VarianceMcCell> cells;
  int replicates = 0;
  int failed_replicates = 0;
  double mc_rel_se = 0.0;  // sqrt(2 / (R - 1)), the per-variance relative error scale
  bool all_pass = true;
};

// Simulates counts from the true parameters with the opportunistic effort
// scaled by e1_scale, re-estimates per replicate (fixed-point solver with the
// true detection ratios; standardized-only when e1_scale = 0), and compares
// empirical variances against the limit formulas.
VarianceMcReport verify_variance_mc(const ParameterSet& truth, const EffortSpec& effort,
                                    double e1_scale, int replicates, uint64_t seed,
                                    const VarianceMcOptions& options = {});

}  // namespace relabund
