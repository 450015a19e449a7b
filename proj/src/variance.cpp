#include "relabund/variance.hpp"

#include <cmath>

#include "relabund/estimators.hpp"
#include "relabund/parallel.hpp"
#include "relabund/rng.hpp"
#include "relabund/simulate.hpp"

namespace relabund {

namespace {

// sum_l p_l0 * N_lj for each site.
Eigen::VectorXd covered_abundance(const ParameterSet& params) {
  const int I = params.space().n_species(), J = params.space().n_sites();
  Eigen::VectorXd mass = Eigen::VectorXd::Zero(J);
  for (int j = 0; j < J; ++j)
    for (int i = 0; i < I; ++i) mass[j] += params.p_tilde()(i, kStd) * params.n_tilde()(i, j);
  return mass;
}

}  // namespace

VarianceReport asymptotic_variance(const ParameterSet& params, const EffortSpec& effort) {
  const IndexSpace& space = params.space();
  effort.validate(space);
  const int I = space.n_species(), J = space.n_sites();
  const Eigen::VectorXd mass = covered_abundance(params);

  VarianceReport report;
  report.var_combined = Eigen::MatrixXd::Zero(I, J);
  report.var_std_only = Eigen::MatrixXd::Zero(I, J);
  report.reduction_factor = Eigen::MatrixXd::Zero(I, J);
  report.std_only_defined.assign(static_cast<size_t>(I),
                                 std::vector<char>(static_cast<size_t>(J), 0));

  for (int j = 0; j < J; ++j) {
    if (!(mass[j] > 0.0))
      throw EstimationError("no species with standardized coverage has mass at site " +
                            space.site_label(j));
    const double e0 = effort.effort0[static_cast<size_t>(j)];
    for (int i = 0; i < I; ++i) {
      const double n = params.n_tilde()(i, j);
      const double p0 = params.p_tilde()(i, kStd);
      report.var_combined(i, j) = n * n / (mass[j] * e0);
      if (p0 > 0.0) {
        report.var_std_only(i, j) = n / (p0 * e0);
        report.std_only_defined[static_cast<size_t>(i)][static_cast<size_t>(j)] = 1;
        if (n > 0.0)
          report.reduction_factor(i, j) = report.var_combined(i, j) / report.var_std_only(i, j);
      }
    }
  }
  return report;
}

Eigen::MatrixXd reduction_factor(const ParameterSet& params) {
  const int I = params.space().n_species(), J = params.space().n_sites();
  const Eigen::VectorXd mass = covered_abundance(params);
  Eigen::MatrixXd factor(I, J);
  for (int j = 0; j < J; ++j) {
    if (!(mass[j] > 0.0))
      throw EstimationError("no species with standardized coverage has mass at site " +
                            params.space().site_label(j));
    for (int i = 0; i < I; ++i)
      factor(i, j) = params.p_tilde()(i, kStd) * params.n_tilde()(i, j) / mass[j];
  }
  return factor;
}

Eigen::MatrixXd imaginary_comparison(const ParameterSet& params, const Eigen::VectorXd& p_imag) {
  const int I = params.space().n_species(), J = params.space().n_sites();
  if (p_imag.size() != I) throw InputError("imaginary detection vector shape mismatch");
  for (int i = 0; i < I; ++i)
    if (!(p_imag[i] >= 0.0)) throw InputError("imaginary detection values must be non-negative");
  const Eigen::VectorXd mass = covered_abundance(params);
  Eigen::MatrixXd ratio(I, J);
  for (int j = 0; j < J; ++j) {
    if (!(mass[j] > 0.0))
      throw EstimationError("no species with standardized coverage has mass at site " +
                            params.space().site_label(j));
    for (int i = 0; i < I; ++i)
      ratio(i, j) = (p_imag[i] * params.n_tilde()(i, j) + mass[j]) / mass[j];
  }
  return ratio;
}

VarianceMcReport verify_variance_mc(const ParameterSet& truth, const EffortSpec& effort,
                                    double e1_scale, int replicates, uint64_t seed,
                                    const VarianceMcOptions& options) {
  const IndexSpace& space = truth.space();
  effort.validate(space);
  if (replicates < 2) throw InputError("need at least two replicates");
  if (!(e1_scale >= 0.0)) throw InputError("opportunistic effort scale must be non-negative");
  const int I = space.n_species(), J = space.n_sites();

  // Simulation truth with the opportunistic column scaled relative to the
  // standardized efforts.
  Eigen::MatrixXd e_tilde(J, kNumDatasets);
  for (int j = 0; j < J; ++j) {
    e_tilde(j, kStd) = effort.effort0[static_cast<size_t>(j)];
    e_tilde(j, kOpp) = e1_scale * effort.effort0[static_cast<size_t>(j)];
  }
  ParameterSet sim_truth(space, truth.n_tilde(), e_tilde, truth.p_tilde(), truth.ref_species());

  Eigen::VectorXd p0(I);
  for (int i = 0; i < I; ++i) p0[i] = truth.p_tilde()(i, kStd);
  const bool std_only_mode = e1_scale == 0.0;

  // Per-replicate estimates, slot-indexed so threading cannot reorder them.
  std::vector<Eigen::MatrixXd> combined(static_cast<size_t>(replicates));
  std::vector<Eigen::MatrixXd> std_only(static_cast<size_t>(replicates));
  std::vector<char> failed(static_cast<size_t>(replicates), 0);

  mc::run_replicates(replicates, options.threads, [&](int r) {
    const CountTable table = simulate_counts(sim_truth, derive_seed(seed, static_cast<uint64_t>(r)));
    Eigen::MatrixXd n0 = Eigen::MatrixXd::Zero(I, J);
    for (int i = 0; i < I; ++i)
      for (int j = 0; j < J; ++j)
        if (p0[i] > 0.0)
          n0(i, j) = static_cast<double>(table.at(i, j, kStd)) /
                     (p0[i] * effort.effort0[static_cast<size_t>(j)]);
    std_only[static_cast<size_t>(r)] = std::move(n0);
    if (std_only_mode) {
      combined[static_cast<size_t>(r)] = std_only[static_cast<size_t>(r)];
      return;
    }
    try {
      combined[static_cast<size_t>(r)] = fixed_point_mle(table, effort, p0).values;
    } catch (const std::exception&) {
      failed[static_cast<size_t>(r)] = 1;
    }
  });

  VarianceMcReport report;
  report.replicates = replicates;
  for (char f : failed) report.failed_replicates += f;
  if (report.failed_replicates >
      static_cast<int>(options.max_failure_rate * static_cast<double>(replicates)))
    throw EstimationError("estimator failed on too many replicates: " +
                          std::to_string(report.failed_replicates));

  const int used = replicates - report.failed_replicates;
  report.mc_rel_se = std::sqrt(2.0 / static_cast<double>(used - 1));
  const VarianceReport analytic = asymptotic_variance(truth, effort);

  for (int i = 0; i < I; ++i)
    for (int j = 0; j < J; ++j) {
      VarianceMcCell cell;
      cell.species = i;
      cell.site = j;
      cell.expected_std_count = sim_truth.intensity(i, j, kStd);

      double sum = 0.0, sum0 = 0.0;
      for (int r = 0; r < replicates; ++r) {
        if (failed[static_cast<size_t>(r)]) continue;
        sum += combined[static_cast<size_t>(r)](i, j);
        sum0 += std_only[static_cast<size_t>(r)](i, j);
      }
      const double mean = sum / used, mean0 = sum0 / used;
      double ss = 0.0, ss0 = 0.0;
      for (int r = 0; r < replicates; ++r) {
        if (failed[static_cast<size_t>(r)]) continue;
        const double d = combined[static_cast<size_t>(r)](i, j) - mean;
        const double d0 = std_only[static_cast<size_t>(r)](i, j) - mean0;
        ss += d * d;
        ss0 += d0 * d0;
      }
      cell.mean_estimate = mean;
      cell.emp_var = ss / (used - 1);
      cell.emp_var_std_only = ss0 / (used - 1);
      cell.analytic_var = std_only_mode ? analytic.var_std_only(i, j) : analytic.var_combined(i, j);
      cell.analytic_var_std_only = analytic.var_std_only(i, j);
      cell.std_only_defined =
          analytic.std_only_defined[static_cast<size_t>(i)][static_cast<size_t>(j)] != 0;
      cell.var_ratio = cell.analytic_var > 0.0 ? cell.emp_var / cell.analytic_var : 0.0;
      if (cell.std_only_defined && cell.emp_var_std_only > 0.0) {
        cell.emp_reduction = cell.emp_var / cell.emp_var_std_only;
        cell.analytic_reduction = analytic.reduction_factor(i, j);
      }

      cell.asserted = cell.expected_std_count >= options.expected_floor ||
                      (!cell.std_only_defined && truth.n_tilde()(i, j) > 0.0);
      if (std_only_mode && !cell.std_only_defined) cell.asserted = false;
      if (cell.asserted) {
        cell.pass = std::fabs(cell.var_ratio - 1.0) <= options.band;
        if (options.assert_std_only && cell.std_only_defined && !std_only_mode) {
          const double r0 = cell.emp_var_std_only / cell.analytic_var_std_only;
          cell.pass = cell.pass && std::fabs(r0 - 1.0) <= options.band;
        }
        report.all_pass = report.all_pass && cell.pass;
      }
      report.cells.push_back(cell);
    }
  return report;
}

}  // namespace relabund
