#include "relabund/estimators.hpp"

#include <algorithm>
#include <cmath>

namespace relabund {

bool AbundanceEstimate::site_excluded(int j) const {
  return std::find(excluded_sites.begin(), excluded_sites.end(), j) != excluded_sites.end();
}

AbundanceEstimate closed_form_mle(const CountTable& counts, const EffortSpec& effort) {
  const IndexSpace& space = counts.space();
  effort.validate(space);
  const int I = space.n_species(), J = space.n_sites();

  AbundanceEstimate est;
  est.method = "closed_form";
  est.values = Eigen::MatrixXd::Zero(I, J);
  Eigen::VectorXd e1 = Eigen::VectorXd::Zero(J);

  for (int j = 0; j < J; ++j) {
    const double std_total = static_cast<double>(counts.column_sum(j, kStd));
    const double opp_total = static_cast<double>(counts.column_sum(j, kOpp));
    if (std_total == 0.0) {
      est.excluded_sites.push_back(j);
      est.excluded_reasons.push_back("no standardized counts");
      continue;
    }
    const double e0 = effort.effort0[static_cast<size_t>(j)];
    e1[j] = e0 * opp_total / std_total;
    const double scale = std_total / ((std_total + opp_total) * e0);
    for (int i = 0; i < I; ++i)
      est.values(i, j) = static_cast<double>(counts.pair_total(i, j)) * scale;
  }
  est.opp_effort = std::move(e1);
  return est;
}

AbundanceEstimate fixed_point_mle(const CountTable& counts, const EffortSpec& effort,
                                  const Eigen::VectorXd& p0, double rel_tol,
                                  int max_iterations) {
  const IndexSpace& space = counts.space();
  effort.validate(space);
  const int I = space.n_species(), J = space.n_sites();
  if (p0.size() != I) throw InputError("detection ratio vector does not cover every species");
  bool any_positive = false;
  for (int i = 0; i < I; ++i) {
    if (!(p0[i] >= 0.0) || !std::isfinite(p0[i]))
      throw InputError("detection ratios must be finite and non-negative");
    any_positive = any_positive || p0[i] > 0.0;
    if (p0[i] > 0.0 && !counts.monitored(i, kStd))
      throw InputError("positive detection ratio for species not monitored in the standardized "
                       "dataset: " + space.species_label(i));
    if (p0[i] == 0.0) {
      for (int j = 0; j < J; ++j)
        if (counts.at(i, j, kStd) != 0)
          throw InputError("zero detection ratio contradicts standardized counts for species " +
                           space.species_label(i));
    }
  }
  if (!any_positive) throw InputError("all detection ratios are zero");

  AbundanceEstimate est;
  est.method = "fixed_point";
  est.values = Eigen::MatrixXd::Zero(I, J);
  Eigen::VectorXd e1 = Eigen::VectorXd::Zero(J);
  est.converged = true;

  // The equations decouple across sites.
  for (int j = 0; j < J; ++j) {
    const double e0 = effort.effort0[static_cast<size_t>(j)];
    const double opp_total = static_cast<double>(counts.column_sum(j, kOpp));
    double covered_total = 0.0;  // counts for species with standardized coverage
    for (int i = 0; i < I; ++i)
      if (p0[i] > 0.0) covered_total += static_cast<double>(counts.pair_total(i, j));
    if (covered_total == 0.0) {
      est.excluded_sites.push_back(j);
      est.excluded_reasons.push_back("no counts for species with standardized coverage");
      for (int i = 0; i < I; ++i)
        if (counts.pair_total(i, j) > 0) est.undefined_cells.emplace_back(i, j);
      continue;
    }

    const double std_total = static_cast<double>(counts.column_sum(j, kStd));
    double e1_j = 0.0;
    if (opp_total > 0.0) e1_j = std_total > 0.0 ? e0 * opp_total / std_total : 1.0;
    Eigen::VectorXd n(I);
    double prev_change = std::numeric_limits<double>::infinity();
    int rising = 0;
    double damping = 1.0;
    int it = 0;
    for (; it < max_iterations; ++it) {
      double n_total = 0.0;
      for (int i = 0; i < I; ++i) {
        const double denom = p0[i] * e0 + e1_j;
        n[i] = denom > 0.0 ? static_cast<double>(counts.pair_total(i, j)) / denom : 0.0;
        n_total += n[i];
      }
      const double e1_next = n_total > 0.0 ? opp_total / n_total : 0.0;
      const double e1_new = damping * e1_next + (1.0 - damping) * e1_j;
      const double change = std::fabs(e1_new - e1_j) / (1.0 + std::fabs(e1_new));
      if (change > prev_change) {
        if (++rising >= 2) damping = 0.5;
      } else {
        rising = 0;
      }
      prev_change = change;
      e1_j = e1_new;
      if (change < rel_tol) break;
    }
    est.iterations = std::max(est.iterations, it + 1);
    if (it >= max_iterations) est.converged = false;

    e1[j] = e1_j;
    for (int i = 0; i < I; ++i) {
      const double denom = p0[i] * e0 + e1_j;
      if (denom > 0.0) {
        est.values(i, j) = static_cast<double>(counts.pair_total(i, j)) / denom;
      } else if (counts.pair_total(i, j) > 0) {
        est.undefined_cells.emplace_back(i, j);
      }
    }
  }
  est.opp_effort = std::move(e1);
  if (!est.converged) throw EstimationError("fixed-point iteration did not converge");
  return est;
}

AbundanceEstimate baseline_standardized(const CountTable& counts,
                                        const std::vector<double>& points_std) {
  const IndexSpace& space = counts.space();
  const int I = space.n_species(), J = space.n_sites();
  if (static_cast<int>(points_std.size()) != J)
    throw InputError("listening point counts do not cover every site");

  AbundanceEstimate est;
  est.method = "std_per_point";
  est.values = Eigen::MatrixXd::Zero(I, J);
  for (int j = 0; j < J; ++j) {
    if (!(points_std[static_cast<size_t>(j)] > 0.0))
      throw InputError("non-positive listening point count for site " + space.site_label(j));
    for (int i = 0; i < I; ++i)
      est.values(i, j) =
          static_cast<double>(counts.at(i, j, kStd)) / points_std[static_cast<size_t>(j)];
  }
  return est;
}

AbundanceEstimate baseline_area(const CountTable& counts, const std::vector<double>& areas) {
  const IndexSpace& space = counts.space();
  const int I = space.n_species(), J = space.n_sites();
  if (static_cast<int>(areas.size()) != J) throw InputError("areas do not cover every site");

  AbundanceEstimate est;
  est.method = "opp_per_area";
  est.values = Eigen::MatrixXd::Zero(I, J);
  for (int j = 0; j < J; ++j) {
    if (!(areas[static_cast<size_t>(j)] > 0.0))
      throw InputError("non-positive area for site " + space.site_label(j));
    for (int i = 0; i < I; ++i)
      est.values(i, j) = static_cast<double>(counts.at(i, j, kOpp)) / areas[static_cast<size_t>(j)];
  }
  return est;
}

AbundanceEstimate baseline_totalcount(const CountTable& counts) {
  const IndexSpace& space = counts.space();
  const int I = space.n_species(), J = space.n_sites();

  AbundanceEstimate est;
  est.method = "opp_share";
  est.values = Eigen::MatrixXd::Zero(I, J);
  for (int j = 0; j < J; ++j) {
    const double total = static_cast<double>(counts.column_sum(j, kOpp));
    if (total == 0.0) {
      est.excluded_sites.push_back(j);
      est.excluded_reasons.push_back("no opportunistic counts");
      continue;
    }
    for (int i = 0; i < I; ++i)
      est.values(i, j) = static_cast<double>(counts.at(i, j, kOpp)) / total;
  }
  return est;
}

}  // namespace relabund
