#include "relabund/validation.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "relabund/design.hpp"
#include "relabund/parallel.hpp"
#include "relabund/rng.hpp"

namespace relabund {

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw InputError("correlation inputs differ in length");
  const size_t n = x.size();
  if (n < 3) throw InputError("correlation needs at least three observations");
  double mx = 0.0, my = 0.0;
  for (size_t a = 0; a < n; ++a) {
    mx += x[a];
    my += y[a];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (size_t a = 0; a < n; ++a) {
    const double dx = x[a] - mx, dy = y[a] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  if (!(sxx > 0.0) || !(syy > 0.0)) throw InputError("correlation undefined for constant input");
  return sxy / std::sqrt(sxx * syy);
}

double quantile_type7(const std::vector<double>& sorted, double p) {
  if (sorted.empty()) throw InputError("quantile of empty sample");
  if (!(p >= 0.0 && p <= 1.0)) throw InputError("quantile level outside [0, 1]");
  const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
  const size_t lo = static_cast<size_t>(std::floor(h));
  const size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - std::floor(h)) * (sorted[hi] - sorted[lo]);
}

namespace {

bool is_constant(const std::vector<double>& v) {
  for (double x : v)
    if (x != v.front()) return false;
  return true;
}

GroupSummary summarize(const std::string& name, std::vector<double> values) {
  GroupSummary s;
  s.group = name;
  s.n = static_cast<int>(values.size());
  if (values.empty()) {
    s.median = s.q25 = s.q75 = std::numeric_limits<double>::quiet_NaN();
    return s;
  }
  std::sort(values.begin(), values.end());
  s.median = quantile_type7(values, 0.5);
  s.q25 = quantile_type7(values, 0.25);
  s.q75 = quantile_type7(values, 0.75);
  return s;
}

}  // namespace

PowerReport predictive_power(const AbundanceEstimate& candidate,
                             const AbundanceEstimate& reference,
                             const std::vector<std::string>& species_groups) {
  if (candidate.values.rows() != reference.values.rows() ||
      candidate.values.cols() != reference.values.cols())
    throw InputError("candidate and reference cover different index spaces");
  const int I = static_cast<int>(candidate.values.rows());
  const int J = static_cast<int>(candidate.values.cols());
  if (static_cast<int>(species_groups.size()) != I)
    throw InputError("species group labels do not cover every species");

  PowerReport report;
  for (int j = 0; j < J; ++j)
    if (!candidate.site_excluded(j) && !reference.site_excluded(j))
      report.common_sites.push_back(j);

  std::set<std::pair<int, int>> undefined(candidate.undefined_cells.begin(),
                                          candidate.undefined_cells.end());
  undefined.insert(reference.undefined_cells.begin(), reference.undefined_cells.end());

  report.per_species_r.assign(static_cast<size_t>(I), std::nullopt);
  std::map<std::string, std::vector<double>> by_group;
  std::vector<double> all;
  for (int i = 0; i < I; ++i) {
    std::vector<double> x, y;
    for (int j : report.common_sites) {
      if (undefined.count({i, j})) continue;
      x.push_back(candidate.values(i, j));
      y.push_back(reference.values(i, j));
    }
    if (x.size() < 3) {
      report.excluded.emplace_back(i, "fewer than 3 common sites");
      continue;
    }
    if (is_constant(x) || is_constant(y)) {
      report.excluded.emplace_back(i, "constant values across common sites");
      continue;
    }
    const double r = pearson(x, y);
    report.per_species_r[static_cast<size_t>(i)] = r;
    by_group[species_groups[static_cast<size_t>(i)]].push_back(r);
    all.push_back(r);
  }

  for (auto& [name, values] : by_group) report.groups.push_back(summarize(name, std::move(values)));
  report.groups.push_back(summarize("all", std::move(all)));
  return report;
}

std::vector<LogVarianceRow> between_site_log_variance(const Eigen::MatrixXd& standardized) {
  std::vector<LogVarianceRow> rows(static_cast<size_t>(standardized.rows()));
  for (Eigen::Index i = 0; i < standardized.rows(); ++i) {
    std::vector<double> logs;
    for (Eigen::Index j = 0; j < standardized.cols(); ++j) {
      if (standardized(i, j) > 0.0)
        logs.push_back(std::log(standardized(i, j)));
      else
        rows[static_cast<size_t>(i)].n_zero += 1;
    }
    rows[static_cast<size_t>(i)].n_used = static_cast<int>(logs.size());
    if (logs.size() >= 2) {
      double mean = 0.0;
      for (double v : logs) mean += v;
      mean /= static_cast<double>(logs.size());
      double ss = 0.0;
      for (double v : logs) ss += (v - mean) * (v - mean);
      rows[static_cast<size_t>(i)].variance = ss / static_cast<double>(logs.size() - 1);
    }
  }
  return rows;
}

long long StdProvenance::total_point_years() const {
  long long total = 0;
  for (const auto& records : site_records) {
    std::set<std::pair<std::string, std::string>> distinct;
    for (const PointYearRecord& r : records) distinct.emplace(r.point, r.year);
    total += static_cast<long long>(distinct.size());
  }
  return total;
}

SubsampleResult subsample_effort(const CountTable& counts, const StdProvenance& provenance,
                                 uint64_t seed) {
  const IndexSpace& space = counts.space();
  const int I = space.n_species(), J = space.n_sites();
  if (static_cast<int>(provenance.site_records.size()) != J)
    throw InputError("provenance does not cover every site");

  CountTable reduced(space, {counts.monitored_set(kStd), counts.monitored_set(kOpp)});
  for (int i = 0; i < I; ++i)
    for (int j = 0; j < J; ++j) reduced.set(i, j, kOpp, counts.at(i, j, kOpp));

  Rng rng(seed);
  SubsampleResult out{std::move(reduced), EffortSpec{}, 0.0, {}};
  for (int j = 0; j < J; ++j) {
    const auto& records = provenance.site_records[static_cast<size_t>(j)];
    if (records.empty())
      throw InputError("no point-years recorded for site " + space.site_label(j));

    // Distinct points in first-appearance order, then one point, then one of
    // its years.
    std::vector<std::string> points;
    for (const PointYearRecord& r : records)
      if (std::find(points.begin(), points.end(), r.point) == points.end())
        points.push_back(r.point);
    const std::string point = points[static_cast<size_t>(rng.below(points.size()))];
    std::vector<std::string> years;
    for (const PointYearRecord& r : records)
      if (r.point == point && std::find(years.begin(), years.end(), r.year) == years.end())
        years.push_back(r.year);
    const std::string year = years[static_cast<size_t>(rng.below(years.size()))];
    out.chosen.emplace_back(point, year);

    for (const PointYearRecord& r : records) {
      if (r.point != point || r.year != year) continue;
      if (static_cast<int>(r.counts.size()) != I)
        throw InputError("provenance record species count mismatch");
      for (int i = 0; i < I; ++i)
        if (r.counts[static_cast<size_t>(i)] != 0)
          out.counts.add(i, j, kStd, r.counts[static_cast<size_t>(i)]);
    }
  }
  out.effort.effort0.assign(static_cast<size_t>(J), 1.0);
  out.effort.points_std = std::vector<double>(static_cast<size_t>(J), 1.0);
  out.effort_reduction =
      static_cast<double>(provenance.total_point_years()) / static_cast<double>(J);
  return out;
}

AbundanceEstimate estimate_from_fit(const FitResult& fit, const std::string& method) {
  AbundanceEstimate est;
  est.method = method;
  est.values = fit.params.n_tilde();
  const int J = fit.params.space().n_sites();
  Eigen::VectorXd e1(J);
  for (int j = 0; j < J; ++j) e1[j] = fit.params.e_tilde()(j, kOpp);
  est.opp_effort = std::move(e1);
  est.converged = fit.converged;
  est.iterations = fit.iterations;
  return est;
}

void ValidationScenario::validate() const {
  if (n_species < 2 || n_sites < 3) throw InputError("scenario needs >= 2 species and >= 3 sites");
  if (n_unmonitored < 0 || n_unmonitored >= n_species)
    throw InputError("unmonitored species count out of range");
  if (points_per_site < 1 || years_per_point < 1)
    throw InputError("need at least one point-year per site");
  if (!(std_rate > 0.0) || !(opp_scale >= 0.0) || !(ref_points_per_site > 0.0))
    throw InputError("non-positive scenario rate");
  if (!(ref_coverage > 0.0 && ref_coverage <= 1.0))
    throw InputError("reference coverage must lie in (0, 1]");
}

namespace {

ReplicateMedians run_validation_replicate(const ValidationScenario& sc, uint64_t seed) {
  const int I = sc.n_species, J = sc.n_sites;
  const int n_monitored = I - sc.n_unmonitored;
  Rng rng(seed);

  // True state: abundances, detection ratios, opportunistic intensities,
  // site areas.
  Eigen::MatrixXd n_true(I, J);
  for (int i = 0; i < I; ++i) {
    const double mean_i = sc.species_mean_log_sd * rng.normal();
    for (int j = 0; j < J; ++j)
      n_true(i, j) = sc.std_rate * std::exp(mean_i + sc.abundance_site_log_sd * rng.normal());
  }
  Eigen::VectorXd p0 = Eigen::VectorXd::Zero(I);
  p0[0] = 1.0;
  for (int i = 1; i < n_monitored; ++i) p0[i] = std::exp(sc.detect_log_sd * rng.normal());
  Eigen::VectorXd e_opp(J);
  for (int j = 0; j < J; ++j)
    e_opp[j] = sc.opp_scale * std::exp(sc.opp_site_log_sd * rng.normal());
  std::vector<double> areas(static_cast<size_t>(J));
  for (double& a : areas) a = std::exp(sc.area_log_sd * rng.normal());

  // Standardized counts at point-year granularity, aggregated into the table.
  IndexSpace space = IndexSpace::numbered(I, J);
  std::array<std::vector<char>, kNumDatasets> monitored;
  monitored[kStd].assign(static_cast<size_t>(I), 0);
  monitored[kOpp].assign(static_cast<size_t>(I), 1);
  for (int i = 0; i < n_monitored; ++i) monitored[kStd][static_cast<size_t>(i)] = 1;
  CountTable table(space, monitored);
  StdProvenance provenance;
  provenance.site_records.resize(static_cast<size_t>(J));
  for (int j = 0; j < J; ++j) {
    for (int p = 0; p < sc.points_per_site; ++p)
      for (int y = 0; y < sc.years_per_point; ++y) {
        PointYearRecord rec;
        rec.point = "p" + std::to_string(p + 1);
        rec.year = "y" + std::to_string(y + 1);
        rec.counts.assign(static_cast<size_t>(I), 0);
        for (int i = 0; i < n_monitored; ++i)
          rec.counts[static_cast<size_t>(i)] = rng.poisson(n_true(i, j) * p0[i]);
        provenance.site_records[static_cast<size_t>(j)].push_back(rec);
      }
    for (const PointYearRecord& rec : provenance.site_records[static_cast<size_t>(j)])
      for (int i = 0; i < I; ++i)
        if (rec.counts[static_cast<size_t>(i)] != 0)
          table.add(i, j, kStd, rec.counts[static_cast<size_t>(i)]);
    for (int i = 0; i < I; ++i) table.set(i, j, kOpp, rng.poisson(n_true(i, j) * e_opp[j]));
  }
  const double point_years = static_cast<double>(sc.points_per_site * sc.years_per_point);
  EffortSpec effort;
  effort.effort0.assign(static_cast<size_t>(J), point_years);
  std::vector<double> points(static_cast<size_t>(J), point_years);

  // Independent reference survey over a site subset.
  const int n_ref = std::max(3, static_cast<int>(std::lround(sc.ref_coverage * J)));
  std::vector<int> site_order(static_cast<size_t>(J));
  for (int j = 0; j < J; ++j) site_order[static_cast<size_t>(j)] = j;
  for (int j = J - 1; j > 0; --j)
    std::swap(site_order[static_cast<size_t>(j)],
              site_order[static_cast<size_t>(rng.below(static_cast<uint64_t>(j + 1)))]);
  std::vector<char> ref_covered(static_cast<size_t>(J), 0);
  for (int a = 0; a < n_ref; ++a) ref_covered[static_cast<size_t>(site_order[static_cast<size_t>(a)])] = 1;

  AbundanceEstimate reference;
  reference.method = "reference_survey";
  reference.values = Eigen::MatrixXd::Zero(I, J);
  for (int j = 0; j < J; ++j) {
    if (!ref_covered[static_cast<size_t>(j)]) {
      reference.excluded_sites.push_back(j);
      reference.excluded_reasons.push_back("not surveyed by the reference scheme");
      continue;
    }
    for (int i = 0; i < I; ++i)
      reference.values(i, j) =
          static_cast<double>(rng.poisson(n_true(i, j) * sc.ref_points_per_site)) /
          sc.ref_points_per_site;
  }

  std::vector<std::string> groups(static_cast<size_t>(I), "monitored");
  for (int i = n_monitored; i < I; ++i) groups[static_cast<size_t>(i)] = "unmonitored";

  ReplicateMedians out;
  auto record = [&](const std::string& method, const AbundanceEstimate& est) {
    const PowerReport report = predictive_power(est, reference, groups);
    for (const GroupSummary& s : report.groups)
      if (s.n > 0) out.median_r[method][s.group] = s.median;
  };

  FitOptions fit_options;
  fit_options.dispersion_mode = DispersionMode::kQuasiPoisson;

  const FitResult full_fit = fit(build_design(table, effort), table, fit_options);
  const AbundanceEstimate combined = estimate_from_fit(full_fit, "combined");
  record("combined", combined);
  record("std_only", baseline_standardized(table, points));
  record("opp_per_area", baseline_area(table, areas));
  record("opp_share", baseline_totalcount(table));

  const SubsampleResult reduced = subsample_effort(table, provenance, derive_seed(seed, 777));
  const FitResult reduced_fit =
      fit(build_design(reduced.counts, reduced.effort), reduced.counts, fit_options);
  const AbundanceEstimate combined_reduced = estimate_from_fit(reduced_fit, "combined_reduced");
  record("combined_reduced", combined_reduced);
  record("std_only_reduced", baseline_standardized(reduced.counts, *reduced.effort.points_std));

  // Stability of the combined estimates under the effort reduction, compared
  // per species across all sites after standardization.
  {
    const Eigen::MatrixXd full_std = standardize_abundance(combined.values).values;
    const Eigen::MatrixXd red_std = standardize_abundance(combined_reduced.values).values;
    std::vector<double> rs;
    for (int i = 0; i < I; ++i) {
      std::vector<double> x, y;
      for (int j = 0; j < J; ++j) {
        x.push_back(full_std(i, j));
        y.push_back(red_std(i, j));
      }
      if (is_constant(x) || is_constant(y)) continue;
      rs.push_back(pearson(x, y));
    }
    if (rs.empty()) throw EstimationError("no species comparable across effort levels");
    std::sort(rs.begin(), rs.end());
    out.stability_median = quantile_type7(rs, 0.5);
  }

  out.ok = true;
  return out;
}

}  // namespace

ValidationStudy run_validation_study(const ValidationScenario& scenario, int replicates,
                                     uint64_t seed, int threads) {
  scenario.validate();
  if (replicates < 1) throw InputError("need at least one replicate");

  std::vector<ReplicateMedians> detail(static_cast<size_t>(replicates));
  mc::run_replicates(replicates, threads, [&](int r) {
    try {
      detail[static_cast<size_t>(r)] =
          run_validation_replicate(scenario, derive_seed(seed, static_cast<uint64_t>(r)));
    } catch (const std::exception&) {
      detail[static_cast<size_t>(r)].ok = false;
    }
  });

  ValidationStudy study;
  study.replicates = replicates;
  int used = 0, beats_std = 0, beats_area = 0;
  std::vector<double> stability;
  std::map<std::string, std::map<std::string, std::vector<double>>> medians;
  for (const ReplicateMedians& rep : detail) {
    if (!rep.ok) {
      ++study.failed_replicates;
      continue;
    }
    ++used;
    for (const auto& [method, by_group] : rep.median_r)
      for (const auto& [group, median] : by_group) medians[method][group].push_back(median);
    const auto comb = rep.median_r.find("combined");
    if (comb != rep.median_r.end()) {
      const auto monitored = comb->second.find("monitored");
      const auto all = comb->second.find("all");
      const auto std_only = rep.median_r.find("std_only");
      if (monitored != comb->second.end() && std_only != rep.median_r.end() &&
          std_only->second.count("monitored"))
        beats_std += monitored->second > std_only->second.at("monitored") ? 1 : 0;
      const auto area = rep.median_r.find("opp_per_area");
      if (all != comb->second.end() && area != rep.median_r.end() && area->second.count("all"))
        beats_area += all->second > area->second.at("all") ? 1 : 0;
    }
    stability.push_back(rep.stability_median);
  }
  if (used == 0) throw EstimationError("every validation replicate failed");

  study.frac_combined_gt_std_only = static_cast<double>(beats_std) / used;
  study.frac_combined_gt_area = static_cast<double>(beats_area) / used;
  std::sort(stability.begin(), stability.end());
  study.stability_median = quantile_type7(stability, 0.5);
  for (auto& [method, by_group] : medians)
    for (auto& [group, values] : by_group) {
      std::sort(values.begin(), values.end());
      study.median_r[method][group] = quantile_type7(values, 0.5);
    }
  study.replicate_detail = std::move(detail);
  return study;
}

}  // namespace relabund
