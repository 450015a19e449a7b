#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "relabund/estimators.hpp"
#include "relabund/fit.hpp"
#include "relabund/types.hpp"

namespace relabund {

// Product-moment correlation. Requires length >= 3 and non-constant inputs.
double pearson(const std::vector<double>& x, const std::vector<double>& y);

// Linear-interpolation quantile (type 7) of a sorted vector.
double quantile_type7(const std::vector<double>& sorted, double p);

struct GroupSummary {
  std::string group;
  int n = 0;
  double median = 0.0;
  double q25 = 0.0;
  double q75 = 0.0;
};

struct PowerReport {
  std::vector<std::optional<double>> per_species_r;      // by species index
  std::vector<GroupSummary> groups;                       // includes an "all" group
  std::vector<std::pair<int, std::string>> excluded;      // species index, reason
  std::vector<int> common_sites;
};

// Per-species correlation of candidate against reference over the sites both
// retain, summarized by group medians and interquartile ranges. Correlations
// are unchanged by per-species rescaling, so estimates may be passed raw or
// standardized.
PowerReport predictive_power(const AbundanceEstimate& candidate,
                             const AbundanceEstimate& reference,
                             const std::vector<std::string>& species_groups);

// Sample variance of the log of the positive standardized values per species.
struct LogVarianceRow {
  double variance = 0.0;
  int n_used = 0;
  int n_zero = 0;
};
std::vector<LogVarianceRow> between_site_log_variance(const Eigen::MatrixXd& standardized);

// ---- Effort subsampling ----------------------------------------------------

// Point-year provenance of standardized counts: per site, per (point, year),
// the per-species counts collected there.
struct PointYearRecord {
  std::string point;
  std::string year;
  std::vector<long long> counts;  // per species
};

struct StdProvenance {
  std::vector<std::vector<PointYearRecord>> site_records;  // per site
  long long total_point_years() const;
};

struct SubsampleResult {
  CountTable counts;   // standardized column reduced, opportunistic untouched
  EffortSpec effort;   // one point-year per site
  double effort_reduction;  // point-years before / after
  std::vector<std::pair<std::string, std::string>> chosen;  // per site
};

// Keeps one random listening point per site and one random year for that
// point; the standardized counts shrink to that single point-year.
SubsampleResult subsample_effort(const CountTable& counts, const StdProvenance& provenance,
                                 uint64_t seed);

AbundanceEstimate estimate_from_fit(const FitResult& fit, const std::string& method);

// ---- End-to-end synthetic study --------------------------------------------

// One self-contained generative setting: a standardized scheme with known
// point-year effort, a much denser opportunistic stream whose per-site
// intensity is unrelated to site area, and an independent reference survey
// covering a subset of sites.
struct ValidationScenario {
  int n_species = 16;
  int n_sites = 24;
  int n_unmonitored = 3;  // trailing species absent from the standardized scheme
  int points_per_site = 5;
  int years_per_point = 4;
  double std_rate = 0.12;             // mean standardized count scale per point-year
  double species_mean_log_sd = 0.7;
  double abundance_site_log_sd = 1.0;
  double detect_log_sd = 0.5;
  double opp_scale = 120.0;           // opportunistic effort per point-year unit
  double opp_site_log_sd = 1.0;
  double area_log_sd = 0.6;
  double ref_points_per_site = 20.0;
  double ref_coverage = 0.7;

  void validate() const;
};

struct ReplicateMedians {
  std::map<std::string, std::map<std::string, double>> median_r;  // method -> group -> median
  double stability_median = 0.0;  // full vs reduced combined fit, per-species r
  bool ok = false;
};

struct ValidationStudy {
  int replicates = 0;
  int failed_replicates = 0;
  double frac_combined_gt_std_only = 0.0;  // monitored group medians
  double frac_combined_gt_area = 0.0;      // all-species medians
  double stability_median = 0.0;           // median over replicates
  // method -> group -> median over replicates of the per-replicate medians.
  std::map<std::string, std::map<std::string, double>> median_r;
  std::vector<ReplicateMedians> replicate_detail;
};

ValidationStudy run_validation_study(const ValidationScenario& scenario, int replicates,
                                     uint64_t seed, int threads);

}  // namespace relabund
