#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "relabund/errors.hpp"

namespace relabund {

// Dataset indices are fixed: 0 = standardized (known relative effort),
// 1 = opportunistic (unknown effort).
inline constexpr int kStd = 0;
inline constexpr int kOpp = 1;
inline constexpr int kNumDatasets = 2;

extern const char* const kDatasetLabels[kNumDatasets];  // {"std", "opp"}

// Label axes for species and sites. Internal indices are dense, 0-based,
// in first-appearance order of the labels.
class IndexSpace {
public:
  IndexSpace(std::vector<std::string> species, std::vector<std::string> sites);

  // "sp01".."spNN" x "site01".."siteNN" labels, for simulations.
  static IndexSpace numbered(int n_species, int n_sites);

  int n_species() const { return static_cast<int>(species_.size()); }
  int n_sites() const { return static_cast<int>(sites_.size()); }

  const std::string& species_label(int i) const { return species_.at(i); }
  const std::string& site_label(int j) const { return sites_.at(j); }
  const std::vector<std::string>& species_labels() const { return species_; }
  const std::vector<std::string>& site_labels() const { return sites_; }

  std::optional<int> species_index(std::string_view label) const;
  std::optional<int> site_index(std::string_view label) const;

  bool operator==(const IndexSpace& other) const {
    return species_ == other.species_ && sites_ == other.sites_;
  }

private:
  std::vector<std::string> species_;
  std::vector<std::string> sites_;
  std::map<std::string, int, std::less<>> species_index_;
  std::map<std::string, int, std::less<>> site_index_;
};

// Counts X_ijk for species i, site j, dataset k, plus the per-dataset sets of
// monitored species. A cell that was never stored for a monitored species is
// an observed zero; unmonitored species carry no observations at all in that
// dataset (their cells must stay zero).
class CountTable {
public:
  // Every species monitored in both datasets.
  explicit CountTable(IndexSpace space);
  // monitored[k][i] != 0 iff species i is monitored in dataset k.
  CountTable(IndexSpace space, std::array<std::vector<char>, kNumDatasets> monitored);

  const IndexSpace& space() const { return space_; }

  void set(int i, int j, int k, long long count);
  void add(int i, int j, int k, long long count);
  long long at(int i, int j, int k) const;

  // X_#jk, summed over species.
  long long column_sum(int j, int k) const;
  // X_ij0 + X_ij1.
  long long pair_total(int i, int j) const;
  long long total() const;

  bool monitored(int i, int k) const { return monitored_[k][static_cast<size_t>(i)] != 0; }
  // Number of species monitored in dataset k.
  int n_monitored(int k) const;
  const std::vector<char>& monitored_set(int k) const { return monitored_[k]; }

  bool operator==(const CountTable& other) const;

private:
  size_t idx(int i, int j, int k) const;
  void check_indices(int i, int j, int k) const;

  IndexSpace space_;
  std::array<std::vector<char>, kNumDatasets> monitored_;
  std::vector<long long> cells_;  // dense, I*J*2
};

// Known relative observational intensities for the standardized dataset,
// plus the per-site quantities the baseline estimators divide by.
struct EffortSpec {
  std::vector<double> effort0;                        // per site, > 0
  std::optional<std::vector<double>> site_area;       // per site, > 0 where used
  std::optional<std::vector<double>> points_std;      // listening point-years, > 0 where used

  void validate(const IndexSpace& space) const;
};

}  // namespace relabund
