#include "relabund/types.hpp"

#include <numeric>

namespace relabund {

const char* const kDatasetLabels[kNumDatasets] = {"std", "opp"};

IndexSpace::IndexSpace(std::vector<std::string> species, std::vector<std::string> sites)
    : species_(std::move(species)), sites_(std::move(sites)) {
  if (species_.empty()) throw InputError("need at least one species");
  if (sites_.empty()) throw InputError("need at least one site");
  for (int i = 0; i < n_species(); ++i) {
    if (!species_index_.emplace(species_[i], i).second)
      throw InputError("duplicate species label: " + species_[i]);
  }
  for (int j = 0; j < n_sites(); ++j) {
    if (!site_index_.emplace(sites_[j], j).second)
      throw InputError("duplicate site label: " + sites_[j]);
  }
}

IndexSpace IndexSpace::numbered(int n_species, int n_sites) {
  auto make = [](const char* stem, int n) {
    std::vector<std::string> out;
    out.reserve(static_cast<size_t>(n));
    for (int v = 1; v <= n; ++v) {
      std::string num = std::to_string(v);
      if (num.size() < 2) num.insert(num.begin(), '0');
      out.push_back(stem + num);
    }
    return out;
  };
  return IndexSpace(make("sp", n_species), make("site", n_sites));
}

std::optional<int> IndexSpace::species_index(std::string_view label) const {
  auto it = species_index_.find(label);
  if (it == species_index_.end()) return std::nullopt;
  return it->second;
}

std::optional<int> IndexSpace::site_index(std::string_view label) const {
  auto it = site_index_.find(label);
  if (it == site_index_.end()) return std::nullopt;
  return it->second;
}

CountTable::CountTable(IndexSpace space)
    : CountTable(std::move(space), {}) {}

CountTable::CountTable(IndexSpace space, std::array<std::vector<char>, kNumDatasets> monitored)
    : space_(std::move(space)), monitored_(std::move(monitored)) {
  const size_t n_sp = static_cast<size_t>(space_.n_species());
  for (int k = 0; k < kNumDatasets; ++k) {
    if (monitored_[k].empty()) monitored_[k].assign(n_sp, 1);
    if (monitored_[k].size() != n_sp)
      throw InputError("monitored set size does not match species count");
  }
  cells_.assign(n_sp * static_cast<size_t>(space_.n_sites()) * kNumDatasets, 0);
}

size_t CountTable::idx(int i, int j, int k) const {
  return (static_cast<size_t>(i) * static_cast<size_t>(space_.n_sites()) +
          static_cast<size_t>(j)) * kNumDatasets + static_cast<size_t>(k);
}

void CountTable::check_indices(int i, int j, int k) const {
  if (i < 0 || i >= space_.n_species() || j < 0 || j >= space_.n_sites() ||
      k < 0 || k >= kNumDatasets)
    throw InputError("count index out of range");
}

void CountTable::set(int i, int j, int k, long long count) {
  check_indices(i, j, k);
  if (count < 0) throw InputError("negative count");
  if (count > 0 && !monitored(i, k))
    throw InputError("nonzero count for species not monitored in dataset " +
                     std::string(kDatasetLabels[k]) + ": " + space_.species_label(i));
  cells_[idx(i, j, k)] = count;
}

void CountTable::add(int i, int j, int k, long long count) {
  check_indices(i, j, k);
  set(i, j, k, cells_[idx(i, j, k)] + count);
}

long long CountTable::at(int i, int j, int k) const {
  check_indices(i, j, k);
  return cells_[idx(i, j, k)];
}

long long CountTable::column_sum(int j, int k) const {
  long long s = 0;
  for (int i = 0; i < space_.n_species(); ++i) s += at(i, j, k);
  return s;
}

long long CountTable::pair_total(int i, int j) const {
  return at(i, j, kStd) + at(i, j, kOpp);
}

long long CountTable::total() const {
  return std::accumulate(cells_.begin(), cells_.end(), 0LL);
}

int CountTable::n_monitored(int k) const {
  int n = 0;
  for (char m : monitored_[k]) n += m != 0;
  return n;
}

bool CountTable::operator==(const CountTable& other) const {
  return space_ == other.space_ && monitored_ == other.monitored_ && cells_ == other.cells_;
}

void EffortSpec::validate(const IndexSpace& space) const {
  if (static_cast<int>(effort0.size()) != space.n_sites())
    throw InputError("effort vector does not cover every site");
  for (int j = 0; j < space.n_sites(); ++j) {
    if (!(effort0[j] > 0.0))
      throw InputError("non-positive standardized effort for site " + space.site_label(j));
  }
  auto check_positive = [&](const std::vector<double>& v, const char* what) {
    if (static_cast<int>(v.size()) != space.n_sites())
      throw InputError(std::string(what) + " vector does not cover every site");
    for (double x : v)
      if (!(x > 0.0)) throw InputError(std::string("non-positive ") + what);
  };
  if (site_area) check_positive(*site_area, "site area");
  if (points_std) check_positive(*points_std, "listening point count");
}

}  // namespace relabund
