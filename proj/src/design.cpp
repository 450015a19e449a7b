#include "relabund/design.hpp"

#include <cmath>

namespace relabund {

int DesignSpec::col_of_abundance(int i, int j) const {
  return n_col_lookup_[static_cast<size_t>(i) * static_cast<size_t>(space.n_sites()) +
                       static_cast<size_t>(j)];
}

int DesignSpec::col_of_opp_effort(int j) const { return e_col_lookup_[static_cast<size_t>(j)]; }

int DesignSpec::col_of_std_detect(int i) const { return p_col_lookup_[static_cast<size_t>(i)]; }

Eigen::MatrixXd DesignSpec::incidence() const {
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(rows.size()), n_cols());
  for (size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].col_n >= 0) a(static_cast<Eigen::Index>(r), rows[r].col_n) = 1.0;
    if (rows[r].col_e >= 0) a(static_cast<Eigen::Index>(r), rows[r].col_e) = 1.0;
    if (rows[r].col_p >= 0) a(static_cast<Eigen::Index>(r), rows[r].col_p) = 1.0;
  }
  return a;
}

DesignSpec build_design(const CountTable& counts, const EffortSpec& effort,
                        const DesignOptions& options) {
  const IndexSpace& space = counts.space();
  const int I = space.n_species();
  const int J = space.n_sites();
  effort.validate(space);

  for (int i = 0; i < I; ++i) {
    if (!counts.monitored(i, kOpp))
      throw InputError("every species must be monitored in the opportunistic dataset: " +
                       space.species_label(i));
  }

  if (options.fixed_p_std) {
    if (static_cast<int>(options.fixed_p_std->size()) != I)
      throw InputError("fixed detection ratio vector does not cover every species");
    for (int i = 0; i < I; ++i) {
      const double v = (*options.fixed_p_std)[static_cast<size_t>(i)];
      if (!(v >= 0.0) || !std::isfinite(v))
        throw InputError("fixed detection ratios must be finite and non-negative");
      if (v > 0.0 && !counts.monitored(i, kStd))
        throw InputError("positive fixed detection ratio for unmonitored species " +
                         space.species_label(i));
    }
  }

  int ref = options.ref_species;
  if (ref < 0) {
    for (int i = 0; i < I && ref < 0; ++i)
      if (counts.monitored(i, kStd) && counts.monitored(i, kOpp)) ref = i;
    if (ref < 0) throw InputError("no species monitored in both datasets");
  }
  if (ref >= I) throw InputError("reference species out of range");
  if (!counts.monitored(ref, kStd) || !counts.monitored(ref, kOpp))
    throw InputError("reference species must be monitored in both datasets: " +
                     space.species_label(ref));
  if (options.fixed_p_std && (*options.fixed_p_std)[static_cast<size_t>(ref)] != 1.0)
    throw InputError("fixed detection ratios must be given in the constrained gauge: the "
                     "reference species (" + space.species_label(ref) +
                     ") needs the value 1 (only ratios matter, so rescale the vector)");

  DesignSpec d(space);
  d.ref_species = ref;
  d.effort0 = effort.effort0;
  d.fixed_p_std = options.fixed_p_std;
  d.n_col_lookup_.assign(static_cast<size_t>(I) * static_cast<size_t>(J), -1);
  d.e_col_lookup_.assign(static_cast<size_t>(J), -1);
  d.p_col_lookup_.assign(static_cast<size_t>(I), -1);

  // A species contributes standardized rows only when monitored there with a
  // nonzero detection ratio.
  std::vector<char> active_std(static_cast<size_t>(I), 0);
  for (int i = 0; i < I; ++i) {
    bool active = counts.monitored(i, kStd);
    if (options.fixed_p_std) active = active && (*options.fixed_p_std)[static_cast<size_t>(i)] > 0.0;
    active_std[static_cast<size_t>(i)] = active ? 1 : 0;
  }

  // Boundary detection. Free detection ratios with an all-zero standardized
  // margin sit at p -> -inf; pin them to zero and drop their rows.
  if (!options.fixed_p_std) {
    for (int i = 0; i < I; ++i) {
      if (!active_std[static_cast<size_t>(i)] || i == ref) continue;
      long long margin = 0;
      for (int j = 0; j < J; ++j) margin += counts.at(i, j, kStd);
      if (margin == 0) {
        d.zero_std_species.push_back(i);
        active_std[static_cast<size_t>(i)] = 0;
      }
    }
  }

  // Cells with zero counts in both datasets have MLE abundance exactly 0.
  std::vector<char> separated(static_cast<size_t>(I) * static_cast<size_t>(J), 0);
  for (int i = 0; i < I; ++i) {
    for (int j = 0; j < J; ++j) {
      long long total = counts.at(i, j, kOpp);
      if (active_std[static_cast<size_t>(i)]) total += counts.at(i, j, kStd);
      if (total == 0) {
        separated[static_cast<size_t>(i) * static_cast<size_t>(J) + static_cast<size_t>(j)] = 1;
        d.separated_cells.emplace_back(i, j);
      }
    }
  }

  // Sites with no opportunistic counts at all: the effort MLE is 0; drop the
  // opportunistic rows instead of chasing e -> -inf.
  std::vector<char> opp_active(static_cast<size_t>(J), 1);
  for (int j = 0; j < J; ++j) {
    if (counts.column_sum(j, kOpp) == 0) {
      opp_active[static_cast<size_t>(j)] = 0;
      d.zero_opp_sites.push_back(j);
    }
  }

  auto is_separated = [&](int i, int j) {
    return separated[static_cast<size_t>(i) * static_cast<size_t>(J) + static_cast<size_t>(j)] != 0;
  };

  // A site with no counts in either dataset leaves its opportunistic effort
  // unidentified: nothing remains after the boundary absorption.
  for (int j = 0; j < J; ++j) {
    if (counts.column_sum(j, kStd) == 0 && counts.column_sum(j, kOpp) == 0)
      throw EstimationError("singular working system: site " + space.site_label(j) +
                            " has no counts in either dataset");
  }

  // Columns: abundances, then opportunistic efforts, then free detections.
  for (int i = 0; i < I; ++i)
    for (int j = 0; j < J; ++j)
      if (!is_separated(i, j)) {
        d.n_col_lookup_[static_cast<size_t>(i) * static_cast<size_t>(J) + static_cast<size_t>(j)] =
            d.n_cols();
        d.cols.push_back({DesignColumn::Kind::Abundance, i, j});
      }
  for (int j = 0; j < J; ++j)
    if (opp_active[static_cast<size_t>(j)]) {
      d.e_col_lookup_[static_cast<size_t>(j)] = d.n_cols();
      d.cols.push_back({DesignColumn::Kind::OppEffort, -1, j});
    }
  if (!options.fixed_p_std) {
    for (int i = 0; i < I; ++i)
      if (active_std[static_cast<size_t>(i)] && i != ref) {
        d.p_col_lookup_[static_cast<size_t>(i)] = d.n_cols();
        d.cols.push_back({DesignColumn::Kind::StdDetect, i, -1});
      }
  }

  for (int i = 0; i < I; ++i) {
    for (int j = 0; j < J; ++j) {
      if (is_separated(i, j)) continue;
      if (active_std[static_cast<size_t>(i)]) {
        DesignRow row;
        row.species = i;
        row.site = j;
        row.dataset = kStd;
        row.offset = std::log(effort.effort0[static_cast<size_t>(j)]);
        if (options.fixed_p_std)
          row.offset += std::log((*options.fixed_p_std)[static_cast<size_t>(i)]);
        row.col_n = d.col_of_abundance(i, j);
        row.col_p = d.col_of_std_detect(i);
        d.rows.push_back(row);
      }
      if (opp_active[static_cast<size_t>(j)]) {
        DesignRow row;
        row.species = i;
        row.site = j;
        row.dataset = kOpp;
        row.col_n = d.col_of_abundance(i, j);
        row.col_e = d.col_of_opp_effort(j);
        d.rows.push_back(row);
      }
    }
  }

  return d;
}

namespace {

int matrix_rank(const Eigen::MatrixXd& m) {
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(m);
  qr.setThreshold(1e-9);
  return static_cast<int>(qr.rank());
}

}  // namespace

int kernel_dimension_unconstrained(int n_species, int n_sites) {
  if (n_species < 1 || n_sites < 1) throw InputError("need at least one species and one site");
  const int I = n_species, J = n_sites;
  const int n_cols = I * J + kNumDatasets * J + kNumDatasets * I;
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(kNumDatasets * I * J, n_cols);
  int r = 0;
  for (int i = 0; i < I; ++i)
    for (int j = 0; j < J; ++j)
      for (int k = 0; k < kNumDatasets; ++k, ++r) {
        a(r, i * J + j) = 1.0;                     // n_ij
        a(r, I * J + j * kNumDatasets + k) = 1.0;  // e_jk
        a(r, I * J + kNumDatasets * J + i * kNumDatasets + k) = 1.0;  // p_ik
      }
  return n_cols - matrix_rank(a);
}

bool cell_count_exceeds_parameters(int n_species, int n_sites) {
  return n_species * n_sites > 2 * (n_species + n_sites);
}

bool has_full_column_rank(const DesignSpec& design) {
  if (design.rows.size() < static_cast<size_t>(design.n_cols())) return false;
  return matrix_rank(design.incidence()) == design.n_cols();
}

}  // namespace relabund
