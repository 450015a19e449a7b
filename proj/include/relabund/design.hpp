#pragma once

#include <Eigen/Dense>
#include <optional>
#include <utility>
#include <vector>

#include "relabund/parameters.hpp"
#include "relabund/types.hpp"

namespace relabund {

// One Poisson likelihood cell. A row touches at most three free columns; a
// negative column index means the coefficient is absorbed into the offset or
// constrained away.
struct DesignRow {
  int species = 0;
  int site = 0;
  int dataset = 0;
  double offset = 0.0;
  int col_n = -1;
  int col_e = -1;
  int col_p = -1;
};

struct DesignColumn {
  enum class Kind { Abundance, OppEffort, StdDetect };
  Kind kind;
  int species = -1;  // Abundance, StdDetect
  int site = -1;     // Abundance, OppEffort
};

struct DesignOptions {
  // When set, the standardized detection ratios are known constants folded
  // into the offsets instead of free coefficients. Zero entries drop the
  // species from the standardized dataset.
  std::optional<std::vector<double>> fixed_p_std;
  int ref_species = -1;  // default: first species monitored in both datasets
};

// Log-linear design for log(lambda_ijk) = n_ij + e_jk + p_ik after absorbing
// the identifiability constraints: e_j0 is a known offset, p_i1 = 0, the
// reference species has p_i0 = 0, and unmonitored species contribute no
// standardized rows.
struct DesignSpec {
  explicit DesignSpec(IndexSpace s) : space(std::move(s)) {}

  IndexSpace space;
  std::vector<DesignRow> rows;
  std::vector<DesignColumn> cols;
  int ref_species = 0;
  std::vector<double> effort0;
  std::optional<std::vector<double>> fixed_p_std;

  // Boundary cells resolved before fitting: (i, j) pairs with zero counts in
  // both datasets (abundance pinned to 0), sites with no opportunistic counts
  // (opportunistic effort pinned to 0), and free-detection species never seen
  // in the standardized dataset (detection ratio pinned to 0).
  std::vector<std::pair<int, int>> separated_cells;
  std::vector<int> zero_opp_sites;
  std::vector<int> zero_std_species;

  int n_cols() const { return static_cast<int>(cols.size()); }
  int col_of_abundance(int i, int j) const;
  int col_of_opp_effort(int j) const;
  int col_of_std_detect(int i) const;

  // Dense 0/1 incidence of rows over free columns.
  Eigen::MatrixXd incidence() const;

private:
  friend DesignSpec build_design(const CountTable&, const EffortSpec&, const DesignOptions&);
  std::vector<int> n_col_lookup_, e_col_lookup_, p_col_lookup_;
};

DesignSpec build_design(const CountTable& counts, const EffortSpec& effort,
                        const DesignOptions& options = {});

// Kernel dimension of the fully unconstrained two-dataset design (all n_ij,
// e_jk, p_ik free), computed by rank on the 2IJ x (IJ + 2I + 2J) incidence.
int kernel_dimension_unconstrained(int n_species, int n_sites);

// Whether the cell count exceeds the raw parameter count: IJ > 2(I + J).
bool cell_count_exceeds_parameters(int n_species, int n_sites);

bool has_full_column_rank(const DesignSpec& design);

}  // namespace relabund
