#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "relabund/parameters.hpp"
#include "relabund/rng.hpp"
#include "relabund/types.hpp"

namespace relabund {

// Independent Poisson draw per cell at the model intensities. Species with a
// zero standardized detection ratio come out unmonitored there.
CountTable simulate_counts(const ParameterSet& params, uint64_t seed);

// ---- Visit-level generator ----------------------------------------------

// Per-visit detection probabilities for every species, one entry per visit to
// (site, dataset). An individual is counted at most once per visit and may be
// counted again on later visits.
struct VisitScenario {
  IndexSpace space = IndexSpace::numbered(1, 1);
  Eigen::MatrixXi n_individuals;  // I x J
  // visits[k][j] lists visits; each visit holds a length-I probability vector.
  std::vector<std::vector<std::vector<Eigen::VectorXd>>> visits;
  // Optional per-individual detectability multiplier, drawn once per
  // individual from U[lo, hi]; probabilities are clamped to [0, 1].
  double individual_effect_lo = 1.0;
  double individual_effect_hi = 1.0;

  void validate() const;
};

CountTable simulate_visits(const VisitScenario& scenario, uint64_t seed);

// Mean of the matching Poisson law, sum over visits of N * p.
double visit_poisson_mean(const VisitScenario& scenario, int i, int j, int k);
// Total-variation bound for the Poisson approximation, sum over visits and
// individuals of p^2.
double visit_poisson_tv_bound(const VisitScenario& scenario, int i, int j, int k);

// Total variation distance between an empirical histogram (counts of observed
// values 0..len-1 over `draws` replicates) and the Poisson law with the given
// mean; tail mass beyond the histogram is included.
double tv_distance_to_poisson(const std::vector<long long>& histogram, long long draws,
                              double mean);

// ---- Spatial thinned point process ---------------------------------------

struct SiteDomain {
  double x0 = 0.0, x1 = 1.0, y0 = 0.0, y1 = 1.0;
  double area() const { return (x1 - x0) * (y1 - y0); }
};

// Structured function over a site rectangle: enough to express smooth
// intensity surfaces, habitat step maps, and their products.
struct FieldSpec {
  enum class Kind { kConstant, kLinear, kGaussian, kHabitatGrid, kProduct };
  Kind kind = Kind::kConstant;
  double value = 1.0;                 // constant
  double cx = 0.0, cy = 0.0;          // linear: value + cx*x + cy*y
  double x0 = 0.0, y0 = 0.0;          // gaussian center
  double sx = 1.0, sy = 1.0;          // gaussian widths
  int grid_nx = 0, grid_ny = 0;       // habitat grid resolution over the domain
  std::vector<double> grid_values;    // row-major, grid_ny rows of grid_nx
  std::vector<FieldSpec> factors;     // product

  static FieldSpec constant(double v);
  static FieldSpec linear(double c, double cx, double cy);
  static FieldSpec gaussian(double amplitude, double x0, double y0, double sx, double sy);
  static FieldSpec habitat_grid(int nx, int ny, std::vector<double> values);
  static FieldSpec product(std::vector<FieldSpec> factors);

  double eval(double x, double y, const SiteDomain& dom) const;
};

// Composite Simpson quadrature of f (optionally times g) over the domain.
double integrate_field(const FieldSpec& f, const SiteDomain& dom, int subdivisions = 400);
double integrate_product(const FieldSpec& f, const FieldSpec& g, const SiteDomain& dom,
                         int subdivisions = 400);

struct SpatialScenario {
  IndexSpace space = IndexSpace::numbered(1, 1);
  std::vector<SiteDomain> domains;                    // per site
  std::vector<std::vector<FieldSpec>> intensity;      // [species][site]
  std::vector<std::vector<double>> intensity_bound;   // [species][site], sup of intensity
  std::vector<std::vector<FieldSpec>> retention;      // [species][dataset], values in [0, 1]

  void validate() const;
  // Expected count per cell by quadrature: integral of intensity * retention.
  double expected_count(int i, int j, int k, int subdivisions = 400) const;
};

struct PointSet {
  std::vector<double> x, y;
};

struct IppResult {
  CountTable counts;
  // points[i][j][k]: retained locations per species, site, dataset.
  std::vector<std::vector<std::vector<PointSet>>> points;
};

// Samples each species' individuals from the inhomogeneous Poisson process by
// thinning against the supplied bound, then retains each individual in each
// dataset independently with the retention probability at its location.
IppResult simulate_ipp(const SpatialScenario& scenario, uint64_t seed);

}  // namespace relabund
