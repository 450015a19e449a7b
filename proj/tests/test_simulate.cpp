#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "oracles.hpp"
#include "relabund/parallel.hpp"
#include "relabund/simulate.hpp"
#include "test_helpers.hpp"

using namespace relabund;

TEST_CASE("cell simulation is deterministic and respects zero intensities") {
  Rng rng(1);
  ParameterSet params = helpers::random_params(3, 3, rng, {2});
  const CountTable a = simulate_counts(params, 424242);
  const CountTable b = simulate_counts(params, 424242);
  CHECK(a == b);
  const CountTable c = simulate_counts(params, 424243);
  CHECK(!(a == c));
  for (int j = 0; j < 3; ++j) CHECK(a.at(2, j, kStd) == 0);  // no standardized coverage
  CHECK(!a.monitored(2, kStd));
}

TEST_CASE("poisson sampler hits its mean and dispersion") {
  const int draws = 100000;
  SUBCASE("moderate mean, product method") {
    Rng rng(7);
    double sum = 0.0, sumsq = 0.0;
    for (int r = 0; r < draws; ++r) {
      const double x = static_cast<double>(rng.poisson(4.0));
      sum += x;
      sumsq += x * x;
    }
    const double mean = sum / draws;
    const double var = sumsq / draws - mean * mean;
    CHECK(mean > 3.96);
    CHECK(mean < 4.04);
    CHECK(var / mean > 0.97);
    CHECK(var / mean < 1.03);
  }
  SUBCASE("large mean, transformed rejection") {
    Rng rng(8);
    double sum = 0.0, sumsq = 0.0;
    for (int r = 0; r < draws; ++r) {
      const double x = static_cast<double>(rng.poisson(140.0));
      sum += x;
      sumsq += x * x;
    }
    const double mean = sum / draws;
    const double var = sumsq / draws - mean * mean;
    CHECK(std::fabs(mean - 140.0) < 3.0 * std::sqrt(140.0 / draws) + 0.05);
    CHECK(var / mean > 0.97);
    CHECK(var / mean < 1.03);
  }
}

namespace {

VisitScenario single_cell_scenario(int n, int visits, double p) {
  VisitScenario sc;
  sc.space = IndexSpace::numbered(1, 1);
  sc.n_individuals = Eigen::MatrixXi::Constant(1, 1, n);
  sc.visits.assign(2, {{}});
  for (int v = 0; v < visits; ++v)
    sc.visits[kStd][0].push_back(Eigen::VectorXd::Constant(1, p));
  return sc;
}

}  // namespace

TEST_CASE("visit counting: certain detection counts everyone once per visit") {
  SUBCASE("single visit") {
    const CountTable t = simulate_visits(single_cell_scenario(7, 1, 1.0), 5);
    CHECK(t.at(0, 0, kStd) == 7);
  }
  SUBCASE("repeat visits multiply the count") {
    const CountTable t = simulate_visits(single_cell_scenario(7, 4, 1.0), 5);
    CHECK(t.at(0, 0, kStd) == 28);
  }
  SUBCASE("counts never exceed individuals times visits") {
    VisitScenario sc = single_cell_scenario(9, 3, 0.63);
    for (uint64_t seed = 0; seed < 30; ++seed) {
      const CountTable t = simulate_visits(sc, seed);
      CHECK(t.at(0, 0, kStd) <= 27);
    }
  }
}

TEST_CASE("visit counts approach the matching Poisson law") {
  // Small, fast version; the full-size bound check runs in the acceptance
  // suite.
  VisitScenario sc = single_cell_scenario(50, 4, 0.05);
  const double mean = visit_poisson_mean(sc, 0, 0, kStd);
  CHECK(mean == doctest::Approx(10.0));
  const double bound = visit_poisson_tv_bound(sc, 0, 0, kStd);
  CHECK(bound == doctest::Approx(0.5));

  const int draws = 20000;
  std::vector<long long> histogram(60, 0);
  for (int r = 0; r < draws; ++r) {
    const CountTable t = simulate_visits(sc, derive_seed(9321, static_cast<uint64_t>(r)));
    const long long x = t.at(0, 0, kStd);
    if (x < static_cast<long long>(histogram.size())) ++histogram[static_cast<size_t>(x)];
  }
  const double tv = tv_distance_to_poisson(histogram, draws, mean);
  CHECK(tv < 0.08);  // sampling noise at 2e4 draws dominates the true distance
  CHECK(tv < bound);
}

TEST_CASE("per-individual heterogeneity keeps the count bounds") {
  VisitScenario sc = single_cell_scenario(40, 3, 0.4);
  sc.individual_effect_lo = 0.2;
  sc.individual_effect_hi = 1.8;
  const CountTable t = simulate_visits(sc, 17);
  CHECK(t.at(0, 0, kStd) <= 120);
  CHECK(t.at(0, 0, kStd) >= 0);
}

TEST_CASE("field expressions evaluate and integrate") {
  SiteDomain dom{0.0, 2.0, 0.0, 1.0};
  const FieldSpec lin = FieldSpec::linear(0.5, 1.0, 2.0);
  CHECK(lin.eval(1.0, 0.25, dom) == doctest::Approx(2.0));
  CHECK(integrate_field(FieldSpec::constant(3.0), dom) == doctest::Approx(6.0));
  // integral of (0.5 + x + 2y) over [0,2]x[0,1] = 1 + 2 + 2 = 5
  CHECK(integrate_field(FieldSpec::linear(0.5, 1.0, 2.0), dom) == doctest::Approx(5.0));

  const FieldSpec grid = FieldSpec::habitat_grid(2, 1, {1.0, 3.0});
  CHECK(grid.eval(0.3, 0.5, dom) == 1.0);
  CHECK(grid.eval(1.7, 0.5, dom) == 3.0);
  CHECK(integrate_field(grid, dom, 512) == doctest::Approx(4.0).epsilon(1e-2));

  const FieldSpec prod = FieldSpec::product({FieldSpec::constant(2.0), lin});
  CHECK(prod.eval(1.0, 0.25, dom) == doctest::Approx(4.0));
  CHECK(integrate_product(FieldSpec::constant(2.0), lin, dom) == doctest::Approx(10.0));
}

TEST_CASE("homogeneous point process with full retention is Poisson in the area") {
  SpatialScenario sc;
  sc.space = IndexSpace::numbered(1, 1);
  sc.domains = {SiteDomain{0.0, 1.0, 0.0, 1.0}};
  sc.intensity = {{FieldSpec::constant(6.0)}};
  sc.intensity_bound = {{6.0}};
  sc.retention = {{FieldSpec::constant(1.0), FieldSpec::constant(1.0)}};

  const int reps = 10000;
  std::vector<double> counts(reps);
  mc::run_replicates(reps, 0, [&](int r) {
    const IppResult out = simulate_ipp(sc, derive_seed(5150, static_cast<uint64_t>(r)));
    counts[static_cast<size_t>(r)] = static_cast<double>(out.counts.at(0, 0, kStd));
  });
  double sum = 0.0, sumsq = 0.0;
  for (double x : counts) {
    sum += x;
    sumsq += x * x;
  }
  const double mean = sum / reps;
  const double var = sumsq / reps - mean * mean;
  CHECK(std::fabs(mean - 6.0) < 3.0 * std::sqrt(6.0 / reps));
  CHECK(std::fabs(var / mean - 1.0) < 0.05);
}

TEST_CASE("zero retention yields empty datasets") {
  SpatialScenario sc;
  sc.space = IndexSpace::numbered(1, 1);
  sc.domains = {SiteDomain{0.0, 1.0, 0.0, 1.0}};
  sc.intensity = {{FieldSpec::constant(25.0)}};
  sc.intensity_bound = {{25.0}};
  sc.retention = {{FieldSpec::constant(0.0), FieldSpec::constant(0.5)}};
  const IppResult out = simulate_ipp(sc, 3);
  CHECK(out.counts.at(0, 0, kStd) == 0);
  CHECK(out.points[0][0][kStd].x.empty());
}

TEST_CASE("an understated intensity bound is rejected") {
  SpatialScenario sc;
  sc.space = IndexSpace::numbered(1, 1);
  sc.domains = {SiteDomain{0.0, 1.0, 0.0, 1.0}};
  sc.intensity = {{FieldSpec::linear(0.0, 40.0, 0.0)}};  // peaks at 40
  sc.intensity_bound = {{10.0}};
  sc.retention = {{FieldSpec::constant(1.0), FieldSpec::constant(1.0)}};
  CHECK_THROWS_AS(simulate_ipp(sc, 11), InputError);
}

TEST_CASE("separable spatial scenario matches the cell model by quadrature") {
  // Intensity factorizes into a site shape times an abundance level, and
  // retention into a species level times a dataset field: the aggregated
  // counts then follow the cell model with effort = integral(shape * field).
  // Small, fast version of the acceptance check.
  SpatialScenario sc;
  sc.space = IndexSpace::numbered(2, 1);
  sc.domains = {SiteDomain{0.0, 1.0, 0.0, 1.0}};
  const FieldSpec shape = FieldSpec::linear(0.4, 1.2, 0.0);  // integrates to 1 on the unit square
  const double level[2] = {30.0, 18.0};
  sc.intensity = {{FieldSpec::product({FieldSpec::constant(level[0]), shape})},
                  {FieldSpec::product({FieldSpec::constant(level[1]), shape})}};
  sc.intensity_bound = {{level[0] * 1.6}, {level[1] * 1.6}};
  const double p_ik[2][2] = {{0.6, 0.9}, {0.3, 0.8}};
  const FieldSpec visibility[2] = {FieldSpec::linear(0.2, 0.5, 0.2),
                                   FieldSpec::gaussian(1.0, 0.5, 0.5, 0.35, 0.35)};
  sc.retention.resize(2);
  for (int i = 0; i < 2; ++i)
    for (int k = 0; k < 2; ++k)
      sc.retention[static_cast<size_t>(i)].push_back(
          FieldSpec::product({FieldSpec::constant(p_ik[i][k]), visibility[k]}));

  const int reps = 4000;
  std::vector<Eigen::Matrix<long long, 2, 2>> counts(static_cast<size_t>(reps));
  mc::run_replicates(reps, 0, [&](int r) {
    const IppResult out = simulate_ipp(sc, derive_seed(31415, static_cast<uint64_t>(r)));
    for (int i = 0; i < 2; ++i)
      for (int k = 0; k < 2; ++k)
        counts[static_cast<size_t>(r)](i, k) = out.counts.at(i, 0, k);
  });

  for (int i = 0; i < 2; ++i)
    for (int k = 0; k < 2; ++k) {
      const double expected = sc.expected_count(i, 0, k);
      // Same expectation via the separable pieces.
      const double via_parts =
          level[i] * p_ik[i][k] * integrate_product(shape, visibility[k], sc.domains[0]);
      CHECK(expected == doctest::Approx(via_parts).epsilon(1e-6));
      double sum = 0.0, sumsq = 0.0;
      for (int r = 0; r < reps; ++r) {
        const double x = static_cast<double>(counts[static_cast<size_t>(r)](i, k));
        sum += x;
        sumsq += x * x;
      }
      const double mean = sum / reps;
      const double var = sumsq / reps - mean * mean;
      CHECK(std::fabs(mean - expected) < 3.5 * std::sqrt(expected / reps));
      CHECK(std::fabs(var / mean - 1.0) < 0.08);
    }
}

TEST_CASE("parallel and serial replicate runs agree bitwise") {
  Rng seeder(2);
  ParameterSet params = helpers::random_params(3, 3, seeder);
  const int reps = 64;
  std::vector<double> serial(reps), parallel(reps);
  auto body = [&](std::vector<double>& slot) {
    return [&](int r) {
      Rng rng(derive_seed(1234, static_cast<uint64_t>(r)));
      double acc = 0.0;
      for (int d = 0; d < 50; ++d) acc += static_cast<double>(rng.poisson(7.3)) * rng.uniform();
      slot[static_cast<size_t>(r)] = acc;
    };
  };
  mc::run_replicates_serial(reps, body(serial));
  mc::run_replicates(reps, 4, body(parallel));
  for (int r = 0; r < reps; ++r) CHECK(serial[static_cast<size_t>(r)] == parallel[static_cast<size_t>(r)]);
}
