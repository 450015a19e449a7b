#include <doctest.h>

#include <Eigen/Dense>

#include "relabund/parameters.hpp"
#include "relabund/rng.hpp"
#include "relabund/types.hpp"
#include "test_helpers.hpp"

using namespace relabund;

TEST_CASE("index space rejects duplicates and resolves labels") {
  CHECK_THROWS_AS(IndexSpace({"a", "a"}, {"s"}), InputError);
  IndexSpace space({"a", "b"}, {"s1", "s2", "s3"});
  CHECK(space.n_species() == 2);
  CHECK(space.site_index("s3") == 2);
  CHECK(!space.species_index("zz").has_value());
}

TEST_CASE("count table enforces monitoring and non-negativity") {
  IndexSpace space({"a", "b"}, {"s1", "s2"});
  std::array<std::vector<char>, 2> monitored;
  monitored[kStd] = {1, 0};
  monitored[kOpp] = {1, 1};
  CountTable table(space, monitored);
  table.set(0, 0, kStd, 5);
  table.set(1, 1, kOpp, 3);
  CHECK_THROWS_AS(table.set(1, 0, kStd, 1), InputError);  // unmonitored
  CHECK_THROWS_AS(table.set(0, 0, kStd, -1), InputError);
  table.set(1, 0, kStd, 0);  // explicit zero is fine

  CHECK(table.column_sum(0, kStd) == 5);
  CHECK(table.column_sum(1, kOpp) == 3);
  CHECK(table.pair_total(1, 1) == 3);
  CHECK(table.n_monitored(kStd) == 1);
}

TEST_CASE("column sums include implied zeros only through stored cells") {
  IndexSpace space({"a", "b", "c"}, {"s1"});
  CountTable table(space);
  table.set(0, 0, kStd, 2);
  table.set(2, 0, kStd, 7);
  // cell (1, 0, std) never stored: observed zero
  CHECK(table.column_sum(0, kStd) == 9);
  CHECK(table.at(1, 0, kStd) == 0);
}

TEST_CASE("normalization is the identity on all-ones input") {
  IndexSpace space = IndexSpace::numbered(2, 2);
  Eigen::MatrixXd n = Eigen::MatrixXd::Ones(2, 2);
  Eigen::MatrixXd e = Eigen::MatrixXd::Ones(2, 2);
  Eigen::MatrixXd p = Eigen::MatrixXd::Ones(2, 2);
  ParameterSet params = normalize_parameters(space, n, e, p);
  CHECK(params.n_tilde().isApprox(n, 1e-14));
  CHECK(params.e_tilde().isApprox(e, 1e-14));
  CHECK(params.p_tilde().isApprox(p, 1e-14));
  CHECK(params.ref_species() == 0);
}

TEST_CASE("normalization preserves the cell products") {
  Rng rng(12345);
  IndexSpace space = IndexSpace::numbered(3, 2);
  Eigen::MatrixXd n(3, 2), e(2, 2), p(3, 2);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 2; ++j) n(i, j) = rng.uniform(0.5, 9.0);
  for (int j = 0; j < 2; ++j)
    for (int k = 0; k < 2; ++k) e(j, k) = rng.uniform(0.5, 9.0);
  for (int i = 0; i < 3; ++i)
    for (int k = 0; k < 2; ++k) p(i, k) = rng.uniform(0.2, 1.0);
  ParameterSet params = normalize_parameters(space, n, e, p);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 2; ++j)
      for (int k = 0; k < 2; ++k) {
        const double raw = n(i, j) * e(j, k) * p(i, k);
        CHECK(params.intensity(i, j, k) == doctest::Approx(raw).epsilon(1e-12));
      }
  // Constraints pinned exactly.
  for (int i = 0; i < 3; ++i) CHECK(params.p_tilde()(i, kOpp) == 1.0);
  CHECK(params.p_tilde()(params.ref_species(), kStd) == 1.0);
  for (int j = 0; j < 2; ++j)
    CHECK(params.e_tilde()(j, kStd) == doctest::Approx(e(j, kStd) / e(0, kStd)).epsilon(1e-12));
}

TEST_CASE("per-species rescalings normalize to the identical parameter set") {
  Rng rng(777);
  IndexSpace space = IndexSpace::numbered(4, 3);
  Eigen::MatrixXd n(4, 3), e(3, 2), p(4, 2);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 3; ++j) n(i, j) = rng.uniform(1.0, 5.0);
  for (int j = 0; j < 3; ++j)
    for (int k = 0; k < 2; ++k) e(j, k) = rng.uniform(1.0, 5.0);
  for (int i = 0; i < 4; ++i)
    for (int k = 0; k < 2; ++k) p(i, k) = rng.uniform(0.2, 1.0);
  ParameterSet base = normalize_parameters(space, n, e, p);

  // Per-species factor c_i moved between N and P leaves every product alone.
  Eigen::MatrixXd n2 = n, p2 = p;
  for (int i = 0; i < 4; ++i) {
    const double c = rng.uniform(0.3, 3.0);
    n2.row(i) *= c;
    p2.row(i) /= c;
  }
  ParameterSet scaled = normalize_parameters(space, n2, e, p2);
  CHECK(scaled.n_tilde().isApprox(base.n_tilde(), 1e-10));
  CHECK(scaled.e_tilde().isApprox(base.e_tilde(), 1e-10));
  CHECK(scaled.p_tilde().isApprox(base.p_tilde(), 1e-10));

  // Same for a per-dataset factor moved between E and P, which keeps the
  // standardized effort ratios intact.
  Eigen::MatrixXd e3 = e, p3 = p;
  for (int k = 0; k < 2; ++k) {
    const double f = rng.uniform(0.3, 3.0);
    e3.col(k) *= f;
    p3.col(k) /= f;
  }
  ParameterSet scaled2 = normalize_parameters(space, n, e3, p3);
  CHECK(scaled2.n_tilde().isApprox(base.n_tilde(), 1e-10));
  CHECK(scaled2.e_tilde().isApprox(base.e_tilde(), 1e-10));
  CHECK(scaled2.p_tilde().isApprox(base.p_tilde(), 1e-10));
}

TEST_CASE("normalization rejects bad input") {
  IndexSpace space = IndexSpace::numbered(2, 2);
  Eigen::MatrixXd n = Eigen::MatrixXd::Ones(2, 2);
  Eigen::MatrixXd e = Eigen::MatrixXd::Ones(2, 2);
  Eigen::MatrixXd p = Eigen::MatrixXd::Ones(2, 2);
  Eigen::MatrixXd bad_n = n;
  bad_n(0, 0) = 0.0;
  CHECK_THROWS_AS(normalize_parameters(space, bad_n, e, p), InputError);
  Eigen::MatrixXd bad_p = p;
  bad_p(0, kStd) = 0.0;  // requested reference unmonitored
  CHECK_THROWS_AS(normalize_parameters(space, n, e, bad_p, 0), InputError);
  // Without an explicit reference the first both-monitored species is used.
  ParameterSet params = normalize_parameters(space, n, e, bad_p);
  CHECK(params.ref_species() == 1);
}

TEST_CASE("intensity follows the cell product") {
  IndexSpace space = IndexSpace::numbered(2, 2);
  Eigen::MatrixXd n = Eigen::MatrixXd::Ones(2, 2);
  Eigen::MatrixXd e = Eigen::MatrixXd::Ones(2, 2);
  Eigen::MatrixXd p = Eigen::MatrixXd::Ones(2, 2);
  n(1, 0) = 2.0;
  e(0, kOpp) = 3.0;
  p(1, kStd) = 0.5;
  p(1, kOpp) = 1.0;
  ParameterSet params(space, n, e, p, 0);
  CHECK(params.intensity(0, 1, kStd) == 1.0);
  CHECK(params.intensity(1, 0, kOpp) == doctest::Approx(6.0));
  CHECK(params.intensity(1, 0, kStd) == doctest::Approx(1.0));  // 2 * 1 * 0.5
  CHECK_THROWS_AS(params.intensity(2, 0, kStd), InputError);

  Eigen::MatrixXd p0 = p;
  p0(1, kStd) = 0.0;
  ParameterSet unmon(space, n, e, p0, 0);
  CHECK(unmon.intensity(1, 0, kStd) == 0.0);
  CHECK(!unmon.monitored_std(1));
}

TEST_CASE("relative abundance is a pure ratio") {
  IndexSpace space = IndexSpace::numbered(1, 2);
  Eigen::MatrixXd n(1, 2);
  n << 2.0, 6.0;
  Eigen::MatrixXd e = Eigen::MatrixXd::Ones(2, 2);
  Eigen::MatrixXd p = Eigen::MatrixXd::Ones(1, 2);
  ParameterSet params(space, n, e, p, 0);
  CHECK(params.relative_abundance(0, 0, 0) == 1.0);
  CHECK(params.relative_abundance(0, 1, 0) == doctest::Approx(3.0));

  Eigen::MatrixXd n_scaled = n * 17.5;
  ParameterSet scaled(space, n_scaled, e, p, 0);
  CHECK(scaled.relative_abundance(0, 1, 0) == doctest::Approx(3.0));

  Eigen::MatrixXd n_zero = n;
  n_zero(0, 0) = 0.0;
  ParameterSet zero_ref(space, n_zero, e, p, 0);
  CHECK_THROWS_AS(zero_ref.relative_abundance(0, 1, 0), EstimationError);
}

TEST_CASE("standardized abundances sum to one per species") {
  Eigen::MatrixXd m(2, 3);
  m << 1.0, 1.0, 2.0, 0.0, 0.0, 0.0;
  const StandardizedAbundance out = standardize_abundance(m);
  CHECK(out.values(0, 0) == doctest::Approx(0.25));
  CHECK(out.values(0, 1) == doctest::Approx(0.25));
  CHECK(out.values(0, 2) == doctest::Approx(0.5));
  REQUIRE(out.zero_rows.size() == 1);
  CHECK(out.zero_rows[0] == 1);

  // Idempotent, and row sums pinned to 1 on random rows.
  const StandardizedAbundance again = standardize_abundance(out.values);
  CHECK(again.values.row(0).isApprox(out.values.row(0), 1e-14));
  Rng rng(5);
  Eigen::MatrixXd r(3, 7);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 7; ++j) r(i, j) = rng.uniform(0.01, 4.0);
  const StandardizedAbundance rs = standardize_abundance(r);
  for (int i = 0; i < 3; ++i) {
    CHECK(rs.values.row(i).sum() == doctest::Approx(1.0).epsilon(1e-12));
    // Within-row ratios preserved.
    CHECK(rs.values(i, 2) / rs.values(i, 5) == doctest::Approx(r(i, 2) / r(i, 5)).epsilon(1e-12));
  }
}

TEST_CASE("random gauge-equivalent raw triples normalize identically") {
  // Transformations moving per-species and per-dataset factors around leave
  // all cell intensities and the standardized effort ratios unchanged, so
  // the normalized parameters must coincide.
  Rng rng(2024);
  for (int trial = 0; trial < 20; ++trial) {
    const int I = 2 + static_cast<int>(rng.below(4));
    const int J = 2 + static_cast<int>(rng.below(4));
    IndexSpace space = IndexSpace::numbered(I, J);
    Eigen::MatrixXd n(I, J), e(J, 2), p(I, 2);
    for (int i = 0; i < I; ++i)
      for (int j = 0; j < J; ++j) n(i, j) = rng.uniform(0.5, 8.0);
    for (int j = 0; j < J; ++j)
      for (int k = 0; k < 2; ++k) e(j, k) = rng.uniform(0.5, 8.0);
    for (int i = 0; i < I; ++i)
      for (int k = 0; k < 2; ++k) p(i, k) = rng.uniform(0.1, 1.0);

    Eigen::MatrixXd n2 = n, e2 = e, p2 = p;
    for (int i = 0; i < I; ++i) {
      const double c = rng.uniform(0.25, 4.0);
      n2.row(i) *= c;
      p2.row(i) /= c;
    }
    for (int k = 0; k < 2; ++k) {
      const double f = rng.uniform(0.25, 4.0);
      e2.col(k) *= f;
      p2.col(k) /= f;
    }
    const double global = rng.uniform(0.25, 4.0);
    n2 *= global;
    e2 /= global;

    ParameterSet a = normalize_parameters(space, n, e, p);
    ParameterSet b = normalize_parameters(space, n2, e2, p2);
    CHECK(a.n_tilde().isApprox(b.n_tilde(), 1e-9));
    CHECK(a.e_tilde().isApprox(b.e_tilde(), 1e-9));
    CHECK(a.p_tilde().isApprox(b.p_tilde(), 1e-9));
  }
}
