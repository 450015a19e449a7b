#include <doctest.h>

#include <sstream>

#include "oracles.hpp"
#include "relabund/csv.hpp"
#include "relabund/design.hpp"
#include "relabund/fit.hpp"
#include "relabund/simulate.hpp"
#include "test_helpers.hpp"

using namespace relabund;

TEST_CASE("minimal counts file builds the full table") {
  std::istringstream in(
      "dataset,species,site,count\n"
      "std,a,s1,1\nstd,a,s2,2\nstd,b,s1,3\nstd,b,s2,4\n"
      "opp,a,s1,5\nopp,a,s2,6\nopp,b,s1,7\nopp,b,s2,8\n");
  const IngestResult result = ingest_counts(in);
  CHECK(result.table.space().n_species() == 2);
  CHECK(result.table.space().n_sites() == 2);
  CHECK(result.table.at(0, 0, kStd) == 1);
  CHECK(result.table.at(1, 1, kOpp) == 8);
  CHECK(result.table.total() == 36);
  CHECK(result.table.monitored(0, kStd));
  CHECK(!result.provenance.has_value());
}

TEST_CASE("ingest-emit round trip is the identity") {
  Rng rng(9);
  ParameterSet params = helpers::random_params(4, 3, rng, {2});
  const CountTable table = simulate_counts(params, 1234);
  const std::string text = emit_counts_string(table);
  std::istringstream in(text);
  const IngestResult back = ingest_counts(in);
  CHECK(back.table == table);
  // Byte-stable emission.
  CHECK(emit_counts_string(back.table) == text);
}

TEST_CASE("omitted zero rows fit identically to explicit zeros") {
  const std::string explicit_zeros =
      "dataset,species,site,count\n"
      "std,a,s1,4\nstd,a,s2,0\nstd,b,s1,2\nstd,b,s2,5\n"
      "opp,a,s1,9\nopp,a,s2,3\nopp,b,s1,11\nopp,b,s2,6\n";
  const std::string sparse =
      "dataset,species,site,count\n"
      "std,a,s1,4\nstd,b,s1,2\nstd,b,s2,5\n"
      "opp,a,s1,9\nopp,a,s2,3\nopp,b,s1,11\nopp,b,s2,6\n";
  std::istringstream full_in(explicit_zeros), sparse_in(sparse);
  const IngestResult full = ingest_counts(full_in);
  const IngestResult thin = ingest_counts(sparse_in);
  CHECK(full.table == thin.table);

  EffortSpec effort;
  effort.effort0 = {1.0, 1.0};
  const FitResult a = fit(build_design(full.table, effort), full.table);
  const FitResult b = fit(build_design(thin.table, effort), thin.table);
  CHECK(a.params.n_tilde().isApprox(b.params.n_tilde(), 1e-12));
}

TEST_CASE("habitat pooling partitions the counts exactly") {
  std::istringstream in(
      "dataset,species,site,count,habitat\n"
      "std,a,s1,4,forest\nstd,a,s1,6,meadow\n"
      "std,b,s1,1,forest\nstd,b,s1,2,meadow\n"
      "opp,a,s1,10,forest\nopp,a,s1,20,meadow\n"
      "opp,b,s1,3,forest\nopp,b,s1,5,meadow\n");
  IngestOptions opts;
  opts.pool_habitat = true;
  const IngestResult result = ingest_counts(in, opts);
  REQUIRE(result.habitat_tables.size() == 2);
  CHECK(result.habitat_tables[0].first == "forest");
  CHECK(result.habitat_tables[1].first == "meadow");
  // The combined table sums the strata cellwise.
  for (int i = 0; i < 2; ++i)
    for (int k = 0; k < 2; ++k) {
      const long long total = result.table.at(i, 0, k);
      const long long partitioned = result.habitat_tables[0].second.at(i, 0, k) +
                                    result.habitat_tables[1].second.at(i, 0, k);
      CHECK(total == partitioned);
    }
  CHECK(result.habitat_tables[0].second.at(0, 0, kStd) == 4);
  CHECK(result.habitat_tables[1].second.at(0, 0, kOpp) == 20);
}

TEST_CASE("point-year provenance is captured for subsampling") {
  std::istringstream in(
      "dataset,species,site,count,point_id,year\n"
      "std,a,s1,2,p1,2008\nstd,a,s1,1,p1,2009\nstd,a,s1,4,p2,2008\n"
      "std,b,s1,3,p1,2008\n"
      "opp,a,s1,9,,\nopp,b,s1,5,,\n");
  const IngestResult result = ingest_counts(in);
  REQUIRE(result.provenance.has_value());
  CHECK(result.provenance->total_point_years() == 3);
  CHECK(result.table.at(0, 0, kStd) == 7);

  const SubsampleResult reduced = subsample_effort(result.table, *result.provenance, 5);
  CHECK(reduced.counts.at(0, 0, kOpp) == 9);
  CHECK(reduced.effort.effort0 == std::vector<double>{1.0});
  CHECK(reduced.effort_reduction == doctest::Approx(3.0));
}

TEST_CASE("ingest rejects malformed input with line numbers") {
  SUBCASE("unknown dataset") {
    std::istringstream in("dataset,species,site,count\nstd,a,s1,1\nweird,a,s1,2\n");
    CHECK_THROWS_WITH_AS(ingest_counts(in), doctest::Contains("line 3"), InputError);
  }
  SUBCASE("negative count") {
    std::istringstream in("dataset,species,site,count\nstd,a,s1,-4\n");
    CHECK_THROWS_AS(ingest_counts(in), InputError);
  }
  SUBCASE("duplicate row") {
    std::istringstream in("dataset,species,site,count\nstd,a,s1,1\nstd,a,s1,2\n");
    CHECK_THROWS_WITH_AS(ingest_counts(in), doctest::Contains("duplicate"), InputError);
  }
  SUBCASE("bad header") {
    std::istringstream in("species,dataset,site,count\nstd,a,s1,1\n");
    CHECK_THROWS_AS(ingest_counts(in), InputError);
  }
  SUBCASE("wrong field count") {
    std::istringstream in("dataset,species,site,count\nstd,a,s1\n");
    CHECK_THROWS_WITH_AS(ingest_counts(in), doctest::Contains("line 2"), InputError);
  }
  SUBCASE("fractional count") {
    std::istringstream in("dataset,species,site,count\nstd,a,s1,1.5\n");
    CHECK_THROWS_AS(ingest_counts(in), InputError);
  }
}

TEST_CASE("monitored list overrides row-presence inference") {
  std::istringstream in(
      "dataset,species,site,count\n"
      "std,a,s1,3\nopp,a,s1,5\nopp,b,s1,7\n");
  IngestOptions opts;
  opts.monitored_std = std::vector<std::string>{"a", "b"};
  const IngestResult result = ingest_counts(in, opts);
  CHECK(result.table.monitored(1, kStd));  // declared, despite no std rows
  CHECK(result.table.at(1, 0, kStd) == 0);

  std::istringstream in2("dataset,species,site,count\nstd,a,s1,3\nopp,b,s1,7\n");
  IngestOptions bad;
  bad.monitored_std = std::vector<std::string>{"zz"};
  CHECK_THROWS_AS(ingest_counts(in2, bad), InputError);
}

TEST_CASE("effort files are validated against the site axis") {
  IndexSpace space({"a"}, {"s1", "s2"});
  SUBCASE("complete") {
    std::istringstream in("site,effort\ns1,2\ns2,0.5\n");
    const EffortSpec effort = read_effort(in, space);
    CHECK(effort.effort0 == std::vector<double>{2.0, 0.5});
  }
  SUBCASE("missing site") {
    std::istringstream in("site,effort\ns1,2\n");
    CHECK_THROWS_WITH_AS(read_effort(in, space), doctest::Contains("missing effort"), InputError);
  }
  SUBCASE("unknown site") {
    std::istringstream in("site,effort\ns1,2\ns2,1\ns3,4\n");
    CHECK_THROWS_AS(read_effort(in, space), InputError);
  }
  SUBCASE("non-positive effort") {
    std::istringstream in("site,effort\ns1,0\ns2,1\n");
    CHECK_THROWS_AS(read_effort(in, space), InputError);
  }
}

TEST_CASE("doubles are written in shortest round-trip form") {
  CHECK(format_double(1.0) == "1");
  CHECK(format_double(0.5) == "0.5");
  CHECK(format_double(1.0 / 3.0) == "0.3333333333333333");
}
