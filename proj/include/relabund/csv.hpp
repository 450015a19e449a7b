#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "relabund/types.hpp"
#include "relabund/validation.hpp"

namespace relabund {

// Canonical counts layout: header `dataset,species,site,count`, optionally
// followed by `habitat` and/or `point_id,year`. Dataset values are `std` and
// `opp`. Cells absent for a monitored species are observed zeros.
struct IngestOptions {
  std::optional<std::vector<std::string>> monitored_std;  // default: inferred from row presence
  bool pool_habitat = false;
};

struct IngestResult {
  CountTable table;                 // all habitats combined
  std::optional<StdProvenance> provenance;  // when point_id/year columns are present
  bool had_habitat = false;
  // One independent model instance per habitat stratum when pooling is on.
  std::vector<std::pair<std::string, CountTable>> habitat_tables;
};

IngestResult ingest_counts(std::istream& in, const IngestOptions& options = {});
IngestResult ingest_counts_file(const std::string& path, const IngestOptions& options = {});

// Emits every cell for monitored species explicitly, std rows first, in
// species-then-site order. ingest(emit(t)) == t.
void emit_counts(const CountTable& table, std::ostream& out);
std::string emit_counts_string(const CountTable& table);

EffortSpec read_effort(std::istream& in, const IndexSpace& space);
EffortSpec read_effort_file(const std::string& path, const IndexSpace& space);
void write_effort(const EffortSpec& effort, const IndexSpace& space, std::ostream& out);

// Shortest round-trip decimal representation.
std::string format_double(double v);

}  // namespace relabund
