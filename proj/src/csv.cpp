#include "relabund/csv.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

namespace relabund {

namespace {

std::vector<std::string> split_csv_line(const std::string& line, long line_no) {
  if (line.find('"') != std::string::npos)
    throw InputError("quoted fields are not supported", line_no);
  std::vector<std::string> fields;
  std::string field;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(field);
      field.clear();
    } else if (c != '\r') {
      field += c;
    }
  }
  fields.push_back(field);
  return fields;
}

long long parse_count(const std::string& s, long line_no) {
  long long v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size())
    throw InputError("count is not an integer: '" + s + "'", line_no);
  if (v < 0) throw InputError("negative count", line_no);
  return v;
}

double parse_real(const std::string& s, long line_no) {
  try {
    size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw InputError("not a number: '" + s + "'", line_no);
  }
}

struct RawRow {
  int dataset;
  std::string species, site, habitat, point, year;
  long long count;
  long line_no;
};

}  // namespace

std::string format_double(double v) {
  char buf[64];
  const auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

IngestResult ingest_counts(std::istream& in, const IngestOptions& options) {
  std::string line;
  if (!std::getline(in, line)) throw InputError("empty counts file", 1);
  const std::vector<std::string> header = split_csv_line(line, 1);

  size_t col = 0;
  auto expect = [&](const char* name) {
    if (col >= header.size() || header[col] != name)
      throw InputError(std::string("counts header must start with dataset,species,site,count; "
                                   "unexpected column ") +
                       (col < header.size() ? "'" + header[col] + "'" : "(missing)"), 1);
    ++col;
  };
  expect("dataset");
  expect("species");
  expect("site");
  expect("count");
  bool has_habitat = false, has_provenance = false;
  if (col < header.size() && header[col] == "habitat") {
    has_habitat = true;
    ++col;
  }
  if (col < header.size() && header[col] == "point_id") {
    if (col + 1 >= header.size() || header[col + 1] != "year")
      throw InputError("point_id column must be followed by year", 1);
    has_provenance = true;
    col += 2;
  }
  if (col != header.size())
    throw InputError("unknown counts column '" + header[col] + "'", 1);

  std::vector<RawRow> rows;
  std::vector<std::string> species_order, site_order;
  std::set<std::string> species_seen, site_seen;
  std::set<std::string> habitats_seen;
  std::vector<std::string> habitat_order;
  std::set<std::string> dup_keys;

  long line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const std::vector<std::string> fields = split_csv_line(line, line_no);
    if (fields.size() != header.size())
      throw InputError("expected " + std::to_string(header.size()) + " fields, found " +
                       std::to_string(fields.size()), line_no);
    RawRow row;
    row.line_no = line_no;
    if (fields[0] == kDatasetLabels[kStd])
      row.dataset = kStd;
    else if (fields[0] == kDatasetLabels[kOpp])
      row.dataset = kOpp;
    else
      throw InputError("unknown dataset label '" + fields[0] + "'", line_no);
    row.species = fields[1];
    row.site = fields[2];
    if (row.species.empty() || row.site.empty())
      throw InputError("empty species or site label", line_no);
    row.count = parse_count(fields[3], line_no);
    size_t f = 4;
    if (has_habitat) row.habitat = fields[f++];
    if (has_provenance) {
      row.point = fields[f++];
      row.year = fields[f++];
      if (row.dataset == kStd && (row.point.empty() || row.year.empty()))
        throw InputError("standardized rows need point_id and year", line_no);
    }

    const std::string key = fields[0] + "\x1f" + row.species + "\x1f" + row.site + "\x1f" +
                            row.habitat + "\x1f" + row.point + "\x1f" + row.year;
    if (!dup_keys.insert(key).second) throw InputError("duplicate row", line_no);

    if (species_seen.insert(row.species).second) species_order.push_back(row.species);
    if (site_seen.insert(row.site).second) site_order.push_back(row.site);
    if (has_habitat && habitats_seen.insert(row.habitat).second)
      habitat_order.push_back(row.habitat);
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw InputError("counts file has no data rows", line_no);

  IndexSpace space(species_order, site_order);
  const int I = space.n_species(), J = space.n_sites();

  // Monitored sets: explicit list, otherwise presence of at least one row.
  std::array<std::vector<char>, kNumDatasets> monitored;
  monitored[kOpp].assign(static_cast<size_t>(I), 1);
  monitored[kStd].assign(static_cast<size_t>(I), 0);
  if (options.monitored_std) {
    for (const std::string& label : *options.monitored_std) {
      const auto idx = space.species_index(label);
      if (!idx) throw InputError("monitored species '" + label + "' never appears in the counts");
      monitored[kStd][static_cast<size_t>(*idx)] = 1;
    }
  } else {
    for (const RawRow& row : rows)
      if (row.dataset == kStd) monitored[kStd][static_cast<size_t>(*space.species_index(row.species))] = 1;
  }

  IngestResult result{CountTable(space, monitored), std::nullopt, has_habitat, {}};
  for (const RawRow& row : rows) {
    const int i = *space.species_index(row.species);
    const int j = *space.site_index(row.site);
    if (row.dataset == kStd && !monitored[kStd][static_cast<size_t>(i)] && row.count > 0)
      throw InputError("count for species outside the monitored list: " + row.species,
                       row.line_no);
    if (row.count > 0 || monitored[static_cast<size_t>(row.dataset)][static_cast<size_t>(i)])
      result.table.add(i, j, row.dataset, row.count);
  }

  if (has_provenance) {
    StdProvenance prov;
    prov.site_records.resize(static_cast<size_t>(J));
    std::map<std::pair<int, std::pair<std::string, std::string>>, size_t> record_of;
    for (const RawRow& row : rows) {
      if (row.dataset != kStd) continue;
      const int i = *space.species_index(row.species);
      const int j = *space.site_index(row.site);
      const auto key = std::make_pair(j, std::make_pair(row.point, row.year));
      auto it = record_of.find(key);
      if (it == record_of.end()) {
        PointYearRecord rec;
        rec.point = row.point;
        rec.year = row.year;
        rec.counts.assign(static_cast<size_t>(I), 0);
        prov.site_records[static_cast<size_t>(j)].push_back(std::move(rec));
        it = record_of.emplace(key, prov.site_records[static_cast<size_t>(j)].size() - 1).first;
      }
      prov.site_records[static_cast<size_t>(j)][it->second].counts[static_cast<size_t>(i)] +=
          row.count;
    }
    result.provenance = std::move(prov);
  }

  if (has_habitat && options.pool_habitat) {
    for (const std::string& habitat : habitat_order) {
      std::array<std::vector<char>, kNumDatasets> strat_monitored;
      strat_monitored[kOpp].assign(static_cast<size_t>(I), 1);
      strat_monitored[kStd].assign(static_cast<size_t>(I), 0);
      if (options.monitored_std) {
        strat_monitored[kStd] = monitored[kStd];
      } else {
        for (const RawRow& row : rows)
          if (row.dataset == kStd && row.habitat == habitat)
            strat_monitored[kStd][static_cast<size_t>(*space.species_index(row.species))] = 1;
      }
      CountTable strat(space, strat_monitored);
      for (const RawRow& row : rows) {
        if (row.habitat != habitat) continue;
        const int i = *space.species_index(row.species);
        const int j = *space.site_index(row.site);
        if (row.count > 0 || strat_monitored[static_cast<size_t>(row.dataset)][static_cast<size_t>(i)])
          strat.add(i, j, row.dataset, row.count);
      }
      result.habitat_tables.emplace_back(habitat, std::move(strat));
    }
  }
  return result;
}

IngestResult ingest_counts_file(const std::string& path, const IngestOptions& options) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open counts file: " + path);
  return ingest_counts(in, options);
}

void emit_counts(const CountTable& table, std::ostream& out) {
  // Species-major so that re-ingesting reproduces the label order even when
  // a species is missing from the standardized dataset.
  const IndexSpace& space = table.space();
  out << "dataset,species,site,count\n";
  for (int i = 0; i < space.n_species(); ++i)
    for (int j = 0; j < space.n_sites(); ++j)
      for (int k = 0; k < kNumDatasets; ++k) {
        if (!table.monitored(i, k)) continue;
        out << kDatasetLabels[k] << ',' << space.species_label(i) << ',' << space.site_label(j)
            << ',' << table.at(i, j, k) << '\n';
      }
}

std::string emit_counts_string(const CountTable& table) {
  std::ostringstream out;
  emit_counts(table, out);
  return out.str();
}

EffortSpec read_effort(std::istream& in, const IndexSpace& space) {
  std::string line;
  if (!std::getline(in, line)) throw InputError("empty effort file", 1);
  {
    const std::vector<std::string> header = split_csv_line(line, 1);
    if (header.size() != 2 || header[0] != "site" || header[1] != "effort")
      throw InputError("effort header must be site,effort", 1);
  }
  std::vector<char> seen(static_cast<size_t>(space.n_sites()), 0);
  EffortSpec effort;
  effort.effort0.assign(static_cast<size_t>(space.n_sites()), 0.0);
  long line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const std::vector<std::string> fields = split_csv_line(line, line_no);
    if (fields.size() != 2) throw InputError("expected 2 fields", line_no);
    const auto j = space.site_index(fields[0]);
    if (!j) throw InputError("unknown site '" + fields[0] + "' in effort file", line_no);
    if (seen[static_cast<size_t>(*j)]) throw InputError("duplicate effort for site " + fields[0], line_no);
    seen[static_cast<size_t>(*j)] = 1;
    const double v = parse_real(fields[1], line_no);
    if (!(v > 0.0)) throw InputError("effort must be positive", line_no);
    effort.effort0[static_cast<size_t>(*j)] = v;
  }
  for (int j = 0; j < space.n_sites(); ++j)
    if (!seen[static_cast<size_t>(j)])
      throw InputError("missing effort for site " + space.site_label(j));
  return effort;
}

EffortSpec read_effort_file(const std::string& path, const IndexSpace& space) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open effort file: " + path);
  return read_effort(in, space);
}

void write_effort(const EffortSpec& effort, const IndexSpace& space, std::ostream& out) {
  out << "site,effort\n";
  for (int j = 0; j < space.n_sites(); ++j)
    out << space.site_label(j) << ',' << format_double(effort.effort0[static_cast<size_t>(j)])
        << '\n';
}

}  // namespace relabund
