// Batch command-line surface: ingestion, fitting, simulation, variance
// verification, validation, effort subsampling. One JSON report per run;
// exit 0 on success, 1 on estimation failure, 2 on input errors.

#include <CLI11.hpp>
#include <json.hpp>

#include <Eigen/Dense>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "relabund/csv.hpp"
#include "relabund/design.hpp"
#include "relabund/estimators.hpp"
#include "relabund/fit.hpp"
#include "relabund/simulate.hpp"
#include "relabund/validation.hpp"
#include "relabund/variance.hpp"
#include "relabund/version.hpp"

using json = nlohmann::ordered_json;
using namespace relabund;

namespace {

// ---- report plumbing -------------------------------------------------------

uint64_t fnv1a64(const std::string& data) {
  uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string config_hash(const json& config) {
  // Key order is canonicalized before hashing.
  const nlohmann::json sorted = nlohmann::json::parse(config.dump());
  char buf[19];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a64(sorted.dump())));
  return buf;
}

json envelope(const std::string& command, const json& config) {
  json doc;
  doc["schema_version"] = 1;
  doc["tool"] = {{"name", "relabund"}, {"version", kVersion}};
  doc["command"] = command;
  doc["config"] = config;
  doc["config_hash"] = config_hash(config);
  return doc;
}

void write_report(const std::string& out_path, const json& doc) {
  if (out_path.empty()) {
    std::cout << doc.dump(2) << "\n";
    return;
  }
  std::ofstream out(out_path, std::ios::binary);
  if (!out) throw InputError("cannot write report: " + out_path);
  out << doc.dump(2) << "\n";
}

json matrix_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

json optional_matrix_json(const Eigen::MatrixXd& m, const Eigen::MatrixXd& defined) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (defined(i, j) != 0.0)
        row.push_back(m(i, j));
      else
        row.push_back(nullptr);
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

// ---- config plumbing --------------------------------------------------------

json load_config(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream in(path);
  if (!in) throw InputError("cannot open config file: " + path);
  try {
    return json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("config is not valid JSON: ") + e.what());
  }
}

void check_keys(const json& obj, const std::string& context,
                const std::vector<std::string>& allowed) {
  if (!obj.is_object()) throw InputError(context + " must be an object");
  for (const auto& item : obj.items()) {
    bool known = false;
    for (const std::string& key : allowed) known = known || key == item.key();
    if (!known) throw InputError("unknown key '" + item.key() + "' in " + context);
  }
}

template <typename T>
T get_or(const json& obj, const std::string& key, T fallback) {
  if (!obj.contains(key) || obj.at(key).is_null()) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw InputError("bad value for '" + key + "'");
  }
}

const json& require_key(const json& obj, const std::string& key, const std::string& context) {
  if (!obj.contains(key)) throw InputError("missing key '" + key + "' in " + context);
  return obj.at(key);
}

std::vector<std::string> labels_from(const json& value, const char* stem,
                                     const std::string& context) {
  if (value.is_number_integer()) {
    const int n = value.get<int>();
    if (n < 1) throw InputError(context + " count must be positive");
    std::vector<std::string> out;
    for (int v = 1; v <= n; ++v) {
      std::string num = std::to_string(v);
      if (num.size() < 2) num.insert(num.begin(), '0');
      out.push_back(stem + num);
    }
    return out;
  }
  if (value.is_array()) {
    std::vector<std::string> out;
    for (const auto& item : value) {
      if (!item.is_string()) throw InputError(context + " labels must be strings");
      out.push_back(item.get<std::string>());
    }
    return out;
  }
  throw InputError(context + " must be a count or an array of labels");
}

Eigen::MatrixXd matrix_from(const json& value, int rows, int cols, const std::string& context) {
  if (!value.is_array() || static_cast<int>(value.size()) != rows)
    throw InputError(context + " must be an array of " + std::to_string(rows) + " rows");
  Eigen::MatrixXd m(rows, cols);
  for (int i = 0; i < rows; ++i) {
    const auto& row = value.at(static_cast<size_t>(i));
    if (!row.is_array() || static_cast<int>(row.size()) != cols)
      throw InputError(context + " row " + std::to_string(i + 1) + " must have " +
                       std::to_string(cols) + " entries");
    for (int j = 0; j < cols; ++j) {
      if (!row.at(static_cast<size_t>(j)).is_number())
        throw InputError(context + " entries must be numbers");
      m(i, j) = row.at(static_cast<size_t>(j)).get<double>();
    }
  }
  return m;
}

Eigen::VectorXd vector_from(const json& value, int n, const std::string& context) {
  if (!value.is_array() || static_cast<int>(value.size()) != n)
    throw InputError(context + " must be an array of " + std::to_string(n) + " numbers");
  Eigen::VectorXd v(n);
  for (int a = 0; a < n; ++a) {
    if (!value.at(static_cast<size_t>(a)).is_number())
      throw InputError(context + " entries must be numbers");
    v[a] = value.at(static_cast<size_t>(a)).get<double>();
  }
  return v;
}

// ---- scenario builders ------------------------------------------------------

ParameterSet cells_params_from(const json& sc) {
  check_keys(sc, "scenario",
             {"kind", "species", "sites", "n_tilde", "effort_std", "effort_opp", "p_std", "raw",
              "reference_species"});
  IndexSpace space(labels_from(require_key(sc, "species", "scenario"), "sp", "species"),
                   labels_from(require_key(sc, "sites", "scenario"), "site", "sites"));
  const int I = space.n_species(), J = space.n_sites();

  if (sc.contains("raw")) {
    const json& raw = sc.at("raw");
    check_keys(raw, "scenario.raw", {"n", "e", "p"});
    int ref = -1;
    if (sc.contains("reference_species")) {
      const std::string label = require_key(sc, "reference_species", "scenario").get<std::string>();
      const auto idx = space.species_index(label);
      if (!idx) throw InputError("unknown reference species '" + label + "'");
      ref = *idx;
    }
    return normalize_parameters(space, matrix_from(require_key(raw, "n", "scenario.raw"), I, J, "raw.n"),
                                matrix_from(require_key(raw, "e", "scenario.raw"), J, 2, "raw.e"),
                                matrix_from(require_key(raw, "p", "scenario.raw"), I, 2, "raw.p"),
                                ref);
  }

  const Eigen::MatrixXd n = matrix_from(require_key(sc, "n_tilde", "scenario"), I, J, "n_tilde");
  const Eigen::VectorXd e0 = vector_from(require_key(sc, "effort_std", "scenario"), J, "effort_std");
  const Eigen::VectorXd e1 = vector_from(require_key(sc, "effort_opp", "scenario"), J, "effort_opp");
  Eigen::VectorXd p0 = Eigen::VectorXd::Ones(I);
  if (sc.contains("p_std")) p0 = vector_from(sc.at("p_std"), I, "p_std");

  Eigen::MatrixXd e_tilde(J, 2), p_tilde(I, 2);
  for (int j = 0; j < J; ++j) {
    e_tilde(j, kStd) = e0[j];
    e_tilde(j, kOpp) = e1[j];
  }
  int ref = -1;
  for (int i = 0; i < I; ++i) {
    p_tilde(i, kStd) = p0[i];
    p_tilde(i, kOpp) = 1.0;
    if (ref < 0 && p0[i] > 0.0) ref = i;
  }
  if (sc.contains("reference_species")) {
    const std::string label = sc.at("reference_species").get<std::string>();
    const auto idx = space.species_index(label);
    if (!idx) throw InputError("unknown reference species '" + label + "'");
    ref = *idx;
  }
  if (ref < 0) throw InputError("no species has a positive standardized detection ratio");
  return ParameterSet(space, n, e_tilde, p_tilde, ref);
}

FieldSpec field_from(const json& f, const std::string& context) {
  check_keys(f, context,
             {"kind", "value", "cx", "cy", "x0", "y0", "sx", "sy", "nx", "ny", "values",
              "factors"});
  const std::string kind = require_key(f, "kind", context).get<std::string>();
  if (kind == "constant") return FieldSpec::constant(get_or(f, "value", 1.0));
  if (kind == "linear")
    return FieldSpec::linear(get_or(f, "value", 0.0), get_or(f, "cx", 0.0), get_or(f, "cy", 0.0));
  if (kind == "gaussian")
    return FieldSpec::gaussian(get_or(f, "value", 1.0), get_or(f, "x0", 0.0),
                               get_or(f, "y0", 0.0), get_or(f, "sx", 1.0), get_or(f, "sy", 1.0));
  if (kind == "habitat_grid") {
    const int nx = get_or(f, "nx", 0), ny = get_or(f, "ny", 0);
    std::vector<double> values;
    for (const auto& v : require_key(f, "values", context)) values.push_back(v.get<double>());
    return FieldSpec::habitat_grid(nx, ny, std::move(values));
  }
  if (kind == "product") {
    std::vector<FieldSpec> factors;
    for (const auto& sub : require_key(f, "factors", context))
      factors.push_back(field_from(sub, context + ".factors"));
    return FieldSpec::product(std::move(factors));
  }
  throw InputError("unknown field kind '" + kind + "' in " + context);
}

VisitScenario visits_from(const json& sc) {
  check_keys(sc, "scenario",
             {"kind", "species", "sites", "individuals", "visits", "individual_effect"});
  VisitScenario out;
  out.space = IndexSpace(labels_from(require_key(sc, "species", "scenario"), "sp", "species"),
                         labels_from(require_key(sc, "sites", "scenario"), "site", "sites"));
  const int I = out.space.n_species(), J = out.space.n_sites();
  const Eigen::MatrixXd n =
      matrix_from(require_key(sc, "individuals", "scenario"), I, J, "individuals");
  out.n_individuals = n.cast<int>();
  if ((n - out.n_individuals.cast<double>()).cwiseAbs().maxCoeff() > 0.0)
    throw InputError("individual counts must be integers");

  const json& visits = require_key(sc, "visits", "scenario");
  check_keys(visits, "scenario.visits", {kDatasetLabels[kStd], kDatasetLabels[kOpp]});
  out.visits.assign(kNumDatasets, std::vector<std::vector<Eigen::VectorXd>>(
                                      static_cast<size_t>(J)));
  for (int k = 0; k < kNumDatasets; ++k) {
    if (!visits.contains(kDatasetLabels[k])) continue;
    const json& per_site = visits.at(kDatasetLabels[k]);
    if (!per_site.is_array() || static_cast<int>(per_site.size()) != J)
      throw InputError("visits must list every site");
    for (int j = 0; j < J; ++j)
      for (const auto& visit : per_site.at(static_cast<size_t>(j))) {
        Eigen::VectorXd probs(I);
        if (visit.is_number())
          probs.setConstant(visit.get<double>());
        else
          probs = vector_from(visit, I, "visit probabilities");
        out.visits[static_cast<size_t>(k)][static_cast<size_t>(j)].push_back(std::move(probs));
      }
  }
  if (sc.contains("individual_effect")) {
    const json& eff = sc.at("individual_effect");
    check_keys(eff, "scenario.individual_effect", {"lo", "hi"});
    out.individual_effect_lo = get_or(eff, "lo", 1.0);
    out.individual_effect_hi = get_or(eff, "hi", 1.0);
  }
  out.validate();
  return out;
}

SpatialScenario spatial_from(const json& sc) {
  check_keys(sc, "scenario",
             {"kind", "species", "sites", "domains", "intensity", "intensity_bound", "retention"});
  SpatialScenario out;
  out.space = IndexSpace(labels_from(require_key(sc, "species", "scenario"), "sp", "species"),
                         labels_from(require_key(sc, "sites", "scenario"), "site", "sites"));
  const int I = out.space.n_species(), J = out.space.n_sites();
  const json& domains = require_key(sc, "domains", "scenario");
  if (!domains.is_array() || static_cast<int>(domains.size()) != J)
    throw InputError("domains must list every site");
  for (const auto& d : domains) {
    check_keys(d, "scenario.domains", {"x0", "x1", "y0", "y1"});
    out.domains.push_back(SiteDomain{get_or(d, "x0", 0.0), get_or(d, "x1", 1.0),
                                     get_or(d, "y0", 0.0), get_or(d, "y1", 1.0)});
  }
  const json& intensity = require_key(sc, "intensity", "scenario");
  const json& bound = require_key(sc, "intensity_bound", "scenario");
  if (static_cast<int>(intensity.size()) != I || static_cast<int>(bound.size()) != I)
    throw InputError("intensity must list every species");
  for (int i = 0; i < I; ++i) {
    std::vector<FieldSpec> per_site;
    std::vector<double> per_site_bound;
    if (static_cast<int>(intensity.at(static_cast<size_t>(i)).size()) != J ||
        static_cast<int>(bound.at(static_cast<size_t>(i)).size()) != J)
      throw InputError("intensity must list every site");
    for (int j = 0; j < J; ++j) {
      per_site.push_back(field_from(intensity.at(static_cast<size_t>(i)).at(static_cast<size_t>(j)),
                                    "intensity"));
      per_site_bound.push_back(bound.at(static_cast<size_t>(i)).at(static_cast<size_t>(j)).get<double>());
    }
    out.intensity.push_back(std::move(per_site));
    out.intensity_bound.push_back(std::move(per_site_bound));
  }
  const json& retention = require_key(sc, "retention", "scenario");
  if (static_cast<int>(retention.size()) != I)
    throw InputError("retention must list every species");
  for (int i = 0; i < I; ++i) {
    const auto& per_dataset = retention.at(static_cast<size_t>(i));
    if (static_cast<int>(per_dataset.size()) != kNumDatasets)
      throw InputError("retention must list both datasets per species");
    std::vector<FieldSpec> fields;
    for (int k = 0; k < kNumDatasets; ++k)
      fields.push_back(field_from(per_dataset.at(static_cast<size_t>(k)), "retention"));
    out.retention.push_back(std::move(fields));
  }
  out.validate();
  return out;
}

ValidationScenario validation_scenario_from(const json& sc) {
  check_keys(sc, "scenario",
             {"n_species", "n_sites", "n_unmonitored", "points_per_site", "years_per_point",
              "std_rate", "species_mean_log_sd", "abundance_site_log_sd", "detect_log_sd",
              "opp_scale", "opp_site_log_sd", "area_log_sd", "ref_points_per_site",
              "ref_coverage"});
  ValidationScenario out;
  out.n_species = get_or(sc, "n_species", out.n_species);
  out.n_sites = get_or(sc, "n_sites", out.n_sites);
  out.n_unmonitored = get_or(sc, "n_unmonitored", out.n_unmonitored);
  out.points_per_site = get_or(sc, "points_per_site", out.points_per_site);
  out.years_per_point = get_or(sc, "years_per_point", out.years_per_point);
  out.std_rate = get_or(sc, "std_rate", out.std_rate);
  out.species_mean_log_sd = get_or(sc, "species_mean_log_sd", out.species_mean_log_sd);
  out.abundance_site_log_sd = get_or(sc, "abundance_site_log_sd", out.abundance_site_log_sd);
  out.detect_log_sd = get_or(sc, "detect_log_sd", out.detect_log_sd);
  out.opp_scale = get_or(sc, "opp_scale", out.opp_scale);
  out.opp_site_log_sd = get_or(sc, "opp_site_log_sd", out.opp_site_log_sd);
  out.area_log_sd = get_or(sc, "area_log_sd", out.area_log_sd);
  out.ref_points_per_site = get_or(sc, "ref_points_per_site", out.ref_points_per_site);
  out.ref_coverage = get_or(sc, "ref_coverage", out.ref_coverage);
  out.validate();
  return out;
}

// ---- fit command ------------------------------------------------------------

json fit_one(const CountTable& table, const EffortSpec& effort, const json& config,
             const std::string& habitat) {
  const IndexSpace& space = table.space();
  const int I = space.n_species(), J = space.n_sites();

  DesignOptions design_opts;
  if (config.contains("reference_species")) {
    const std::string label = config.at("reference_species").get<std::string>();
    const auto idx = space.species_index(label);
    if (!idx) throw InputError("unknown reference species '" + label + "'");
    design_opts.ref_species = *idx;
  }
  if (config.contains("fixed_p_std")) {
    const json& fixed = config.at("fixed_p_std");
    if (!fixed.is_object()) throw InputError("fixed_p_std must map species to values");
    std::vector<double> p0(static_cast<size_t>(I), 0.0);
    for (const auto& item : fixed.items()) {
      const auto idx = space.species_index(item.key());
      if (!idx) throw InputError("unknown species '" + item.key() + "' in fixed_p_std");
      p0[static_cast<size_t>(*idx)] = item.value().get<double>();
    }
    for (int i = 0; i < I; ++i)
      if (table.monitored(i, kStd) && !(p0[static_cast<size_t>(i)] > 0.0))
        throw InputError("fixed_p_std must cover every monitored species; missing " +
                         space.species_label(i));
    design_opts.fixed_p_std = std::move(p0);
  }

  FitOptions fit_opts;
  fit_opts.max_iterations = get_or(config, "max_iterations", fit_opts.max_iterations);
  fit_opts.deviance_rel_tol = get_or(config, "deviance_rel_tol", fit_opts.deviance_rel_tol);
  fit_opts.step_halving_max = get_or(config, "step_halving_max", fit_opts.step_halving_max);
  const std::string mode = get_or<std::string>(config, "dispersion", "quasi_poisson");
  if (mode == "quasi_poisson")
    fit_opts.dispersion_mode = DispersionMode::kQuasiPoisson;
  else if (mode == "poisson")
    fit_opts.dispersion_mode = DispersionMode::kPoisson;
  else
    throw InputError("dispersion must be 'poisson' or 'quasi_poisson'");
  if (config.contains("penalty")) {
    const json& pen = config.at("penalty");
    check_keys(pen, "penalty", {"nu", "proximity"});
    ProximityPenalty penalty;
    penalty.nu = get_or(pen, "nu", 0.0);
    const json& prox = require_key(pen, "proximity", "penalty");
    if (prox.is_string() && prox.get<std::string>() == "complete") {
      penalty.proximity = Eigen::MatrixXd::Ones(J, J) - Eigen::MatrixXd::Identity(J, J);
    } else {
      penalty.proximity = matrix_from(prox, J, J, "penalty.proximity");
    }
    fit_opts.penalty = std::move(penalty);
  }

  int ref_site = 0;
  if (config.contains("reference_site")) {
    const std::string label = config.at("reference_site").get<std::string>();
    const auto idx = space.site_index(label);
    if (!idx) throw InputError("unknown reference site '" + label + "'");
    ref_site = *idx;
  }

  const DesignSpec design = build_design(table, effort, design_opts);
  const FitResult res = fit(design, table, fit_opts);
  if (!res.converged)
    throw EstimationError("fit did not converge within " +
                          std::to_string(fit_opts.max_iterations) + " iterations");

  // Delta-method standard errors on the natural scale, per free coefficient.
  Eigen::MatrixXd n_se = Eigen::MatrixXd::Zero(I, J);
  Eigen::MatrixXd n_defined = Eigen::MatrixXd::Zero(I, J);
  Eigen::VectorXd e_se = Eigen::VectorXd::Zero(J), e_defined = Eigen::VectorXd::Zero(J);
  Eigen::VectorXd p_se = Eigen::VectorXd::Zero(I), p_defined = Eigen::VectorXd::Zero(I);
  for (size_t c = 0; c < res.coef.size(); ++c) {
    const double se_log = std::sqrt(std::max(res.coef_cov(static_cast<Eigen::Index>(c),
                                                          static_cast<Eigen::Index>(c)), 0.0));
    const DesignColumn& col = res.coef[c];
    const double value = std::exp(res.coef_values[static_cast<Eigen::Index>(c)]);
    switch (col.kind) {
      case DesignColumn::Kind::Abundance:
        n_se(col.species, col.site) = value * se_log;
        n_defined(col.species, col.site) = 1.0;
        break;
      case DesignColumn::Kind::OppEffort:
        e_se[col.site] = value * se_log;
        e_defined[col.site] = 1.0;
        break;
      case DesignColumn::Kind::StdDetect:
        p_se[col.species] = value * se_log;
        p_defined[col.species] = 1.0;
        break;
    }
  }

  json out;
  out["habitat"] = habitat.empty() ? json(nullptr) : json(habitat);
  out["species"] = space.species_labels();
  out["sites"] = space.site_labels();
  out["reference_species"] = space.species_label(res.params.ref_species());
  out["reference_site"] = space.site_label(ref_site);
  json monitored = json::array();
  for (int i = 0; i < I; ++i)
    if (table.monitored(i, kStd)) monitored.push_back(space.species_label(i));
  out["monitored_std"] = std::move(monitored);

  out["abundance"] = matrix_json(res.params.n_tilde());
  out["abundance_se"] = optional_matrix_json(n_se, n_defined);
  json e1 = json::array(), e1_se = json::array();
  for (int j = 0; j < J; ++j) {
    e1.push_back(res.params.e_tilde()(j, kOpp));
    e1_se.push_back(e_defined[j] != 0.0 ? json(e_se[j]) : json(nullptr));
  }
  out["opp_effort"] = std::move(e1);
  out["opp_effort_se"] = std::move(e1_se);
  json p0 = json::array(), p0_se = json::array();
  for (int i = 0; i < I; ++i) {
    p0.push_back(res.params.p_tilde()(i, kStd));
    p0_se.push_back(p_defined[i] != 0.0 ? json(p_se[i]) : json(nullptr));
  }
  out["std_detect"] = std::move(p0);
  out["std_detect_se"] = std::move(p0_se);

  json rel = json::array();
  for (int i = 0; i < I; ++i) {
    json row = json::array();
    const double ref_value = res.params.n_tilde()(i, ref_site);
    for (int j = 0; j < J; ++j)
      row.push_back(ref_value > 0.0 ? json(res.params.n_tilde()(i, j) / ref_value)
                                    : json(nullptr));
    rel.push_back(std::move(row));
  }
  out["relative_abundance"] = std::move(rel);
  const StandardizedAbundance standardized = standardize_abundance(res.params.n_tilde());
  out["standardized_abundance"] = matrix_json(standardized.values);

  out["deviance"] = res.deviance;
  out["log_likelihood"] = res.log_likelihood;
  out["dispersion"] = res.dispersion;
  out["dispersion_df"] = res.dispersion_df;
  out["dispersion_mode"] = mode;
  out["iterations"] = res.iterations;
  out["converged"] = res.converged;
  out["max_abs_score"] = res.max_abs_score;

  json separated = json::array();
  for (const auto& [i, j] : res.separation_flags)
    separated.push_back({space.species_label(i), space.site_label(j)});
  out["separated_cells"] = std::move(separated);
  json zero_opp = json::array();
  for (int j : res.zero_opp_sites) zero_opp.push_back(space.site_label(j));
  out["zero_opp_sites"] = std::move(zero_opp);
  json zero_std = json::array();
  for (int i : res.zero_std_species) zero_std.push_back(space.species_label(i));
  out["zero_std_species"] = std::move(zero_std);

  json log_var = json::array();
  const auto rows = between_site_log_variance(standardized.values);
  for (int i = 0; i < I; ++i)
    log_var.push_back({{"species", space.species_label(i)},
                       {"variance", rows[static_cast<size_t>(i)].n_used >= 2
                                        ? json(rows[static_cast<size_t>(i)].variance)
                                        : json(nullptr)},
                       {"n_used", rows[static_cast<size_t>(i)].n_used},
                       {"n_zero", rows[static_cast<size_t>(i)].n_zero}});
  out["between_site_log_variance"] = std::move(log_var);
  return out;
}

int cmd_fit(const std::string& config_path, const std::string& counts_path,
            const std::string& effort_path, const std::string& out_path) {
  json config = load_config(config_path);
  check_keys(config, "config",
             {"counts", "effort", "reference_species", "reference_site", "monitored_std",
              "dispersion", "max_iterations", "deviance_rel_tol", "step_halving_max",
              "fixed_p_std", "penalty", "habitat_pooling"});
  if (!counts_path.empty()) config["counts"] = counts_path;
  if (!effort_path.empty()) config["effort"] = effort_path;
  if (!config.contains("counts")) throw InputError("no counts file given (--counts or config)");
  if (!config.contains("effort")) throw InputError("no effort file given (--effort or config)");

  IngestOptions ingest_opts;
  if (config.contains("monitored_std"))
    ingest_opts.monitored_std = config.at("monitored_std").get<std::vector<std::string>>();
  ingest_opts.pool_habitat = get_or(config, "habitat_pooling", false);
  const IngestResult ingest = ingest_counts_file(config.at("counts").get<std::string>(),
                                                 ingest_opts);
  const EffortSpec effort =
      read_effort_file(config.at("effort").get<std::string>(), ingest.table.space());

  json doc = envelope("fit", config);
  json fits = json::array();
  if (ingest_opts.pool_habitat && !ingest.habitat_tables.empty()) {
    for (const auto& [habitat, table] : ingest.habitat_tables)
      fits.push_back(fit_one(table, effort, config, habitat));
  } else {
    fits.push_back(fit_one(ingest.table, effort, config, ""));
  }
  doc["result"] = {{"fits", std::move(fits)}};
  write_report(out_path, doc);
  return 0;
}

// ---- simulate command ---------------------------------------------------------

int cmd_simulate(const std::string& config_path, const std::string& out_path, uint64_t seed_flag,
                 bool seed_given) {
  json config = load_config(config_path);
  check_keys(config, "config", {"seed", "scenario", "out_counts", "out_effort"});
  if (seed_given) config["seed"] = seed_flag;
  const uint64_t seed = get_or<uint64_t>(config, "seed", 0);
  const json& sc = require_key(config, "scenario", "config");
  const std::string kind = get_or<std::string>(sc, "kind", "cells");
  const std::string counts_path = get_or<std::string>(config, "out_counts", "");
  if (counts_path.empty()) throw InputError("config must name out_counts");

  json result;
  result["kind"] = kind;
  CountTable table = [&]() {
    if (kind == "cells") return simulate_counts(cells_params_from(sc), seed);
    if (kind == "visits") return simulate_visits(visits_from(sc), seed);
    if (kind == "spatial") {
      SpatialScenario spatial = spatial_from(sc);
      json expected = json::array();
      for (int i = 0; i < spatial.space.n_species(); ++i) {
        json row = json::array();
        for (int j = 0; j < spatial.space.n_sites(); ++j) {
          json per_k = json::array();
          for (int k = 0; k < kNumDatasets; ++k) per_k.push_back(spatial.expected_count(i, j, k));
          row.push_back(std::move(per_k));
        }
        expected.push_back(std::move(row));
      }
      result["expected_counts"] = std::move(expected);
      return simulate_ipp(spatial, seed).counts;
    }
    throw InputError("unknown scenario kind '" + kind + "'");
  }();

  {
    std::ofstream out(counts_path, std::ios::binary);
    if (!out) throw InputError("cannot write counts: " + counts_path);
    emit_counts(table, out);
  }
  result["counts_path"] = counts_path;
  result["effort_path"] = nullptr;
  if (config.contains("out_effort")) {
    if (kind != "cells")
      throw InputError("out_effort is only available for the cells scenario");
    const std::string effort_path = config.at("out_effort").get<std::string>();
    std::ofstream out(effort_path, std::ios::binary);
    if (!out) throw InputError("cannot write effort: " + effort_path);
    write_effort(cells_params_from(sc).effort(), table.space(), out);
    result["effort_path"] = effort_path;
  }
  result["species"] = table.space().species_labels();
  result["sites"] = table.space().site_labels();
  result["total_counts"] = {{kDatasetLabels[kStd], 0}, {kDatasetLabels[kOpp], 0}};
  long long totals[2] = {0, 0};
  for (int j = 0; j < table.space().n_sites(); ++j)
    for (int k = 0; k < kNumDatasets; ++k) totals[k] += table.column_sum(j, k);
  result["total_counts"][kDatasetLabels[kStd]] = totals[kStd];
  result["total_counts"][kDatasetLabels[kOpp]] = totals[kOpp];

  json doc = envelope("simulate", config);
  doc["seed"] = seed;
  doc["result"] = std::move(result);
  write_report(out_path, doc);
  return 0;
}

// ---- verify-variance command ---------------------------------------------------

int cmd_verify_variance(const std::string& config_path, const std::string& out_path,
                        uint64_t seed_flag, bool seed_given, int threads) {
  json config = load_config(config_path);
  check_keys(config, "config",
             {"seed", "replicates", "e1_scale", "band", "expected_floor", "assert_std_only",
              "scenario"});
  if (seed_given) config["seed"] = seed_flag;
  const uint64_t seed = get_or<uint64_t>(config, "seed", 0);

  // Default scenario: a moderate grid with one species lacking standardized
  // coverage, matching the documented verification setting.
  json scenario;
  if (config.contains("scenario")) {
    scenario = config.at("scenario");
  } else {
    scenario = {{"kind", "cells"},
                {"species", 4},
                {"sites", 6},
                {"n_tilde", json::array()},
                {"effort_std", json::array()},
                {"effort_opp", json::array()},
                {"p_std", {1.0, 0.8, 1.3, 1.0}}};
    for (int i = 0; i < 4; ++i) {
      json row = json::array();
      for (int j = 0; j < 6; ++j) row.push_back(8.0 + 2.5 * i + 1.5 * j);
      scenario["n_tilde"].push_back(std::move(row));
    }
    for (int j = 0; j < 6; ++j) {
      scenario["effort_std"].push_back(1.0 + 0.1 * j);
      scenario["effort_opp"].push_back(1.0);  // overridden by e1_scale
    }
    config["scenario"] = scenario;
  }

  const ParameterSet truth = cells_params_from(scenario);
  VarianceMcOptions opts;
  opts.band = get_or(config, "band", opts.band);
  opts.expected_floor = get_or(config, "expected_floor", opts.expected_floor);
  opts.assert_std_only = get_or(config, "assert_std_only", opts.assert_std_only);
  opts.threads = threads;
  const double e1_scale = get_or(config, "e1_scale", 100.0);
  const int replicates = get_or(config, "replicates", 5000);
  config["e1_scale"] = e1_scale;
  config["replicates"] = replicates;

  const VarianceMcReport report =
      verify_variance_mc(truth, truth.effort(), e1_scale, replicates, seed, opts);

  json cells = json::array();
  for (const VarianceMcCell& cell : report.cells) {
    cells.push_back({{"species", truth.space().species_label(cell.species)},
                     {"site", truth.space().site_label(cell.site)},
                     {"expected_std_count", cell.expected_std_count},
                     {"mean_estimate", cell.mean_estimate},
                     {"emp_var", cell.emp_var},
                     {"analytic_var", cell.analytic_var},
                     {"var_ratio", cell.var_ratio},
                     {"emp_var_std_only", cell.emp_var_std_only},
                     {"analytic_var_std_only",
                      cell.std_only_defined ? json(cell.analytic_var_std_only) : json(nullptr)},
                     {"emp_reduction", cell.emp_reduction},
                     {"analytic_reduction",
                      cell.std_only_defined ? json(cell.analytic_reduction) : json(nullptr)},
                     {"asserted", cell.asserted},
                     {"pass", cell.pass}});
  }
  json doc = envelope("verify-variance", config);
  doc["seed"] = seed;
  doc["result"] = {{"replicates", report.replicates},
                   {"failed_replicates", report.failed_replicates},
                   {"mc_rel_se", report.mc_rel_se},
                   {"band", opts.band},
                   {"expected_floor", opts.expected_floor},
                   {"all_pass", report.all_pass},
                   {"cells", std::move(cells)}};
  write_report(out_path, doc);
  return 0;
}

// ---- validate command -----------------------------------------------------------

int cmd_validate(const std::string& config_path, const std::string& out_path, uint64_t seed_flag,
                 bool seed_given, int threads) {
  json config = load_config(config_path);
  check_keys(config, "config", {"seed", "replicates", "scenario"});
  if (seed_given) config["seed"] = seed_flag;
  const uint64_t seed = get_or<uint64_t>(config, "seed", 0);
  const int replicates = get_or(config, "replicates", 100);
  config["replicates"] = replicates;
  const ValidationScenario scenario =
      config.contains("scenario") ? validation_scenario_from(config.at("scenario"))
                                  : ValidationScenario{};

  const ValidationStudy study = run_validation_study(scenario, replicates, seed, threads);

  json medians;
  for (const auto& [method, by_group] : study.median_r) {
    json groups;
    for (const auto& [group, value] : by_group) groups[group] = value;
    medians[method] = std::move(groups);
  }
  json detail = json::array();
  for (const ReplicateMedians& rep : study.replicate_detail) {
    json r;
    r["ok"] = rep.ok;
    r["stability_median"] = rep.stability_median;
    json med;
    for (const auto& [method, by_group] : rep.median_r) {
      json groups;
      for (const auto& [group, value] : by_group) groups[group] = value;
      med[method] = std::move(groups);
    }
    r["median_r"] = std::move(med);
    detail.push_back(std::move(r));
  }
  json doc = envelope("validate", config);
  doc["seed"] = seed;
  doc["result"] = {{"replicates", study.replicates},
                   {"failed_replicates", study.failed_replicates},
                   {"frac_combined_gt_std_only", study.frac_combined_gt_std_only},
                   {"frac_combined_gt_area", study.frac_combined_gt_area},
                   {"stability_median", study.stability_median},
                   {"median_r", std::move(medians)},
                   {"replicate_detail", std::move(detail)}};
  write_report(out_path, doc);
  return 0;
}

// ---- subsample command ------------------------------------------------------------

int cmd_subsample(const std::string& config_path, const std::string& counts_path,
                  const std::string& out_path, uint64_t seed_flag, bool seed_given) {
  json config = load_config(config_path);
  check_keys(config, "config", {"seed", "counts", "out_counts", "out_effort", "monitored_std"});
  if (seed_given) config["seed"] = seed_flag;
  if (!counts_path.empty()) config["counts"] = counts_path;
  if (!config.contains("counts")) throw InputError("no counts file given (--counts or config)");
  const uint64_t seed = get_or<uint64_t>(config, "seed", 0);

  IngestOptions ingest_opts;
  if (config.contains("monitored_std"))
    ingest_opts.monitored_std = config.at("monitored_std").get<std::vector<std::string>>();
  const IngestResult ingest =
      ingest_counts_file(config.at("counts").get<std::string>(), ingest_opts);
  if (!ingest.provenance)
    throw InputError("counts file has no point_id/year columns; nothing to subsample");

  const SubsampleResult reduced = subsample_effort(ingest.table, *ingest.provenance, seed);

  json result;
  const std::string reduced_counts = get_or<std::string>(config, "out_counts", "");
  if (reduced_counts.empty()) throw InputError("config must name out_counts");
  {
    std::ofstream out(reduced_counts, std::ios::binary);
    if (!out) throw InputError("cannot write counts: " + reduced_counts);
    emit_counts(reduced.counts, out);
  }
  result["counts_path"] = reduced_counts;
  result["effort_path"] = nullptr;
  if (config.contains("out_effort")) {
    const std::string effort_path = config.at("out_effort").get<std::string>();
    std::ofstream out(effort_path, std::ios::binary);
    if (!out) throw InputError("cannot write effort: " + effort_path);
    write_effort(reduced.effort, reduced.counts.space(), out);
    result["effort_path"] = effort_path;
  }
  result["point_years_before"] = ingest.provenance->total_point_years();
  result["point_years_after"] = reduced.counts.space().n_sites();
  result["effort_reduction"] = reduced.effort_reduction;
  json chosen = json::array();
  for (int j = 0; j < reduced.counts.space().n_sites(); ++j)
    chosen.push_back({{"site", reduced.counts.space().site_label(j)},
                      {"point", reduced.chosen[static_cast<size_t>(j)].first},
                      {"year", reduced.chosen[static_cast<size_t>(j)].second}});
  result["chosen"] = std::move(chosen);

  json doc = envelope("subsample", config);
  doc["seed"] = seed;
  doc["result"] = std::move(result);
  write_report(out_path, doc);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Relative abundance estimation from standardized and opportunistic counts"};
  app.require_subcommand(1);

  std::string config_path, counts_path, effort_path, out_path;
  uint64_t seed = 0;
  int threads = 0;
  bool seed_given = false;

  auto add_common = [&](CLI::App* cmd, bool with_counts, bool with_effort, bool with_seed,
                        bool with_threads) {
    cmd->add_option("--config", config_path, "JSON configuration file");
    cmd->add_option("--out", out_path, "report path (stdout when omitted)");
    if (with_counts) cmd->add_option("--counts", counts_path, "counts CSV");
    if (with_effort) cmd->add_option("--effort", effort_path, "effort CSV");
    if (with_seed)
      cmd->add_option("--seed", seed, "random seed")->each([&](const std::string&) {
        seed_given = true;
      });
    if (with_threads) cmd->add_option("--threads", threads, "worker threads (0 = all)");
  };

  CLI::App* fit_cmd = app.add_subcommand("fit", "fit the combined model");
  add_common(fit_cmd, true, true, false, false);
  CLI::App* sim_cmd = app.add_subcommand("simulate", "generate synthetic counts");
  add_common(sim_cmd, false, false, true, false);
  CLI::App* var_cmd = app.add_subcommand("verify-variance",
                                         "check the limit variance formulas by simulation");
  add_common(var_cmd, false, false, true, true);
  CLI::App* val_cmd = app.add_subcommand("validate", "end-to-end predictive power study");
  add_common(val_cmd, false, false, true, true);
  CLI::App* sub_cmd = app.add_subcommand("subsample", "reduce to one point-year per site");
  add_common(sub_cmd, true, false, true, false);

  CLI11_PARSE(app, argc, argv);

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    if (fit_cmd->parsed()) return cmd_fit(config_path, counts_path, effort_path, out_path);
    if (sim_cmd->parsed()) return cmd_simulate(config_path, out_path, seed, seed_given);
    if (var_cmd->parsed())
      return cmd_verify_variance(config_path, out_path, seed, seed_given, threads);
    if (val_cmd->parsed()) return cmd_validate(config_path, out_path, seed, seed_given, threads);
    if (sub_cmd->parsed())
      return cmd_subsample(config_path, counts_path, out_path, seed, seed_given);
  } catch (const InputError& e) {
    json doc;
    doc["schema_version"] = 1;
    doc["tool"] = {{"name", "relabund"}, {"version", kVersion}};
    doc["command"] = command;
    doc["error"] = {{"type", "input"}, {"message", e.what()}};
    if (e.line() >= 0) doc["error"]["line"] = e.line();
    try {
      write_report(out_path, doc);
    } catch (...) {
      std::cerr << doc.dump(2) << "\n";
    }
    std::cerr << "input error: " << e.what() << "\n";
    return 2;
  } catch (const EstimationError& e) {
    json doc;
    doc["schema_version"] = 1;
    doc["tool"] = {{"name", "relabund"}, {"version", kVersion}};
    doc["command"] = command;
    doc["error"] = {{"type", "estimation"}, {"message", e.what()}};
    try {
      write_report(out_path, doc);
    } catch (...) {
      std::cerr << doc.dump(2) << "\n";
    }
    std::cerr << "estimation error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
