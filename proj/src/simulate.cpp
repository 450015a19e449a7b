#include "relabund/simulate.hpp"

#include <algorithm>
#include <cmath>

namespace relabund {

CountTable simulate_counts(const ParameterSet& params, uint64_t seed) {
  const IndexSpace& space = params.space();
  std::array<std::vector<char>, kNumDatasets> monitored;
  monitored[kStd].resize(static_cast<size_t>(space.n_species()));
  monitored[kOpp].assign(static_cast<size_t>(space.n_species()), 1);
  for (int i = 0; i < space.n_species(); ++i)
    monitored[kStd][static_cast<size_t>(i)] = params.monitored_std(i) ? 1 : 0;

  CountTable table(space, std::move(monitored));
  Rng rng(seed);
  for (int i = 0; i < space.n_species(); ++i)
    for (int j = 0; j < space.n_sites(); ++j)
      for (int k = 0; k < kNumDatasets; ++k) {
        const double lam = params.intensity(i, j, k);
        if (lam > 0.0) table.set(i, j, k, rng.poisson(lam));
      }
  return table;
}

void VisitScenario::validate() const {
  const int I = space.n_species(), J = space.n_sites();
  if (n_individuals.rows() != I || n_individuals.cols() != J)
    throw InputError("individual matrix shape mismatch");
  if (n_individuals.minCoeff() < 0) throw InputError("negative individual count");
  if (static_cast<int>(visits.size()) != kNumDatasets)
    throw InputError("visit lists must cover both datasets");
  for (const auto& per_site : visits) {
    if (static_cast<int>(per_site.size()) != J)
      throw InputError("visit lists must cover every site");
    for (const auto& site_visits : per_site)
      for (const auto& probs : site_visits) {
        if (probs.size() != I) throw InputError("visit probability vector shape mismatch");
        for (int i = 0; i < I; ++i)
          if (!(probs[i] >= 0.0 && probs[i] <= 1.0))
            throw InputError("visit probabilities must lie in [0, 1]");
      }
  }
  if (!(individual_effect_lo >= 0.0 && individual_effect_hi >= individual_effect_lo))
    throw InputError("invalid individual effect range");
}

CountTable simulate_visits(const VisitScenario& scenario, uint64_t seed) {
  scenario.validate();
  const IndexSpace& space = scenario.space;
  const int I = space.n_species(), J = space.n_sites();
  CountTable table(space);
  Rng rng(seed);
  const bool heterogeneous =
      scenario.individual_effect_lo != 1.0 || scenario.individual_effect_hi != 1.0;

  for (int i = 0; i < I; ++i)
    for (int j = 0; j < J; ++j) {
      const int n = scenario.n_individuals(i, j);
      if (n == 0) continue;
      // Detectability multipliers persist across visits and datasets.
      std::vector<double> effect;
      if (heterogeneous) {
        effect.resize(static_cast<size_t>(n));
        for (double& e : effect)
          e = rng.uniform(scenario.individual_effect_lo, scenario.individual_effect_hi);
      }
      for (int k = 0; k < kNumDatasets; ++k) {
        long long count = 0;
        for (const Eigen::VectorXd& probs : scenario.visits[static_cast<size_t>(k)]
                                                          [static_cast<size_t>(j)]) {
          const double p = probs[i];
          for (int a = 0; a < n; ++a) {
            const double pa =
                heterogeneous ? std::clamp(p * effect[static_cast<size_t>(a)], 0.0, 1.0) : p;
            count += rng.bernoulli(pa) ? 1 : 0;
          }
        }
        table.set(i, j, k, count);
      }
    }
  return table;
}

double visit_poisson_mean(const VisitScenario& scenario, int i, int j, int k) {
  const double n = static_cast<double>(scenario.n_individuals(i, j));
  const double mid = 0.5 * (scenario.individual_effect_lo + scenario.individual_effect_hi);
  double mean = 0.0;
  for (const Eigen::VectorXd& probs : scenario.visits[static_cast<size_t>(k)]
                                                     [static_cast<size_t>(j)])
    mean += n * std::min(probs[i] * mid, 1.0);
  return mean;
}

double visit_poisson_tv_bound(const VisitScenario& scenario, int i, int j, int k) {
  const double n = static_cast<double>(scenario.n_individuals(i, j));
  const double mid = 0.5 * (scenario.individual_effect_lo + scenario.individual_effect_hi);
  double bound = 0.0;
  for (const Eigen::VectorXd& probs : scenario.visits[static_cast<size_t>(k)]
                                                     [static_cast<size_t>(j)]) {
    const double p = std::min(probs[i] * mid, 1.0);
    bound += n * p * p;
  }
  return bound;
}

double tv_distance_to_poisson(const std::vector<long long>& histogram, long long draws,
                              double mean) {
  if (draws <= 0) throw InputError("need at least one draw");
  double tv = 0.0;
  double pmf_covered = 0.0;
  for (size_t x = 0; x < histogram.size(); ++x) {
    const double pmf = std::exp(static_cast<double>(x) * std::log(mean) - mean -
                                std::lgamma(static_cast<double>(x) + 1.0));
    pmf_covered += pmf;
    const double emp = static_cast<double>(histogram[x]) / static_cast<double>(draws);
    tv += std::fabs(emp - pmf);
  }
  tv += 1.0 - pmf_covered;  // law mass beyond the histogram support
  return 0.5 * tv;
}

FieldSpec FieldSpec::constant(double v) {
  FieldSpec f;
  f.kind = Kind::kConstant;
  f.value = v;
  return f;
}

FieldSpec FieldSpec::linear(double c, double cx_, double cy_) {
  FieldSpec f;
  f.kind = Kind::kLinear;
  f.value = c;
  f.cx = cx_;
  f.cy = cy_;
  return f;
}

FieldSpec FieldSpec::gaussian(double amplitude, double x0_, double y0_, double sx_, double sy_) {
  FieldSpec f;
  f.kind = Kind::kGaussian;
  f.value = amplitude;
  f.x0 = x0_;
  f.y0 = y0_;
  f.sx = sx_;
  f.sy = sy_;
  return f;
}

FieldSpec FieldSpec::habitat_grid(int nx, int ny, std::vector<double> values) {
  if (nx < 1 || ny < 1 || static_cast<int>(values.size()) != nx * ny)
    throw InputError("habitat grid shape mismatch");
  FieldSpec f;
  f.kind = Kind::kHabitatGrid;
  f.grid_nx = nx;
  f.grid_ny = ny;
  f.grid_values = std::move(values);
  return f;
}

FieldSpec FieldSpec::product(std::vector<FieldSpec> factors) {
  FieldSpec f;
  f.kind = Kind::kProduct;
  f.factors = std::move(factors);
  return f;
}

double FieldSpec::eval(double x, double y, const SiteDomain& dom) const {
  switch (kind) {
    case Kind::kConstant:
      return value;
    case Kind::kLinear:
      return value + cx * x + cy * y;
    case Kind::kGaussian: {
      const double dx = (x - x0) / sx, dy = (y - y0) / sy;
      return value * std::exp(-0.5 * (dx * dx + dy * dy));
    }
    case Kind::kHabitatGrid: {
      int ix = static_cast<int>((x - dom.x0) / (dom.x1 - dom.x0) * grid_nx);
      int iy = static_cast<int>((y - dom.y0) / (dom.y1 - dom.y0) * grid_ny);
      ix = std::clamp(ix, 0, grid_nx - 1);
      iy = std::clamp(iy, 0, grid_ny - 1);
      return grid_values[static_cast<size_t>(iy) * static_cast<size_t>(grid_nx) +
                         static_cast<size_t>(ix)];
    }
    case Kind::kProduct: {
      double v = 1.0;
      for (const FieldSpec& f : factors) v *= f.eval(x, y, dom);
      return v;
    }
  }
  return 0.0;
}

namespace {

template <typename F>
double simpson_2d(F&& f, const SiteDomain& dom, int n) {
  if (n < 2) n = 2;
  if (n % 2 != 0) ++n;
  const double hx = (dom.x1 - dom.x0) / n;
  const double hy = (dom.y1 - dom.y0) / n;
  auto weight = [n](int idx) { return idx == 0 || idx == n ? 1.0 : (idx % 2 == 1 ? 4.0 : 2.0); };
  double total = 0.0;
  for (int iy = 0; iy <= n; ++iy) {
    const double y = dom.y0 + hy * iy;
    double row = 0.0;
    for (int ix = 0; ix <= n; ++ix) row += weight(ix) * f(dom.x0 + hx * ix, y);
    total += weight(iy) * row;
  }
  return total * hx * hy / 9.0;
}

}  // namespace

double integrate_field(const FieldSpec& f, const SiteDomain& dom, int subdivisions) {
  return simpson_2d([&](double x, double y) { return f.eval(x, y, dom); }, dom, subdivisions);
}

double integrate_product(const FieldSpec& f, const FieldSpec& g, const SiteDomain& dom,
                         int subdivisions) {
  return simpson_2d(
      [&](double x, double y) { return f.eval(x, y, dom) * g.eval(x, y, dom); }, dom,
      subdivisions);
}

void SpatialScenario::validate() const {
  const int I = space.n_species(), J = space.n_sites();
  if (static_cast<int>(domains.size()) != J) throw InputError("domains must cover every site");
  for (const SiteDomain& d : domains)
    if (!(d.x1 > d.x0 && d.y1 > d.y0)) throw InputError("degenerate site domain");
  if (static_cast<int>(intensity.size()) != I ||
      static_cast<int>(intensity_bound.size()) != I)
    throw InputError("intensity fields must cover every species");
  for (int i = 0; i < I; ++i) {
    if (static_cast<int>(intensity[static_cast<size_t>(i)].size()) != J ||
        static_cast<int>(intensity_bound[static_cast<size_t>(i)].size()) != J)
      throw InputError("intensity fields must cover every site");
    for (double b : intensity_bound[static_cast<size_t>(i)])
      if (!(b >= 0.0) || !std::isfinite(b)) throw InputError("invalid intensity bound");
  }
  if (static_cast<int>(retention.size()) != I)
    throw InputError("retention fields must cover every species");
  for (const auto& per_dataset : retention)
    if (static_cast<int>(per_dataset.size()) != kNumDatasets)
      throw InputError("retention fields must cover both datasets");
}

double SpatialScenario::expected_count(int i, int j, int k, int subdivisions) const {
  return integrate_product(intensity[static_cast<size_t>(i)][static_cast<size_t>(j)],
                           retention[static_cast<size_t>(i)][static_cast<size_t>(k)],
                           domains[static_cast<size_t>(j)], subdivisions);
}

IppResult simulate_ipp(const SpatialScenario& scenario, uint64_t seed) {
  scenario.validate();
  const IndexSpace& space = scenario.space;
  const int I = space.n_species(), J = space.n_sites();

  IppResult out{CountTable(space), {}};
  out.points.assign(static_cast<size_t>(I),
                    std::vector<std::vector<PointSet>>(
                        static_cast<size_t>(J), std::vector<PointSet>(kNumDatasets)));
  Rng rng(seed);

  for (int i = 0; i < I; ++i)
    for (int j = 0; j < J; ++j) {
      const SiteDomain& dom = scenario.domains[static_cast<size_t>(j)];
      const FieldSpec& lam = scenario.intensity[static_cast<size_t>(i)][static_cast<size_t>(j)];
      const double bound = scenario.intensity_bound[static_cast<size_t>(i)][static_cast<size_t>(j)];
      if (bound == 0.0) continue;
      const long long proposals = rng.poisson(bound * dom.area());
      long long counts[kNumDatasets] = {0, 0};
      for (long long m = 0; m < proposals; ++m) {
        const double x = rng.uniform(dom.x0, dom.x1);
        const double y = rng.uniform(dom.y0, dom.y1);
        const double value = lam.eval(x, y, dom);
        if (value > bound * (1.0 + 1e-9))
          throw InputError("intensity exceeds its declared bound");
        if (!rng.bernoulli(value / bound)) continue;
        for (int k = 0; k < kNumDatasets; ++k) {
          const double b =
              scenario.retention[static_cast<size_t>(i)][static_cast<size_t>(k)].eval(x, y, dom);
          if (!(b >= 0.0 && b <= 1.0)) throw InputError("retention probability outside [0, 1]");
          if (rng.bernoulli(b)) {
            ++counts[k];
            PointSet& ps = out.points[static_cast<size_t>(i)][static_cast<size_t>(j)]
                                     [static_cast<size_t>(k)];
            ps.x.push_back(x);
            ps.y.push_back(y);
          }
        }
      }
      for (int k = 0; k < kNumDatasets; ++k) out.counts.set(i, j, k, counts[k]);
    }
  return out;
}

}  // namespace relabund
