#include "relabund/fit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace relabund {

namespace {

constexpr double kEtaMax = 250.0;  // exp stays finite well beyond any sane fit
constexpr double kWeightFloor = 1e-12;

struct Workspace {
  const DesignSpec& design;
  Eigen::VectorXd counts;   // per row
  double count_total = 0.0;

  Workspace(const DesignSpec& d, const CountTable& table) : design(d) {
    counts.resize(static_cast<Eigen::Index>(d.rows.size()));
    for (size_t r = 0; r < d.rows.size(); ++r) {
      const DesignRow& row = d.rows[r];
      counts[static_cast<Eigen::Index>(r)] =
          static_cast<double>(table.at(row.species, row.site, row.dataset));
    }
    count_total = counts.sum();
  }

  Eigen::VectorXd eta(const Eigen::VectorXd& theta) const {
    Eigen::VectorXd out(counts.size());
    for (size_t r = 0; r < design.rows.size(); ++r) {
      const DesignRow& row = design.rows[r];
      double v = row.offset;
      if (row.col_n >= 0) v += theta[row.col_n];
      if (row.col_e >= 0) v += theta[row.col_e];
      if (row.col_p >= 0) v += theta[row.col_p];
      out[static_cast<Eigen::Index>(r)] = std::min(v, kEtaMax);
    }
    return out;
  }

  static Eigen::VectorXd lambda(const Eigen::VectorXd& eta) { return eta.array().exp(); }

  double deviance(const Eigen::VectorXd& lam) const {
    double dev = 0.0;
    for (Eigen::Index r = 0; r < counts.size(); ++r) {
      const double x = counts[r];
      dev += x > 0.0 ? x * std::log(x / lam[r]) - (x - lam[r]) : lam[r];
    }
    return 2.0 * dev;
  }

  double log_likelihood(const Eigen::VectorXd& eta, const Eigen::VectorXd& lam) const {
    double ll = 0.0;
    for (Eigen::Index r = 0; r < counts.size(); ++r)
      ll += counts[r] * eta[r] - lam[r] - std::lgamma(counts[r] + 1.0);
    return ll;
  }

  Eigen::VectorXd score(const Eigen::VectorXd& lam) const {
    Eigen::VectorXd g = Eigen::VectorXd::Zero(design.n_cols());
    for (size_t r = 0; r < design.rows.size(); ++r) {
      const DesignRow& row = design.rows[r];
      const double resid = counts[static_cast<Eigen::Index>(r)] - lam[static_cast<Eigen::Index>(r)];
      if (row.col_n >= 0) g[row.col_n] += resid;
      if (row.col_e >= 0) g[row.col_e] += resid;
      if (row.col_p >= 0) g[row.col_p] += resid;
    }
    return g;
  }

  Eigen::MatrixXd information(const Eigen::VectorXd& lam) const {
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(design.n_cols(), design.n_cols());
    for (size_t r = 0; r < design.rows.size(); ++r) {
      const DesignRow& row = design.rows[r];
      const double w = std::max(lam[static_cast<Eigen::Index>(r)], kWeightFloor);
      const int c[3] = {row.col_n, row.col_e, row.col_p};
      for (int a = 0; a < 3; ++a) {
        if (c[a] < 0) continue;
        for (int b = 0; b < 3; ++b) {
          if (c[b] < 0) continue;
          h(c[a], c[b]) += w;
        }
      }
    }
    return h;
  }
};

Eigen::VectorXd solve_spd(const Eigen::MatrixXd& h, const Eigen::VectorXd& b) {
  Eigen::LDLT<Eigen::MatrixXd> ldlt(h);
  if (ldlt.info() != Eigen::Success)
    throw EstimationError("singular working system: the data do not identify every coefficient");
  Eigen::VectorXd x = ldlt.solve(b);
  const double resid = (h * x - b).norm();
  if (!x.allFinite() || resid > 1e-6 * (b.norm() + 1.0))
    throw EstimationError("singular working system: the data do not identify every coefficient");
  return x;
}

void validate_penalty(const ProximityPenalty& pen, int n_sites) {
  if (!(pen.nu >= 0.0)) throw InputError("penalty strength must be non-negative");
  const Eigen::MatrixXd& pi = pen.proximity;
  if (pi.rows() != n_sites || pi.cols() != n_sites)
    throw InputError("proximity matrix shape does not match the site count");
  for (int j = 0; j < n_sites; ++j) {
    if (pi(j, j) != 0.0) throw InputError("proximity matrix must have a zero diagonal");
    for (int m = 0; m < n_sites; ++m) {
      if (!(pi(j, m) >= 0.0)) throw InputError("proximity entries must be non-negative");
      if (pi(j, m) != pi(m, j)) throw InputError("proximity matrix must be symmetric");
    }
  }
}

// Natural-scale abundance matrix for a coefficient vector; separated cells
// stay at zero.
Eigen::MatrixXd abundance_from_theta(const DesignSpec& d, const Eigen::VectorXd& theta) {
  const int I = d.space.n_species(), J = d.space.n_sites();
  Eigen::MatrixXd n = Eigen::MatrixXd::Zero(I, J);
  for (int i = 0; i < I; ++i)
    for (int j = 0; j < J; ++j) {
      const int c = d.col_of_abundance(i, j);
      if (c >= 0) n(i, j) = std::exp(theta[c]);
    }
  return n;
}

double penalty_value(const DesignSpec& d, const Eigen::MatrixXd& n_tilde,
                     const ProximityPenalty& pen) {
  const int I = d.space.n_species(), J = d.space.n_sites();
  double total = 0.0;
  for (int i = 0; i < I; ++i)
    for (int j = 0; j < J; ++j)
      for (int m = j + 1; m < J; ++m) {
        const double pi = pen.proximity(j, m);
        if (pi == 0.0) continue;
        const double diff = n_tilde(i, j) - n_tilde(i, m);
        total += 2.0 * pi * diff * diff;  // ordered double sum counts each pair twice
      }
  return pen.nu * total;
}

void penalty_grad_hess(const DesignSpec& d, const Eigen::MatrixXd& n_tilde,
                       const ProximityPenalty& pen, Eigen::VectorXd& grad, Eigen::MatrixXd& hess) {
  const int I = d.space.n_species(), J = d.space.n_sites();
  for (int i = 0; i < I; ++i)
    for (int j = 0; j < J; ++j)
      for (int m = j + 1; m < J; ++m) {
        const double pi = pen.proximity(j, m);
        if (pi == 0.0) continue;
        const double w = 2.0 * pen.nu * pi;
        const double diff = n_tilde(i, j) - n_tilde(i, m);
        const int cj = d.col_of_abundance(i, j);
        const int cm = d.col_of_abundance(i, m);
        // d/d n_coef of w * diff^2, with N = exp(coef).
        if (cj >= 0) grad[cj] += 2.0 * w * diff * n_tilde(i, j);
        if (cm >= 0) grad[cm] -= 2.0 * w * diff * n_tilde(i, m);
        // Gauss-Newton curvature of sqrt(2w) * diff.
        const double gj = n_tilde(i, j), gm = n_tilde(i, m);
        if (cj >= 0) hess(cj, cj) += 2.0 * w * gj * gj;
        if (cm >= 0) hess(cm, cm) += 2.0 * w * gm * gm;
        if (cj >= 0 && cm >= 0) {
          hess(cj, cm) -= 2.0 * w * gj * gm;
          hess(cm, cj) -= 2.0 * w * gj * gm;
        }
      }
}

ParameterSet assemble_params(const DesignSpec& d, const Eigen::VectorXd& theta) {
  const int I = d.space.n_species(), J = d.space.n_sites();
  Eigen::MatrixXd n_tilde = abundance_from_theta(d, theta);
  Eigen::MatrixXd e_tilde(J, kNumDatasets);
  Eigen::MatrixXd p_tilde(I, kNumDatasets);
  for (int j = 0; j < J; ++j) {
    e_tilde(j, kStd) = d.effort0[static_cast<size_t>(j)];
    const int c = d.col_of_opp_effort(j);
    e_tilde(j, kOpp) = c >= 0 ? std::exp(theta[c]) : 0.0;
  }
  for (int i = 0; i < I; ++i) {
    p_tilde(i, kOpp) = 1.0;
    if (d.fixed_p_std) {
      p_tilde(i, kStd) = (*d.fixed_p_std)[static_cast<size_t>(i)];
    } else if (i == d.ref_species) {
      p_tilde(i, kStd) = 1.0;
    } else {
      const int c = d.col_of_std_detect(i);
      p_tilde(i, kStd) = c >= 0 ? std::exp(theta[c]) : 0.0;
    }
  }
  return ParameterSet(d.space, std::move(n_tilde), std::move(e_tilde), std::move(p_tilde),
                      d.ref_species);
}

}  // namespace

FitResult fit(const DesignSpec& design, const CountTable& counts, const FitOptions& options) {
  if (options.max_iterations < 1 || !(options.deviance_rel_tol > 0.0) ||
      options.step_halving_max < 0)
    throw InputError("invalid fit options");
  if (options.penalty) validate_penalty(*options.penalty, design.space.n_sites());
  if (design.rows.empty()) throw EstimationError("no likelihood-contributing cells");

  // Every free coefficient must touch at least one row.
  {
    std::vector<char> touched(static_cast<size_t>(design.n_cols()), 0);
    for (const DesignRow& row : design.rows) {
      if (row.col_n >= 0) touched[static_cast<size_t>(row.col_n)] = 1;
      if (row.col_e >= 0) touched[static_cast<size_t>(row.col_e)] = 1;
      if (row.col_p >= 0) touched[static_cast<size_t>(row.col_p)] = 1;
    }
    for (char t : touched)
      if (!t)
        throw EstimationError("singular working system: a coefficient has no observations");
  }

  Workspace ws(design, counts);
  const double score_tol = 1e-6 * (1.0 + ws.count_total);

  // One weighted least-squares pass from mu = x + 0.5 gives the start.
  Eigen::VectorXd theta;
  {
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(design.n_cols(), design.n_cols());
    Eigen::VectorXd b = Eigen::VectorXd::Zero(design.n_cols());
    for (size_t r = 0; r < design.rows.size(); ++r) {
      const DesignRow& row = design.rows[r];
      const double mu = ws.counts[static_cast<Eigen::Index>(r)] + 0.5;
      const double z = std::log(mu) - row.offset;
      const int c[3] = {row.col_n, row.col_e, row.col_p};
      for (int a = 0; a < 3; ++a) {
        if (c[a] < 0) continue;
        b[c[a]] += mu * z;
        for (int bb = 0; bb < 3; ++bb)
          if (c[bb] >= 0) h(c[a], c[bb]) += mu;
      }
    }
    theta = solve_spd(h, b);
  }

  Eigen::VectorXd eta = ws.eta(theta);
  Eigen::VectorXd lam = Workspace::lambda(eta);
  double dev = ws.deviance(lam);
  double dev_prev = std::numeric_limits<double>::infinity();

  int iterations = 0;
  bool converged = false;
  Eigen::VectorXd g = ws.score(lam);

  while (iterations < options.max_iterations) {
    if (std::isfinite(dev_prev) &&
        std::fabs(dev_prev - dev) < options.deviance_rel_tol * (0.1 + std::fabs(dev)) &&
        g.cwiseAbs().maxCoeff() < score_tol) {
      converged = true;
      break;
    }

    Eigen::VectorXd delta = solve_spd(ws.information(lam), g);

    double step = 1.0;
    Eigen::VectorXd theta_try, eta_try, lam_try;
    double dev_try = std::numeric_limits<double>::infinity();
    bool accepted = false;
    for (int h = 0; h <= options.step_halving_max; ++h, step *= 0.5) {
      theta_try = theta + step * delta;
      eta_try = ws.eta(theta_try);
      lam_try = Workspace::lambda(eta_try);
      dev_try = ws.deviance(lam_try);
      if (std::isfinite(dev_try) && dev_try <= dev + 1e-12 * (0.1 + std::fabs(dev))) {
        accepted = true;
        break;
      }
    }
    ++iterations;
    if (!accepted) break;  // flat to numerical precision

    theta = theta_try;
    eta = eta_try;
    lam = lam_try;
    dev_prev = dev;
    dev = dev_try;
    g = ws.score(lam);
  }
  if (!converged) {
    // The loop may stop on a step so small the deviance cannot move; accept
    // if the score criterion holds.
    converged = g.cwiseAbs().maxCoeff() < score_tol;
  }

  // Penalized refinement in the same coefficient space.
  const bool penalized = options.penalty && options.penalty->nu > 0.0;
  if (penalized) {
    const ProximityPenalty& pen = *options.penalty;
    auto objective = [&](const Eigen::VectorXd& th, Eigen::VectorXd& et, Eigen::VectorXd& la) {
      et = ws.eta(th);
      la = Workspace::lambda(et);
      double f = 0.0;
      for (Eigen::Index r = 0; r < ws.counts.size(); ++r)
        f += la[r] - ws.counts[r] * et[r];
      return f + penalty_value(design, abundance_from_theta(design, th), pen);
    };

    double f = objective(theta, eta, lam);
    const double grad_tol = 1e-8 * (1.0 + ws.count_total);
    for (int it = 0; it < 500; ++it) {
      const Eigen::MatrixXd n_tilde = abundance_from_theta(design, theta);
      Eigen::VectorXd grad = -ws.score(lam);
      Eigen::MatrixXd hess = ws.information(lam);
      penalty_grad_hess(design, n_tilde, pen, grad, hess);
      if (grad.cwiseAbs().maxCoeff() < grad_tol) break;
      hess.diagonal().array() += 1e-12 * (1.0 + hess.diagonal().maxCoeff());
      Eigen::VectorXd delta = solve_spd(hess, -grad);
      const double slope = grad.dot(delta);
      double step = 1.0;
      bool accepted = false;
      Eigen::VectorXd eta_try, lam_try;
      for (int h = 0; h < 40; ++h, step *= 0.5) {
        Eigen::VectorXd theta_try = theta + step * delta;
        const double f_try = objective(theta_try, eta_try, lam_try);
        if (std::isfinite(f_try) && f_try <= f + 1e-4 * step * slope) {
          theta = theta_try;
          eta = eta_try;
          lam = lam_try;
          f = f_try;
          accepted = true;
          break;
        }
      }
      ++iterations;
      if (!accepted) break;
    }
    dev = ws.deviance(lam);
    g = ws.score(lam);
  }

  // Pearson dispersion and covariance at the solution.
  double pearson = 0.0;
  for (Eigen::Index r = 0; r < ws.counts.size(); ++r) {
    const double l = std::max(lam[r], kWeightFloor);
    const double resid = ws.counts[r] - lam[r];
    pearson += resid * resid / l;
  }
  const int df = static_cast<int>(ws.counts.size()) - design.n_cols();
  const double dispersion = df > 0 ? pearson / df : 1.0;

  Eigen::MatrixXd info = ws.information(lam);
  if (penalized) {
    Eigen::VectorXd unused = Eigen::VectorXd::Zero(design.n_cols());
    penalty_grad_hess(design, abundance_from_theta(design, theta), *options.penalty, unused, info);
  }
  Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
  Eigen::MatrixXd cov = ldlt.solve(Eigen::MatrixXd::Identity(design.n_cols(), design.n_cols()));
  if (options.dispersion_mode == DispersionMode::kQuasiPoisson) cov *= dispersion;

  FitResult result{assemble_params(design, theta),
                   design.cols,
                   theta,
                   std::move(cov),
                   dev,
                   ws.log_likelihood(eta, lam),
                   dispersion,
                   df,
                   iterations,
                   converged,
                   g.cwiseAbs().maxCoeff(),
                   design.separated_cells,
                   design.zero_opp_sites,
                   design.zero_std_species};
  return result;
}

double estimate_dispersion(const FitResult& fit, const CountTable& counts) {
  const IndexSpace& space = fit.params.space();
  double pearson = 0.0;
  long long used = 0;
  for (int i = 0; i < space.n_species(); ++i)
    for (int j = 0; j < space.n_sites(); ++j)
      for (int k = 0; k < kNumDatasets; ++k) {
        const double lam = fit.params.intensity(i, j, k);
        const double x = static_cast<double>(counts.at(i, j, k));
        if (lam <= 0.0) continue;  // boundary cells carry no residual information
        pearson += (x - lam) * (x - lam) / lam;
        ++used;
      }
  const long long df = used - static_cast<long long>(fit.coef.size());
  if (df <= 0) throw EstimationError("non-positive residual degrees of freedom");
  return pearson / static_cast<double>(df);
}

double penalized_objective(const DesignSpec& design, const CountTable& counts,
                           const ParameterSet& params, double nu,
                           const Eigen::MatrixXd& proximity) {
  ProximityPenalty pen{nu, proximity};
  validate_penalty(pen, design.space.n_sites());
  double ll = 0.0;
  for (const DesignRow& row : design.rows) {
    const double lam = params.intensity(row.species, row.site, row.dataset);
    const double x = static_cast<double>(counts.at(row.species, row.site, row.dataset));
    if (lam <= 0.0) {
      if (x > 0.0) return -std::numeric_limits<double>::infinity();
      continue;
    }
    ll += x * std::log(lam) - lam - std::lgamma(x + 1.0);
  }
  return ll - penalty_value(design, params.n_tilde(), pen);
}

}  // namespace relabund
