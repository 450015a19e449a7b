#pragma once

#include <Eigen/Dense>
#include <vector>

#include "relabund/types.hpp"

namespace relabund {

// Normalized model parameters. The gauge is pinned by I + J + 1 fixed values:
// the standardized-effort column e_tilde(:, 0) is known, p_tilde(:, 1) = 1 for
// every species, and p_tilde(ref, 0) = 1 for the reference species. Species
// with p_tilde(i, 0) = 0 carry no standardized-dataset signal (unmonitored
// there, or pinned to the boundary by an all-zero margin).
class ParameterSet {
public:
  ParameterSet(IndexSpace space, Eigen::MatrixXd n_tilde, Eigen::MatrixXd e_tilde,
               Eigen::MatrixXd p_tilde, int ref_species);

  const IndexSpace& space() const { return space_; }
  const Eigen::MatrixXd& n_tilde() const { return n_tilde_; }  // I x J
  const Eigen::MatrixXd& e_tilde() const { return e_tilde_; }  // J x 2
  const Eigen::MatrixXd& p_tilde() const { return p_tilde_; }  // I x 2
  int ref_species() const { return ref_species_; }

  bool monitored_std(int i) const { return p_tilde_(i, kStd) > 0.0; }

  // Entries held fixed by the identifiability constraints rather than fitted.
  bool e_fixed(int j, int k) const { (void)j; return k == kStd; }
  bool p_fixed(int i, int k) const {
    return k == kOpp || i == ref_species_ || !monitored_std(i);
  }

  // Poisson mean for cell (i, j, k).
  double intensity(int i, int j, int k) const;

  // n_tilde(i, j) / n_tilde(i, ref_site); exact ratio of raw abundances.
  double relative_abundance(int i, int j, int ref_site) const;

  EffortSpec effort() const;

private:
  IndexSpace space_;
  Eigen::MatrixXd n_tilde_;
  Eigen::MatrixXd e_tilde_;
  Eigen::MatrixXd p_tilde_;
  int ref_species_;
};

// Change of variables from raw (N, E, P) to the constrained
// (n_tilde, e_tilde, p_tilde), preserving all cell products N*E*P.
// raw_P(i, 0) = 0 marks a species unmonitored in the standardized dataset.
// ref_species < 0 selects the first species with raw_P positive in both
// datasets; ref_site picks which site's standardized effort becomes 1.
ParameterSet normalize_parameters(const IndexSpace& space, const Eigen::MatrixXd& raw_n,
                                  const Eigen::MatrixXd& raw_e, const Eigen::MatrixXd& raw_p,
                                  int ref_species = -1, int ref_site = 0);

struct StandardizedAbundance {
  Eigen::MatrixXd values;       // rows sum to 1, zero rows left untouched
  std::vector<int> zero_rows;   // species with nothing to standardize
};

// Row-normalizes an abundance matrix so each species sums to 1 over sites.
StandardizedAbundance standardize_abundance(const Eigen::MatrixXd& abundance);

}  // namespace relabund
