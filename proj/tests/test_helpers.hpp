#pragma once

#include <Eigen/Dense>
#include <vector>

#include "relabund/parameters.hpp"
#include "relabund/rng.hpp"
#include "relabund/types.hpp"

namespace helpers {

// Random positive parameter set in the constrained gauge; species listed in
// `unmonitored` get a zero standardized detection ratio.
inline relabund::ParameterSet random_params(int n_species, int n_sites, relabund::Rng& rng,
                                            const std::vector<int>& unmonitored = {},
                                            double n_lo = 2.0, double n_hi = 20.0) {
  using namespace relabund;
  IndexSpace space = IndexSpace::numbered(n_species, n_sites);
  Eigen::MatrixXd n_tilde(n_species, n_sites), e_tilde(n_sites, 2), p_tilde(n_species, 2);
  for (int i = 0; i < n_species; ++i)
    for (int j = 0; j < n_sites; ++j) n_tilde(i, j) = rng.uniform(n_lo, n_hi);
  for (int j = 0; j < n_sites; ++j) {
    e_tilde(j, kStd) = rng.uniform(0.5, 2.0);
    e_tilde(j, kOpp) = rng.uniform(5.0, 20.0);
  }
  for (int i = 0; i < n_species; ++i) {
    p_tilde(i, kStd) = i == 0 ? 1.0 : rng.uniform(0.4, 1.6);
    p_tilde(i, kOpp) = 1.0;
  }
  for (int i : unmonitored) p_tilde(i, kStd) = 0.0;
  return ParameterSet(space, n_tilde, e_tilde, p_tilde, 0);
}

inline Eigen::VectorXd p_std_of(const relabund::ParameterSet& params) {
  Eigen::VectorXd p(params.space().n_species());
  for (int i = 0; i < params.space().n_species(); ++i) p[i] = params.p_tilde()(i, relabund::kStd);
  return p;
}

}  // namespace helpers
