#include "relabund/parameters.hpp"

#include <cmath>

namespace relabund {

namespace {

void require(bool ok, const char* msg) {
  if (!ok) throw InputError(msg);
}

}  // namespace

ParameterSet::ParameterSet(IndexSpace space, Eigen::MatrixXd n_tilde, Eigen::MatrixXd e_tilde,
                           Eigen::MatrixXd p_tilde, int ref_species)
    : space_(std::move(space)),
      n_tilde_(std::move(n_tilde)),
      e_tilde_(std::move(e_tilde)),
      p_tilde_(std::move(p_tilde)),
      ref_species_(ref_species) {
  const int I = space_.n_species();
  const int J = space_.n_sites();
  require(n_tilde_.rows() == I && n_tilde_.cols() == J, "n_tilde shape mismatch");
  require(e_tilde_.rows() == J && e_tilde_.cols() == kNumDatasets, "e_tilde shape mismatch");
  require(p_tilde_.rows() == I && p_tilde_.cols() == kNumDatasets, "p_tilde shape mismatch");
  require(ref_species_ >= 0 && ref_species_ < I, "reference species out of range");

  for (int i = 0; i < I; ++i)
    for (int j = 0; j < J; ++j)
      require(std::isfinite(n_tilde_(i, j)) && n_tilde_(i, j) >= 0.0,
              "abundance parameters must be finite and non-negative");
  for (int j = 0; j < J; ++j) {
    require(e_tilde_(j, kStd) > 0.0, "standardized effort must be positive");
    require(std::isfinite(e_tilde_(j, kOpp)) && e_tilde_(j, kOpp) >= 0.0,
            "opportunistic effort must be finite and non-negative");
  }
  for (int i = 0; i < I; ++i) {
    require(p_tilde_(i, kOpp) == 1.0, "detection ratios must be 1 in the opportunistic dataset");
    require(std::isfinite(p_tilde_(i, kStd)) && p_tilde_(i, kStd) >= 0.0,
            "standardized detection ratios must be finite and non-negative");
  }
  require(p_tilde_(ref_species_, kStd) == 1.0, "reference species detection ratio must be 1");
}

double ParameterSet::intensity(int i, int j, int k) const {
  if (i < 0 || i >= space_.n_species() || j < 0 || j >= space_.n_sites() || k < 0 ||
      k >= kNumDatasets)
    throw InputError("intensity index out of range");
  return n_tilde_(i, j) * e_tilde_(j, k) * p_tilde_(i, k);
}

double ParameterSet::relative_abundance(int i, int j, int ref_site) const {
  if (i < 0 || i >= space_.n_species() || j < 0 || j >= space_.n_sites() || ref_site < 0 ||
      ref_site >= space_.n_sites())
    throw InputError("relative abundance index out of range");
  const double ref = n_tilde_(i, ref_site);
  if (!(ref > 0.0))
    throw EstimationError("relative abundance undefined: zero abundance at reference site for " +
                          space_.species_label(i));
  return n_tilde_(i, j) / ref;
}

EffortSpec ParameterSet::effort() const {
  EffortSpec e;
  e.effort0.resize(static_cast<size_t>(space_.n_sites()));
  for (int j = 0; j < space_.n_sites(); ++j) e.effort0[static_cast<size_t>(j)] = e_tilde_(j, kStd);
  return e;
}

ParameterSet normalize_parameters(const IndexSpace& space, const Eigen::MatrixXd& raw_n,
                                  const Eigen::MatrixXd& raw_e, const Eigen::MatrixXd& raw_p,
                                  int ref_species, int ref_site) {
  const int I = space.n_species();
  const int J = space.n_sites();
  require(raw_n.rows() == I && raw_n.cols() == J, "raw abundance shape mismatch");
  require(raw_e.rows() == J && raw_e.cols() == kNumDatasets, "raw effort shape mismatch");
  require(raw_p.rows() == I && raw_p.cols() == kNumDatasets, "raw detection shape mismatch");
  require(ref_site >= 0 && ref_site < J, "reference site out of range");

  for (int i = 0; i < I; ++i)
    for (int j = 0; j < J; ++j)
      require(raw_n(i, j) > 0.0, "raw abundances must be positive");
  for (int j = 0; j < J; ++j)
    for (int k = 0; k < kNumDatasets; ++k)
      require(raw_e(j, k) > 0.0, "raw efforts must be positive");
  for (int i = 0; i < I; ++i) {
    require(raw_p(i, kOpp) > 0.0, "every species needs a positive opportunistic detection");
    require(raw_p(i, kStd) >= 0.0, "raw detections must be non-negative");
  }

  if (ref_species < 0) {
    for (int i = 0; i < I && ref_species < 0; ++i)
      if (raw_p(i, kStd) > 0.0 && raw_p(i, kOpp) > 0.0) ref_species = i;
    require(ref_species >= 0, "no species is monitored in both datasets");
  }
  require(ref_species < I, "reference species out of range");
  require(raw_p(ref_species, kStd) > 0.0 && raw_p(ref_species, kOpp) > 0.0,
          "reference species must be monitored in both datasets");

  const int r = ref_species;
  const double e_ref = raw_e(ref_site, kStd);

  Eigen::MatrixXd n_tilde(I, J), e_tilde(J, kNumDatasets), p_tilde(I, kNumDatasets);
  for (int i = 0; i < I; ++i)
    for (int j = 0; j < J; ++j)
      n_tilde(i, j) = raw_n(i, j) * raw_p(i, kOpp) * e_ref * raw_p(r, kStd) / raw_p(r, kOpp);
  for (int j = 0; j < J; ++j)
    for (int k = 0; k < kNumDatasets; ++k)
      e_tilde(j, k) = raw_e(j, k) / e_ref * raw_p(r, k) / raw_p(r, kStd);
  for (int i = 0; i < I; ++i)
    for (int k = 0; k < kNumDatasets; ++k)
      p_tilde(i, k) = raw_p(i, k) / raw_p(i, kOpp) * raw_p(r, kOpp) / raw_p(r, k);

  // Pin the constrained entries exactly; they are 1 up to rounding already.
  for (int i = 0; i < I; ++i) p_tilde(i, kOpp) = 1.0;
  p_tilde(r, kStd) = raw_p(r, kStd) > 0.0 ? 1.0 : 0.0;

  return ParameterSet(space, std::move(n_tilde), std::move(e_tilde), std::move(p_tilde), r);
}

StandardizedAbundance standardize_abundance(const Eigen::MatrixXd& abundance) {
  StandardizedAbundance out;
  out.values = abundance;
  for (Eigen::Index i = 0; i < abundance.rows(); ++i) {
    const double row_sum = abundance.row(i).sum();
    if (row_sum > 0.0) {
      out.values.row(i) /= row_sum;
    } else {
      out.zero_rows.push_back(static_cast<int>(i));
    }
  }
  return out;
}

}  // namespace relabund
