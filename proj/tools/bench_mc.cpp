// Times the Monte Carlo kernels on the serial reference path and on the
// OpenMP path, and checks that both produce identical numbers.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <vector>

#include <Eigen/Dense>

#include "relabund/estimators.hpp"
#include "relabund/parallel.hpp"
#include "relabund/parameters.hpp"
#include "relabund/rng.hpp"
#include "relabund/simulate.hpp"

using namespace relabund;

namespace {

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

ParameterSet bench_params(int n_species, int n_sites) {
  IndexSpace space = IndexSpace::numbered(n_species, n_sites);
  Eigen::MatrixXd n(n_species, n_sites), e(n_sites, 2), p(n_species, 2);
  Rng rng(1);
  for (int i = 0; i < n_species; ++i)
    for (int j = 0; j < n_sites; ++j) n(i, j) = rng.uniform(5.0, 25.0);
  for (int j = 0; j < n_sites; ++j) {
    e(j, kStd) = rng.uniform(0.8, 1.4);
    e(j, kOpp) = 100.0 * e(j, kStd);
  }
  for (int i = 0; i < n_species; ++i) {
    p(i, kStd) = i == 0 ? 1.0 : rng.uniform(0.5, 1.5);
    p(i, kOpp) = 1.0;
  }
  return ParameterSet(space, n, e, p, 0);
}

}  // namespace

int main(int argc, char** argv) {
  const int replicates = argc > 1 ? std::atoi(argv[1]) : 2000;
  const int n_species = 6, n_sites = 10;
  const ParameterSet truth = bench_params(n_species, n_sites);
  const EffortSpec effort = truth.effort();
  Eigen::VectorXd p0(n_species);
  for (int i = 0; i < n_species; ++i) p0[i] = truth.p_tilde()(i, kStd);

  // One simulate-and-estimate replicate; results land in a fixed slot.
  std::vector<double> serial_out(static_cast<size_t>(replicates));
  std::vector<double> parallel_out(static_cast<size_t>(replicates));
  auto kernel = [&](std::vector<double>& slots) {
    return [&truth, &effort, &p0, &slots](int r) {
      const CountTable table = simulate_counts(truth, derive_seed(42, static_cast<uint64_t>(r)));
      const AbundanceEstimate est = fixed_point_mle(table, effort, p0);
      slots[static_cast<size_t>(r)] = est.values.sum();
    };
  };

  auto t0 = std::chrono::steady_clock::now();
  mc::run_replicates_serial(replicates, kernel(serial_out));
  const double serial_s = seconds_since(t0);

  const int threads = mc::max_threads();
  t0 = std::chrono::steady_clock::now();
  mc::run_replicates(replicates, threads, kernel(parallel_out));
  const double parallel_s = seconds_since(t0);

  for (int r = 0; r < replicates; ++r) {
    if (serial_out[static_cast<size_t>(r)] != parallel_out[static_cast<size_t>(r)]) {
      std::printf("MISMATCH at replicate %d: serial %.17g vs parallel %.17g\n", r,
                  serial_out[static_cast<size_t>(r)], parallel_out[static_cast<size_t>(r)]);
      return 1;
    }
  }

  std::printf("replicates          : %d (%d species x %d sites)\n", replicates, n_species,
              n_sites);
  std::printf("serial reference    : %8.3f s  (%.1f replicates/s)\n", serial_s,
              replicates / serial_s);
  std::printf("openmp (%2d threads) : %8.3f s  (%.1f replicates/s)\n", threads, parallel_s,
              replicates / parallel_s);
  std::printf("speedup             : %8.2fx\n", serial_s / parallel_s);
  std::printf("results             : bitwise identical\n");
  return 0;
}
