#pragma once

#include <functional>

namespace relabund::mc {

// Runs body(r) for r in [0, n) across OpenMP threads. Bodies must write only
// to their own replicate's slot; combined with per-replicate seeds this makes
// results bitwise independent of the schedule and thread count.
void run_replicates(int n, int threads, const std::function<void(int)>& body);

// Serial reference path; used by tests to pin down the parallel kernels and
// by the benchmark for the baseline timing.
void run_replicates_serial(int n, const std::function<void(int)>& body);

int max_threads();

}  // namespace relabund::mc
