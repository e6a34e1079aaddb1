#pragma once

#include <string>
#include <vector>

#include "fop/losses.hpp"

namespace fop {

struct BenchPoint {
  long n = 0;              // instances per modality
  double seconds = 0.0;    // median over reps, per evaluated pass
  int inner_reps = 1;      // passes per timed sample (auto-raised for fast runs)
};

struct BenchReport {
  LossKind kind = LossKind::ce;
  std::vector<BenchPoint> points;  // n strictly increasing
  double slope = 0.0;              // least-squares slope of log t vs log n
};

struct BenchConfig {
  std::vector<long> n_linear = {128, 256, 512, 1024, 2048};
  std::vector<long> n_contrastive = {64, 128, 256, 512};
  std::vector<long> n_triplet = {64, 128, 256, 512};
  int reps = 5;
  int batch_size = 32;
  Index dim = 64;
  int n_classes = 32;  // held fixed while n grows
  std::uint64_t seed = 42;
};

// Times one full training-cost pass (value + gradients) at each n for the
// given loss kind: batched passes for ce/oc/joint/center/git, full pair
// enumeration for contrastive, full triplet enumeration for triplet. A
// warm-up run is discarded and the median of `reps` samples reported; runs
// faster than the timer floor are repeated inside one sample and divided out.
// Timing is single-threaded by contract.
BenchReport bench_loss(LossKind kind, const std::vector<long>& n_values, int reps,
                       const BenchConfig& cfg);

std::vector<BenchReport> run_all_benches(const BenchConfig& cfg);

// CSV: loss,n,median_seconds,slope
void write_bench_csv(const std::vector<BenchReport>& reports, const std::string& path);

}  // namespace fop
