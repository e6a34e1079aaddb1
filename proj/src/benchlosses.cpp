#include "fop/benchlosses.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>

#include "fop/dataio.hpp"
#include "fop/errors.hpp"

namespace fop {

namespace {

// Defeats dead-code elimination of the timed passes.
volatile double g_sink = 0.0;

struct BenchData {
  Matrix u, v;       // n x d projected embeddings
  Matrix logits;     // n x C
  Labels labels;     // round-robin over C classes
  CenterState centers;
};

BenchData make_data(long n, const BenchConfig& cfg, Rng& rng) {
  BenchData d;
  d.u = Matrix(n, cfg.dim);
  d.v = Matrix(n, cfg.dim);
  d.logits = Matrix(n, cfg.n_classes);
  for (Index i = 0; i < d.u.size(); ++i) d.u.data()[i] = rng.normal();
  for (Index i = 0; i < d.v.size(); ++i) d.v.data()[i] = rng.normal();
  for (Index i = 0; i < d.logits.size(); ++i) d.logits.data()[i] = rng.normal();
  d.labels.resize(n);
  for (long i = 0; i < n; ++i) d.labels[i] = static_cast<int>(i % cfg.n_classes);
  d.centers.centers = Matrix(cfg.n_classes, cfg.dim);
  for (Index i = 0; i < d.centers.centers.size(); ++i)
    d.centers.centers.data()[i] = 0.5 * rng.normal();
  return d;
}

// One full pass at training cost; the accumulated loss is returned so the
// work cannot be optimized away.
double one_pass(LossKind kind, BenchData& d, const BenchConfig& cfg) {
  const long n = d.u.rows();
  double acc = 0.0;
  switch (kind) {
    case LossKind::contrastive:
      return contrastive_loss(d.u, d.v, d.labels, d.labels, 0.5).loss;
    case LossKind::triplet:
      return triplet_full(d.u, d.v, d.labels, 0.3).loss;
    default:
      break;
  }
  for (long start = 0; start < n; start += cfg.batch_size) {
    const long bsz = std::min<long>(cfg.batch_size, n - start);
    if (bsz < 2) break;
    const auto rows = Eigen::seqN(start, bsz);
    Labels y(d.labels.begin() + start, d.labels.begin() + start + bsz);
    switch (kind) {
      case LossKind::ce:
        acc += ce_loss(d.logits.middleRows(start, bsz), y).loss;
        break;
      case LossKind::oc:
        acc += oc_loss(d.u.middleRows(start, bsz), y).loss;
        break;
      case LossKind::joint:
        acc += joint_loss(d.logits.middleRows(start, bsz), d.u.middleRows(start, bsz), y, 1.0).loss;
        break;
      case LossKind::center:
        acc += center_loss(d.u.middleRows(start, bsz), y, d.centers, 0.5, true).loss;
        break;
      case LossKind::git:
        acc += git_loss(d.u.middleRows(start, bsz), y, d.centers, 0.5, 1.0, true).loss;
        break;
      default:
        throw ContractError("one_pass: unhandled loss kind");
    }
  }
  return acc;
}

double time_passes(LossKind kind, BenchData& d, const BenchConfig& cfg, int inner,
                   double* sink) {
  const auto t0 = std::chrono::steady_clock::now();
  for (int r = 0; r < inner; ++r) *sink += one_pass(kind, d, cfg);
  const auto t1 = std::chrono::steady_clock::now();
  return std::chrono::duration<double>(t1 - t0).count();
}

}  // namespace

BenchReport bench_loss(LossKind kind, const std::vector<long>& n_values, int reps,
                       const BenchConfig& cfg) {
  if (n_values.empty()) throw ContractError("bench_loss: no n values");
  for (std::size_t i = 1; i < n_values.size(); ++i)
    if (n_values[i] <= n_values[i - 1])
      throw ContractError("bench_loss: n values must be strictly increasing");
  if (reps < 1) throw ContractError("bench_loss: reps must be >= 1");

  constexpr double kMinSample = 0.02;  // below this the steady_clock noise dominates
  BenchReport report;
  report.kind = kind;
  double sink = 0.0;
  Rng rng(cfg.seed);

  for (long n : n_values) {
    BenchData data = make_data(n, cfg, rng);
    time_passes(kind, data, cfg, 1, &sink);  // warm-up, discarded

    int inner = 1;
    double probe = time_passes(kind, data, cfg, inner, &sink);
    while (probe < kMinSample && inner < (1 << 20)) {
      const double scale = kMinSample / std::max(probe, 1e-9);
      inner = std::max(inner * 2, static_cast<int>(std::ceil(inner * 1.2 * scale)));
      probe = time_passes(kind, data, cfg, inner, &sink);
    }

    std::vector<double> samples;
    for (int r = 0; r < reps; ++r)
      samples.push_back(time_passes(kind, data, cfg, inner, &sink) / inner);
    std::sort(samples.begin(), samples.end());
    const double median = samples.size() % 2 == 1
                              ? samples[samples.size() / 2]
                              : 0.5 * (samples[samples.size() / 2 - 1] +
                                       samples[samples.size() / 2]);
    report.points.push_back({n, median, inner});
  }

  // Least-squares slope in log-log space.
  const std::size_t m = report.points.size();
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (const auto& p : report.points) {
    const double x = std::log(static_cast<double>(p.n));
    const double y = std::log(std::max(p.seconds, 1e-12));
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double denom = m * sxx - sx * sx;
  report.slope = m >= 2 && denom != 0 ? (m * sxy - sx * sy) / denom : 0.0;
  g_sink = sink;
  return report;
}

std::vector<BenchReport> run_all_benches(const BenchConfig& cfg) {
  std::vector<BenchReport> reports;
  for (LossKind kind : {LossKind::ce, LossKind::oc, LossKind::joint, LossKind::center,
                        LossKind::git})
    reports.push_back(bench_loss(kind, cfg.n_linear, cfg.reps, cfg));
  reports.push_back(bench_loss(LossKind::contrastive, cfg.n_contrastive, cfg.reps, cfg));
  reports.push_back(bench_loss(LossKind::triplet, cfg.n_triplet, cfg.reps, cfg));
  return reports;
}

void write_bench_csv(const std::vector<BenchReport>& reports, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  out << "loss,n,median_seconds,slope\n";
  for (const auto& r : reports)
    for (const auto& p : r.points)
      out << to_string(r.kind) << ',' << p.n << ',' << format_double(p.seconds) << ','
          << format_double(r.slope) << '\n';
  if (!out) throw DataError("write failed for '" + path + "'");
}

}  // namespace fop
