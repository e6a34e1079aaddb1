#pragma once

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include "fop/errors.hpp"

namespace fop {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;
using Index = Eigen::Index;

// Guard used by every L2 normalization in the library.
inline constexpr double kNormEps = 1e-12;

// Checked dense product with 64-bit accumulation. Throws ContractError
// naming both shapes on an inner-dimension mismatch.
Matrix matmul(const Matrix& a, const Matrix& b);

// v / max(|v|_2, eps). Unit norm whenever |v|_2 >= eps; the zero vector maps
// to itself.
Vector l2_normalize(const Vector& v, double eps = kNormEps);

// a.b / (|a|_2 |b|_2), eps-guarded and clamped to [-1, 1] against rounding
// overshoot.
double cosine(const Vector& a, const Vector& b, double eps = kNormEps);

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

template <typename Derived>
typename Derived::PlainObject sigmoid(const Eigen::MatrixBase<Derived>& x) {
  return x.derived().array().unaryExpr([](double t) { return sigmoid(t); }).matrix();
}

template <typename Derived>
typename Derived::PlainObject tanh(const Eigen::MatrixBase<Derived>& x) {
  return x.derived().array().tanh().matrix();
}

template <typename DerivedA, typename DerivedB>
typename DerivedA::PlainObject hadamard(const Eigen::MatrixBase<DerivedA>& a,
                                        const Eigen::MatrixBase<DerivedB>& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ContractError("hadamard: shape mismatch " + std::to_string(a.rows()) + "x" +
                        std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                        std::to_string(b.cols()));
  return (a.derived().array() * b.derived().array()).matrix();
}

// Max-subtracted softmax; finite output for any finite input.
Vector softmax(const Vector& logits);
Matrix softmax_rows(const Matrix& logits);

bool all_finite(const Matrix& m);

// xoshiro256++ seeded through splitmix64. The raw 64-bit stream is fully
// specified by the algorithm and identical on every platform; uniform doubles
// are derived with exact arithmetic. Gaussian draws use Box-Muller and thus
// inherit libm rounding (deterministic for a fixed toolchain).
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  // Derives an independent sub-seed; used to give parallel consumers
  // (validation trials, evaluation samplers) their own streams.
  static std::uint64_t mix(std::uint64_t seed, std::uint64_t stream);

  std::uint64_t next_u64();

  // Uniform on [0, 1), 53-bit resolution.
  double uniform();
  double uniform(double lo, double hi);

  // Standard normal via Box-Muller; the spare deviate is cached.
  double normal();

  // Unbiased uniform integer in [0, n); n must be positive.
  std::uint64_t below(std::uint64_t n);

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i)
      std::swap(items[i - 1], items[below(i)]);
  }

 private:
  std::array<std::uint64_t, 4> state_{};
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace fop
