#pragma once

// Shared vocabulary: dense linear-algebra aliases, the error hierarchy,
// seeded random streams and the deterministic parallel loop used by every
// Monte-Carlo routine in the library.

#include <Eigen/Dense>

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace bce {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Bad arguments, shape mismatches, out-of-domain parameters.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Factorization failures, non-finite losses, rank deficiency.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool ok, const std::string& what) {
  if (!ok) throw InvalidArgument(what);
}

/// A seeded random stream.
///
/// Streams are identified by a 64-bit seed. Independent substreams are
/// derived from (seed, index) by hashing, so a Monte-Carlo loop that gives
/// task `i` the substream `i` produces the same numbers no matter how the
/// tasks are scheduled across threads.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), engine_(mix(seed)) {}

  std::uint64_t seed() const { return seed_; }

  /// Seed of substream `index` of `seed`.
  static std::uint64_t derive(std::uint64_t seed, std::uint64_t index);

  Rng substream(std::uint64_t index) const { return Rng(derive(seed_, index)); }

  double normal() { return normal_(engine_); }
  double uniform() { return uniform_(engine_); }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform_(engine_); }
  /// +1 or -1 with equal probability.
  double sign() { return (engine_() >> 63) ? 1.0 : -1.0; }
  double chi_squared(double dof) { return std::chi_squared_distribution<double>(dof)(engine_); }

  Vec normal_vector(Eigen::Index n);
  Mat normal_matrix(Eigen::Index rows, Eigen::Index cols);

  std::mt19937_64& engine() { return engine_; }

 private:
  static std::uint64_t mix(std::uint64_t x);

  std::uint64_t seed_;
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

/// Caps worker parallelism for the rest of the process (0 = hardware default).
void set_max_threads(int threads);
int max_threads();

/// Runs body(i) for i in [0, n). Bodies must only write to slot i of their
/// outputs; results are then independent of scheduling.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

template <class T, class F>
std::vector<T> parallel_map(std::size_t n, F&& fn) {
  std::vector<T> out(n);
  parallel_for(n, [&](std::size_t i) { out[i] = fn(i); });
  return out;
}

/// Fixed-size chunking for Monte-Carlo loops. Chunk boundaries depend only on
/// the total count, never on the thread count.
struct Chunking {
  std::size_t total;
  std::size_t chunk;
  std::size_t count() const { return (total + chunk - 1) / chunk; }
  std::size_t begin(std::size_t c) const { return c * chunk; }
  std::size_t end(std::size_t c) const { return std::min(total, (c + 1) * chunk); }
};

bool all_finite(const Mat& m);

/// Inverse of a symmetric positive definite matrix via Cholesky.
/// Throws NumericalError when the factorization fails.
Mat spd_inverse(const Mat& a, const std::string& what);

}  // namespace bce
