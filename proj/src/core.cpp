#include "bce/core.hpp"

#include <oneapi/tbb/global_control.h>
#include <oneapi/tbb/info.h>
#include <oneapi/tbb/parallel_for.h>

#include <memory>
#include <mutex>

namespace bce {

std::uint64_t Rng::mix(std::uint64_t x) {
  // splitmix64 finalizer
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t Rng::derive(std::uint64_t seed, std::uint64_t index) {
  return mix(mix(seed) ^ mix(index + 0x632be59bd9b4e019ULL));
}

Vec Rng::normal_vector(Eigen::Index n) {
  Vec v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = normal();
  return v;
}

Mat Rng::normal_matrix(Eigen::Index rows, Eigen::Index cols) {
  Mat m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = normal();
  return m;
}

namespace {

std::mutex g_control_mutex;
std::unique_ptr<oneapi::tbb::global_control> g_control;
int g_threads = 0;

}  // namespace

void set_max_threads(int threads) {
  std::lock_guard lock(g_control_mutex);
  g_control.reset();
  g_threads = threads;
  if (threads > 0) {
    g_control = std::make_unique<oneapi::tbb::global_control>(
        oneapi::tbb::global_control::max_allowed_parallelism, static_cast<std::size_t>(threads));
  }
}

int max_threads() {
  std::lock_guard lock(g_control_mutex);
  return g_threads > 0 ? g_threads : oneapi::tbb::info::default_concurrency();
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body) {
  if (n == 0) return;
  if (n == 1) {
    body(0);
    return;
  }
  oneapi::tbb::parallel_for(std::size_t{0}, n, body);
}

bool all_finite(const Mat& m) { return m.allFinite(); }

Mat spd_inverse(const Mat& a, const std::string& what) {
  Eigen::LLT<Mat> llt(a);
  if (llt.info() != Eigen::Success) throw NumericalError(what + ": matrix is not positive definite");
  Mat inv = llt.solve(Mat::Identity(a.rows(), a.cols()));
  if (!inv.allFinite()) throw NumericalError(what + ": inverse is not finite");
  return 0.5 * (inv + inv.transpose());
}

}  // namespace bce
