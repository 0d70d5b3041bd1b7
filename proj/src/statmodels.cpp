#include "bce/statmodels.hpp"

#include <array>
#include <cmath>
#include <limits>
#include <numbers>

namespace bce {

double crb_trace(const FisherInfo& fim) {
  require(fim.matrix.rows() == fim.matrix.cols() && fim.matrix.rows() > 0, "crb_trace: FIM must be square");
  return spd_inverse(fim.matrix, "crb_trace").trace();
}

// ---------------------------------------------------------------------------

LinearGaussianModel::LinearGaussianModel(Mat h, Mat sigma_n) : h_(std::move(h)), sigma_n_(std::move(sigma_n)) {
  require(h_.rows() > 0 && h_.cols() > 0, "LinearGaussianModel: empty H");
  require(sigma_n_.rows() == h_.rows() && sigma_n_.cols() == h_.rows(),
          "LinearGaussianModel: Sigma_n must be n x n with n = rows(H)");
  require(all_finite(h_) && all_finite(sigma_n_), "LinearGaussianModel: non-finite entries");
  require((sigma_n_ - sigma_n_.transpose()).cwiseAbs().maxCoeff() <= 1e-10 * (1.0 + sigma_n_.cwiseAbs().maxCoeff()),
          "LinearGaussianModel: Sigma_n must be symmetric");
  Eigen::LLT<Mat> llt(sigma_n_);
  if (llt.info() != Eigen::Success) throw NumericalError("LinearGaussianModel: Sigma_n is not positive definite");
  noise_factor_ = llt.matrixL();
}

ObservationBatch lin_sample(const LinearGaussianModel& model, const ParamVector& y, Rng& rng) {
  require(y.size() == model.param_dim(), "lin_sample: parameter dimension mismatch");
  Vec noise = rng.normal_vector(model.obs_dim());
  return {model.h() * y + model.noise_factor() * noise};
}

FisherInfo lin_fim(const LinearGaussianModel& model) {
  Eigen::LLT<Mat> llt(model.sigma_n());
  if (llt.info() != Eigen::Success) throw NumericalError("lin_fim: singular Sigma_n");
  Mat f = model.h().transpose() * llt.solve(model.h());
  return {0.5 * (f + f.transpose())};
}

// ---------------------------------------------------------------------------

void SnrModel::validate() const {
  require(p >= 1, "SnrModel: p must be >= 1");
  require(amplitude > 0 && std::isfinite(amplitude), "SnrModel: amplitude must be positive");
}

namespace {

// log cosh(t) without overflow.
inline double log_cosh(double t) {
  const double a = std::abs(t);
  return a + std::log1p(std::exp(-2.0 * a)) - std::numbers::ln2;
}

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

// Mixture log-likelihood from the data and its precomputed sum of squares.
double mixture_loglik(const double* x, Eigen::Index n, double sum_sq, double h, double s2) {
  const double inv = 1.0 / s2;
  const double k = h * inv;
  double acc = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) acc += log_cosh(k * x[i]);
  const double nn = static_cast<double>(n);
  return acc - 0.5 * nn * (kLog2Pi + std::log(s2)) - 0.5 * inv * (sum_sq + nn * h * h);
}

}  // namespace

ObservationBatch snr_sample(const SnrModel& model, double h, double sigma2, Rng& rng) {
  model.validate();
  require(h > 0 && std::isfinite(h), "snr_sample: h must be positive");
  require(sigma2 > 0 && std::isfinite(sigma2), "snr_sample: sigma2 must be positive");
  const double sd = std::sqrt(sigma2);
  Mat x(1, model.p);
  for (int l = 0; l < model.p; ++l) {
    const double a = rng.sign();
    x(0, l) = a * h + sd * rng.normal();
  }
  return {std::move(x)};
}

double snr_loglik(const SnrModel&, const ObservationBatch& x, double h, double sigma2) {
  require(sigma2 > 0 && std::isfinite(sigma2), "snr_loglik: sigma2 must be positive");
  require(std::isfinite(h), "snr_loglik: h must be finite");
  require(x.dim() == 1, "snr_loglik: observations must be scalar");
  const double sum_sq = x.samples.squaredNorm();
  return mixture_loglik(x.samples.data(), x.count(), sum_sq, h, sigma2);
}

std::pair<double, double> snr_moment_match(double m2, double m4) {
  require(m2 > 0, "snr_moment_match: second moment must be positive");
  const double h4 = std::max(0.0, 0.5 * (3.0 * m2 * m2 - m4));
  const double h2 = std::min(std::sqrt(h4), m2);
  return {h2, m2 - h2};
}

SnrMleResult snr_mle_detail(const SnrModel&, const ObservationBatch& x) {
  require(x.dim() == 1, "snr_mle: observations must be scalar");
  require(x.count() >= 2, "snr_mle: need at least two samples");
  require(all_finite(x.samples), "snr_mle: non-finite observation");
  const Eigen::Index n = x.count();
  const double m2 = x.samples.squaredNorm() / static_cast<double>(n);
  if (!(m2 > 0)) throw InvalidArgument("snr_mle: degenerate all-zero observation");

  const double rms = std::sqrt(m2);
  const Eigen::RowVectorXd z = x.samples.row(0) / rms;
  const double zsq = z.squaredNorm();
  auto ll = [&](double h, double s2) { return mixture_loglik(z.data(), n, zsq, h, s2); };

  constexpr int kGrid = 60;
  const double lh0 = std::log(0.1), lh1 = std::log(20.0);
  const double ls0 = std::log(1e-3), ls1 = std::log(1e2);
  double best = -std::numeric_limits<double>::infinity();
  double bh = 1.0, bs = 1.0;
  for (int i = 0; i < kGrid; ++i) {
    const double h = std::exp(lh0 + (lh1 - lh0) * i / (kGrid - 1));
    for (int j = 0; j < kGrid; ++j) {
      const double s2 = std::exp(ls0 + (ls1 - ls0) * j / (kGrid - 1));
      const double v = ll(h, s2);
      if (v > best) {
        best = v;
        bh = h;
        bs = s2;
      }
    }
  }

  // Refinement in (log power, log snr), which is close to separable for the
  // mixture likelihood; (h, s2) = (sqrt(P y/(1+y)), P/(1+y)).
  std::array<double, 2> u = {std::log(bh * bh + bs), std::log(bh * bh / bs)};
  auto to_hs = [](const std::array<double, 2>& c) {
    const double pw = std::exp(c[0]);
    const double y = std::exp(c[1]);
    return std::pair{std::sqrt(pw * y / (1.0 + y)), pw / (1.0 + y)};
  };
  auto ll_u = [&](const std::array<double, 2>& c) {
    auto [h, s2] = to_hs(c);
    return ll(h, s2);
  };
  const std::array<double, 2> lo = {std::log(1e-6), std::log(1e-6)};
  const std::array<double, 2> hi = {std::log(1e6), std::log(1e8)};
  std::array<double, 2> step = {0.2, 0.2};
  best = ll_u(u);
  constexpr int kRefineSteps = 50;
  constexpr int kMaxMoves = 40;
  for (int it = 0; it < kRefineSteps; ++it) {
    for (int c = 0; c < 2; ++c) {
      for (double dir : {1.0, -1.0}) {
        bool moved = false;
        for (int m = 0; m < kMaxMoves; ++m) {
          auto trial = u;
          trial[c] = std::clamp(u[c] + dir * step[c], lo[c], hi[c]);
          if (trial[c] == u[c]) break;
          const double v = ll_u(trial);
          if (v > best) {
            best = v;
            u = trial;
            moved = true;
          } else {
            break;
          }
        }
        if (moved) break;
      }
    }
    step[0] *= 0.5;
    step[1] *= 0.5;
  }

  auto [h, s2] = to_hs(u);
  SnrMleResult r;
  const double raw = h * h / s2;
  r.snr = std::clamp(raw, kSnrMin, kSnrMax);
  r.saturated = raw >= kSnrMax;
  r.h = h * rms;
  r.sigma2 = s2 * m2;
  r.loglik = mixture_loglik(x.samples.data(), n, x.samples.squaredNorm(), r.h, r.sigma2);
  return r;
}

double snr_mle(const SnrModel& model, const ObservationBatch& x) { return snr_mle_detail(model, x).snr; }

Eigen::Vector2d snr_score(double x, double h, double sigma2) {
  const double inv = 1.0 / sigma2;
  const double th = std::tanh(x * h * inv);
  Eigen::Vector2d g;
  g[0] = -h * inv + x * inv * th;
  g[1] = -0.5 * inv + 0.5 * (x * x + h * h) * inv * inv - x * h * inv * inv * th;
  return g;
}

SnrFim snr_fim_mc(const SnrModel& model, double h, double sigma2, long reps, Rng& rng) {
  model.validate();
  require(h > 0 && sigma2 > 0, "snr_fim_mc: h and sigma2 must be positive");
  require(reps >= 10000, "snr_fim_mc: reps must be >= 1e4");
  constexpr int kBatches = 10;
  const double sd = std::sqrt(sigma2);
  const Eigen::Vector2d grad(2.0 * h / sigma2, -h * h / (sigma2 * sigma2));

  Eigen::Matrix2d total = Eigen::Matrix2d::Zero();
  std::array<double, kBatches> batch_crb{};
  const long per = reps / kBatches;
  long done = 0;
  for (int b = 0; b < kBatches; ++b) {
    const long count = (b == kBatches - 1) ? reps - done : per;
    Eigen::Matrix2d acc = Eigen::Matrix2d::Zero();
    for (long r = 0; r < count; ++r) {
      const double x = rng.sign() * h + sd * rng.normal();
      const Eigen::Vector2d s = snr_score(x, h, sigma2);
      acc.noalias() += s * s.transpose();
    }
    total += acc;
    done += count;
    Eigen::LLT<Eigen::Matrix2d> llt(acc / static_cast<double>(count));
    if (llt.info() != Eigen::Success) throw NumericalError("snr_fim_mc: Monte-Carlo FIM is not positive definite");
    batch_crb[b] = grad.dot(llt.solve(grad)) / model.p;
  }
  SnrFim out;
  out.per_sample.matrix = total / static_cast<double>(reps);
  Eigen::LLT<Eigen::Matrix2d> llt(out.per_sample.matrix);
  if (llt.info() != Eigen::Success) throw NumericalError("snr_fim_mc: Monte-Carlo FIM is not positive definite");
  out.crb = grad.dot(llt.solve(grad)) / model.p;
  double mean = 0, sq = 0;
  for (double c : batch_crb) mean += c;
  mean /= kBatches;
  for (double c : batch_crb) sq += (c - mean) * (c - mean);
  out.crb_stderr = std::sqrt(sq / (kBatches - 1) / kBatches);
  return out;
}

// ---------------------------------------------------------------------------

void StructuredCovModel::validate() const {
  require(p_samples >= 1, "StructuredCovModel: p_samples must be >= 1");
  require(!compress || p_samples >= kCovDim, "StructuredCovModel: compressed sampling needs p_samples >= 5");
}

namespace {

struct OffDiag {
  int param, row, col;
};
// zero-based (parameter, row, col) of the half-weighted off-diagonal entries
constexpr std::array<OffDiag, 4> kOffDiag = {{{5, 0, 3}, {6, 1, 3}, {7, 2, 4}, {8, 3, 4}}};

void check_cov_domain(const ParamVector& y, const char* who) {
  require(y.size() == kCovParams, std::string(who) + ": parameter vector must have 9 entries");
  for (Eigen::Index k = 0; k < y.size(); ++k)
    require(std::isfinite(y[k]) && y[k] >= 0.0 && y[k] <= 1.0, std::string(who) + ": parameters must lie in [0, 1]");
}

}  // namespace

Mat cov_build_sigma(const ParamVector& y) {
  check_cov_domain(y, "cov_build_sigma");
  Mat s = Mat::Identity(kCovDim, kCovDim);
  for (int k = 0; k < kCovDim; ++k) s(k, k) += y[k];
  for (const auto& e : kOffDiag) {
    s(e.row, e.col) = 0.5 * y[e.param];
    s(e.col, e.row) = 0.5 * y[e.param];
  }
  Eigen::LLT<Mat> llt(s);
  if (llt.info() != Eigen::Success) throw NumericalError("cov_build_sigma: covariance is not positive definite");
  return s;
}

Mat cov_pattern(int k) {
  require(k >= 0 && k < kCovParams, "cov_pattern: index out of range");
  Mat d = Mat::Zero(kCovDim, kCovDim);
  if (k < kCovDim) {
    d(k, k) = 1.0;
    return d;
  }
  const auto& e = kOffDiag[k - kCovDim];
  d(e.row, e.col) = 0.5;
  d(e.col, e.row) = 0.5;
  return d;
}

ObservationBatch cov_sample(const StructuredCovModel& model, const ParamVector& y, Rng& rng) {
  model.validate();
  const Mat sigma = cov_build_sigma(y);
  const Mat l = Eigen::LLT<Mat>(sigma).matrixL();
  if (!model.compress) return {l * rng.normal_matrix(kCovDim, model.p_samples)};
  // Bartlett: W = L A A^T L^T ~ Wishart(Sigma, p) for lower-triangular A with
  // A_ii^2 ~ chi2(p - i) and standard normal entries below the diagonal.
  Mat a = Mat::Zero(kCovDim, kCovDim);
  for (int i = 0; i < kCovDim; ++i) {
    a(i, i) = std::sqrt(rng.chi_squared(static_cast<double>(model.p_samples - i)));
    for (int j = 0; j < i; ++j) a(i, j) = rng.normal();
  }
  return {std::sqrt(static_cast<double>(kCovDim) / model.p_samples) * (l * a)};
}

FisherInfo cov_fim(const StructuredCovModel& model, const ParamVector& y) {
  model.validate();
  const Mat sigma = cov_build_sigma(y);
  Eigen::LLT<Mat> llt(sigma);
  if (llt.info() != Eigen::Success) throw NumericalError("cov_fim: singular covariance");
  std::array<Mat, kCovParams> w;
  for (int k = 0; k < kCovParams; ++k) w[k] = llt.solve(cov_pattern(k));
  Mat f(kCovParams, kCovParams);
  const double half_p = 0.5 * model.p_samples;
  for (int k = 0; k < kCovParams; ++k)
    for (int l = k; l < kCovParams; ++l) {
      const double v = half_p * (w[k] * w[l]).trace();
      f(k, l) = v;
      f(l, k) = v;
    }
  return {f};
}

Mat sample_covariance(const ObservationBatch& x) {
  require(x.count() >= 1, "sample_covariance: empty batch");
  return x.samples * x.samples.transpose() / static_cast<double>(x.count());
}

// ---------------------------------------------------------------------------

Eigen::Index param_dim(const StatModel& model) {
  return std::visit(
      [](const auto& m) -> Eigen::Index {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, LinearGaussianModel>) return m.param_dim();
        else if constexpr (std::is_same_v<T, SnrModel>) return 1;
        else return kCovParams;
      },
      model);
}

ObservationBatch sample(const StatModel& model, const ParamVector& y, Rng& rng) {
  return std::visit(
      [&](const auto& m) -> ObservationBatch {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, LinearGaussianModel>) {
          return lin_sample(m, y, rng);
        } else if constexpr (std::is_same_v<T, SnrModel>) {
          require(y.size() == 1 && y[0] > 0, "sample: SNR parameter must be a positive scalar");
          return snr_sample(m, m.amplitude, m.amplitude * m.amplitude / y[0], rng);
        } else {
          return cov_sample(m, y, rng);
        }
      },
      model);
}

}  // namespace bce
