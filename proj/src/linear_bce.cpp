#include "bce/linear_bce.hpp"

#include <cmath>

namespace bce {

namespace {

constexpr double kSigmaYJitter = 1e-9;
constexpr std::size_t kZnChunk = 10000;

Eigen::LLT<Mat> factor_spd(const Mat& m, const char* what) {
  Eigen::LLT<Mat> llt(0.5 * (m + m.transpose()));
  if (llt.info() != Eigen::Success) throw NumericalError(std::string(what) + ": matrix is not positive definite");
  return llt;
}

// Sy^-1, with jitter when Sy is only semidefinite.
Mat prior_precision(const Mat& sy) {
  const Mat s = 0.5 * (sy + sy.transpose());
  Eigen::LLT<Mat> llt(s);
  if (llt.info() != Eigen::Success) {
    llt.compute(s + kSigmaYJitter * Mat::Identity(s.rows(), s.cols()));
    if (llt.info() != Eigen::Success) throw NumericalError("prior second moment is not positive semidefinite");
  }
  return llt.solve(Mat::Identity(s.rows(), s.cols()));
}

void check_linear(const Mat& h, const Mat& sigma_n, const Mat& sigma_y) {
  require(sigma_n.rows() == h.rows() && sigma_n.cols() == h.rows(), "Sigma_n must be n x n");
  require(sigma_y.rows() == h.cols() && sigma_y.cols() == h.cols(), "Sigma_y must be d x d");
  require(all_finite(h) && all_finite(sigma_n) && all_finite(sigma_y), "non-finite model matrices");
}

// (H^T S^-1 H + P)^-1 H^T S^-1 with S given by its Cholesky factor.
Mat gauss_markov_solve(const Mat& h, const Eigen::LLT<Mat>& noise, const Mat& p) {
  const Mat w = noise.solve(h);  // S^-1 H
  Mat g = h.transpose() * w + p;
  g = 0.5 * (g + g.transpose());
  const auto inner = factor_spd(g, "linear estimator inner matrix");
  return inner.solve(w.transpose());
}

}  // namespace

SecondMoments moments_from_model(const Mat& h, const Mat& sigma_n, const Mat& sy) {
  check_linear(h, sigma_n, sy);
  SecondMoments m;
  m.sy = sy;
  m.exy = sy * h.transpose();
  m.r = h * sy * h.transpose();
  m.exx = m.r + sigma_n;
  return m;
}

SecondMoments moments_from_dataset(const DatasetNM& ds) {
  require(ds.n() >= 1 && ds.m() >= 2, "moments_from_dataset needs N >= 1 and M >= 2");
  const auto n = ds.records[0].observations[0].dim();
  const auto d = ds.records[0].y.size();
  require(ds.records[0].observations[0].count() == 1, "moments_from_dataset expects vector observations");
  SecondMoments s{Mat::Zero(d, n), Mat::Zero(n, n), Mat::Zero(n, n), Mat::Zero(d, d)};
  const double m = static_cast<double>(ds.m());
  for (const auto& rec : ds.records) {
    Vec sum = Vec::Zero(n);
    Mat own = Mat::Zero(n, n);
    for (const auto& o : rec.observations) {
      const auto x = o.samples.col(0);
      sum += x;
      own.noalias() += x * x.transpose();
    }
    s.exy.noalias() += rec.y * sum.transpose();
    s.exx += own;
    // sum_{j != k} x_j x_k^T = (sum x)(sum x)^T - sum x_j x_j^T
    s.r.noalias() += (sum * sum.transpose() - own) / (m - 1.0);
    s.sy.noalias() += rec.y * rec.y.transpose();
  }
  const double nm = static_cast<double>(ds.n()) * m;
  s.exy /= nm;
  s.exx /= nm;
  s.r /= nm;
  s.sy /= static_cast<double>(ds.n());
  return s;
}

LinearEstimator lbce_moment_form(const SecondMoments& m, double lambda) {
  require(lambda >= 0 && std::isfinite(lambda), "lambda must be finite and >= 0");
  require(m.exx.rows() == m.exx.cols() && m.r.rows() == m.exx.rows() && m.exy.cols() == m.exx.rows(),
          "inconsistent moment shapes");
  const Mat blend = (m.exx + lambda * m.r) / (lambda + 1.0);
  const auto llt = factor_spd(blend, "LBCE moment blend");
  return {llt.solve(m.exy.transpose()).transpose()};
}

LinearEstimator lbce_model_form(const Mat& h, const Mat& sigma_n, const Mat& sigma_y, double lambda) {
  check_linear(h, sigma_n, sigma_y);
  require(lambda >= 0 && std::isfinite(lambda), "lambda must be finite and >= 0");
  const auto noise = factor_spd(sigma_n, "Sigma_n");
  return {gauss_markov_solve(h, noise, prior_precision(sigma_y) / (lambda + 1.0))};
}

LinearEstimator lmmse(const Mat& h, const Mat& sigma_n, const Mat& sigma_y) {
  return lbce_model_form(h, sigma_n, sigma_y, 0.0);
}

LinearEstimator wls(const Mat& h, const Mat& sigma_n) {
  require(sigma_n.rows() == h.rows() && sigma_n.cols() == h.rows(), "Sigma_n must be n x n");
  Eigen::ColPivHouseholderQR<Mat> qr(h);
  if (qr.rank() < h.cols()) throw NumericalError("WLS: H is column rank deficient");
  const auto noise = factor_spd(sigma_n, "Sigma_n");
  return {gauss_markov_solve(h, noise, Mat::Zero(h.cols(), h.cols()))};
}

LinearEstimator ridge_linear(const Mat& h, const Mat& sigma_n, const Mat& sy_hat, double lambda) {
  check_linear(h, sigma_n, sy_hat);
  require(std::isfinite(lambda), "lambda must be finite");
  const Mat tilde = sigma_n + lambda * Mat::Identity(h.rows(), h.rows());
  Eigen::LLT<Mat> noise(0.5 * (tilde + tilde.transpose()));
  if (noise.info() != Eigen::Success) throw InvalidArgument("ridge: Sigma_n + lambda I is not positive definite");
  return {gauss_markov_solve(h, noise, prior_precision(sy_hat))};
}

double linear_bmse(const Mat& a, const Mat& h, const Mat& sigma_n, const Mat& sy) {
  const Mat e = a * h - Mat::Identity(a.rows(), h.cols());
  return (e * sy * e.transpose()).trace() + (a * sigma_n * a.transpose()).trace();
}

double linear_mse_at(const Mat& a, const Mat& h, const Mat& sigma_n, const Vec& y) {
  const Vec b = a * (h * y) - y;
  return b.squaredNorm() + (a * sigma_n * a.transpose()).trace();
}

double scalar_lbce(double ybar2, double lambda) {
  require(ybar2 > 0 && lambda >= 0, "scalar_lbce: need ybar2 > 0, lambda >= 0");
  return ybar2 / (ybar2 + 1.0 / (lambda + 1.0));
}

double scalar_ridge(double ybar2, double rho, double lambda) {
  require(ybar2 > 0 && rho > 0, "scalar_ridge: need ybar2 > 0, rho > 0");
  const double den = ybar2 + 1.0 + rho * lambda;
  require(den > 0, "scalar_ridge: denominator must stay positive");
  return ybar2 / den;
}

double ridge_equiv_lambda(double lambda_bce, double rho) {
  require(lambda_bce >= 0 && rho > 0, "ridge_equiv_lambda: need lambda >= 0, rho > 0");
  return (1.0 / (lambda_bce + 1.0) - 1.0) / rho;
}

double scalar_bmse_given_zn(double z_n, double alpha, double lambda) {
  require(z_n > 0 && alpha > 0 && lambda >= 0, "scalar_bmse_given_zn: need z_N > 0, alpha > 0, lambda >= 0");
  const double l1 = lambda + 1.0;
  const double den = l1 * z_n + alpha;
  return (alpha + z_n * z_n * l1 * l1) / (den * den);
}

std::vector<MeanStderr> bmse_n_curve(long n, double rho, const std::vector<double>& lambdas, long reps,
                                     std::uint64_t seed) {
  require(n >= 1 && rho > 0, "bmse_n_curve: need N >= 1, rho > 0");
  require(reps >= 10000, "bmse_n_curve: reps must be at least 1e4");
  const double alpha = 1.0 / rho;
  const Chunking chunks{static_cast<std::size_t>(reps), kZnChunk};
  const std::size_t k = lambdas.size();
  // per chunk: sum and sum of squares per lambda
  auto parts = parallel_map<std::vector<double>>(chunks.count(), [&](std::size_t c) {
    Rng rng(Rng::derive(seed, c));
    std::vector<double> acc(2 * k, 0.0);
    for (std::size_t i = chunks.begin(c); i < chunks.end(c); ++i) {
      const double z = rng.chi_squared(static_cast<double>(n)) / static_cast<double>(n);
      for (std::size_t l = 0; l < k; ++l) {
        const double v = scalar_bmse_given_zn(z, alpha, lambdas[l]);
        acc[l] += v;
        acc[k + l] += v * v;
      }
    }
    return acc;
  });
  std::vector<double> tot(2 * k, 0.0);
  for (const auto& p : parts)
    for (std::size_t l = 0; l < 2 * k; ++l) tot[l] += p[l];
  const double r = static_cast<double>(reps);
  std::vector<MeanStderr> out(k);
  for (std::size_t l = 0; l < k; ++l) {
    const double mean = tot[l] / r;
    const double var = std::max(0.0, (tot[k + l] - r * mean * mean) / (r - 1.0));
    out[l] = {mean, std::sqrt(var / r)};
  }
  return out;
}

MeanStderr bmse_n_expectation(long n, double rho, double lambda, long reps, Rng& rng) {
  return bmse_n_curve(n, rho, {lambda}, reps, rng.engine()())[0];
}

Mat empirical_second_moment(const std::vector<ParamVector>& samples, double jitter) {
  require(!samples.empty(), "empirical_second_moment: no samples");
  require(jitter >= 0, "empirical_second_moment: jitter must be >= 0");
  const auto d = samples[0].size();
  Mat s = Mat::Zero(d, d);
  for (const auto& y : samples) {
    require(y.size() == d, "empirical_second_moment: ragged samples");
    s.noalias() += y * y.transpose();
  }
  s /= static_cast<double>(samples.size());
  s = 0.5 * (s + s.transpose());
  s.diagonal().array() += jitter;
  return s;
}

}  // namespace bce
