#pragma once

// Parametric observation models p(x; y): exact samplers, log-likelihoods,
// Fisher information and the SNR maximum-likelihood estimator.
//
// Observations are stored column-wise: an ObservationBatch with n rows and
// `count` columns holds `count` sample vectors of dimension n.

#include "bce/core.hpp"

#include <variant>

namespace bce {

using ParamVector = Vec;

struct ObservationBatch {
  Mat samples;  // n x count

  Eigen::Index dim() const { return samples.rows(); }
  Eigen::Index count() const { return samples.cols(); }
};

struct FisherInfo {
  Mat matrix;
};

/// Trace of F^{-1}; throws NumericalError when F is not positive definite.
double crb_trace(const FisherInfo& fim);

// ---------------------------------------------------------------------------
// Linear Gaussian model x = H y + n, n ~ N(0, Sigma_n)

class LinearGaussianModel {
 public:
  LinearGaussianModel(Mat h, Mat sigma_n);

  const Mat& h() const { return h_; }
  const Mat& sigma_n() const { return sigma_n_; }
  /// Lower Cholesky factor of Sigma_n.
  const Mat& noise_factor() const { return noise_factor_; }
  Eigen::Index obs_dim() const { return h_.rows(); }
  Eigen::Index param_dim() const { return h_.cols(); }

 private:
  Mat h_;
  Mat sigma_n_;
  Mat noise_factor_;
};

ObservationBatch lin_sample(const LinearGaussianModel& model, const ParamVector& y, Rng& rng);
FisherInfo lin_fim(const LinearGaussianModel& model);

// ---------------------------------------------------------------------------
// Non-data-aided SNR model: x_l = a_l h + w_l, a_l = +-1, w_l ~ N(0, sigma2),
// unknown y = h^2 / sigma2.

struct SnrModel {
  int p = 50;
  /// Amplitude used when sampling from y alone (sigma2 = h^2 / y).
  double amplitude = 1.0;

  void validate() const;
};

inline constexpr double kSnrMin = 1e-3;
inline constexpr double kSnrMax = 1e3;

ObservationBatch snr_sample(const SnrModel& model, double h, double sigma2, Rng& rng);
double snr_loglik(const SnrModel& model, const ObservationBatch& x, double h, double sigma2);

struct SnrMleResult {
  double h = 0;
  double sigma2 = 0;
  double snr = 0;      // clipped to [kSnrMin, kSnrMax]
  double loglik = 0;   // at (h, sigma2) on the unnormalized data
  bool saturated = false;
};

/// Grid search (60x60, log-spaced) followed by coordinate-descent refinement.
/// The data is normalized by its RMS first; the SNR is scale invariant, and
/// (h, sigma2) are mapped back to the original scale in the result.
SnrMleResult snr_mle_detail(const SnrModel& model, const ObservationBatch& x);
double snr_mle(const SnrModel& model, const ObservationBatch& x);

/// Method-of-moments solution of E[x^2] = h^2 + s2, E[x^4] = h^4 + 6h^2 s2 + 3 s2^2.
/// Returns {h^2, sigma2}; h^2 is floored at zero.
std::pair<double, double> snr_moment_match(double m2, double m4);

struct SnrFim {
  FisherInfo per_sample;  // 2x2 in (h, sigma2)
  double crb = 0;         // CRB of y for p samples
  double crb_stderr = 0;  // batch-means standard error of crb
};

/// Monte-Carlo FIM from the outer product of the analytic mixture score.
SnrFim snr_fim_mc(const SnrModel& model, double h, double sigma2, long reps, Rng& rng);

/// Per-sample score (d/dh, d/dsigma2) of the mixture log-density.
Eigen::Vector2d snr_score(double x, double h, double sigma2);

// ---------------------------------------------------------------------------
// Structured 5x5 covariance with nine parameters in [0, 1].

inline constexpr int kCovDim = 5;
inline constexpr int kCovParams = 9;

struct StructuredCovModel {
  int p_samples = 20;
  /// Draw the sufficient statistic instead of raw vectors: a 5x5 factor F
  /// with F F^T / 5 distributed exactly as the sample covariance of
  /// p_samples raw vectors (Bartlett decomposition of the Wishart law).
  /// Needs p_samples >= 5. Cost no longer grows with p_samples.
  bool compress = false;

  void validate() const;
};

Mat cov_build_sigma(const ParamVector& y);
/// Constant derivative dSigma/dy_k (k is zero-based).
Mat cov_pattern(int k);
ObservationBatch cov_sample(const StructuredCovModel& model, const ParamVector& y, Rng& rng);
FisherInfo cov_fim(const StructuredCovModel& model, const ParamVector& y);
/// (1/p) sum_l x_l x_l^T.
Mat sample_covariance(const ObservationBatch& x);

// ---------------------------------------------------------------------------

using StatModel = std::variant<LinearGaussianModel, SnrModel, StructuredCovModel>;

Eigen::Index param_dim(const StatModel& model);
/// Draws one observation batch at parameter y. For the SNR model y has one
/// entry and the model amplitude fixes h.
ObservationBatch sample(const StatModel& model, const ParamVector& y, Rng& rng);

}  // namespace bce
