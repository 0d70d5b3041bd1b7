#pragma once

// Closed-form linear estimators y_hat = A x for the linear Gaussian model:
// the bias constrained linear estimator in moment and model form, LMMSE,
// WLS, linear ridge, and the scalar toy model x = y + w.

#include "bce/datagen.hpp"
#include "bce/statmodels.hpp"

namespace bce {

struct LinearEstimator {
  Mat a;  // d x n

  Vec operator()(const Vec& x) const { return a * x; }
};

/// Second-order statistics that determine the linear BCE.
struct SecondMoments {
  Mat exy;  // E[y x^T], d x n
  Mat exx;  // E[x x^T], n x n
  Mat r;    // E[E[x|y] E[x|y]^T], n x n
  Mat sy;   // E[y y^T], d x d
};

/// Analytic moments for x = H y + n with E[y y^T] = Sy.
SecondMoments moments_from_model(const Mat& h, const Mat& sigma_n, const Mat& sy);

/// Unbiased estimates from an enhanced dataset of the linear model (M >= 2).
/// R uses the cross products x_ij x_ik^T, j != k, within each group.
SecondMoments moments_from_dataset(const DatasetNM& ds);

/// A = Exy [Exx/(lambda+1) + lambda R/(lambda+1)]^-1.
LinearEstimator lbce_moment_form(const SecondMoments& m, double lambda);

/// A = (H^T Sn^-1 H + Sy^-1/(lambda+1))^-1 H^T Sn^-1. A PSD-singular Sy
/// receives 1e-9 jitter before inversion.
LinearEstimator lbce_model_form(const Mat& h, const Mat& sigma_n, const Mat& sigma_y, double lambda);

/// LMMSE, the lambda = 0 member of the family above.
LinearEstimator lmmse(const Mat& h, const Mat& sigma_n, const Mat& sigma_y);

/// (H^T Sn^-1 H)^-1 H^T Sn^-1. Throws NumericalError if H is column rank deficient.
LinearEstimator wls(const Mat& h, const Mat& sigma_n);

/// LMMSE with the noise covariance replaced by Sn + lambda I. Negative
/// lambda is allowed while Sn + lambda I stays positive definite; otherwise
/// InvalidArgument.
LinearEstimator ridge_linear(const Mat& h, const Mat& sigma_n, const Mat& sy_hat, double lambda);

/// Bayesian MSE of A under E[y y^T] = Sy:
/// tr((AH - I) Sy (AH - I)^T) + tr(A Sn A^T).
double linear_bmse(const Mat& a, const Mat& h, const Mat& sigma_n, const Mat& sy);

/// MSE of A at a fixed parameter y.
double linear_mse_at(const Mat& a, const Mat& h, const Mat& sigma_n, const Vec& y);

// Scalar model x = y + w, w ~ N(0, 1), y ~ N(0, rho).

double scalar_lbce(double ybar2, double lambda);
double scalar_ridge(double ybar2, double rho, double lambda);
/// Ridge parameter that reproduces scalar_lbce(., lambda_bce); always <= 0.
double ridge_equiv_lambda(double lambda_bce, double rho);
/// BMSE of the scalar LBCE trained on a set with normalized second moment
/// z_N, where alpha = 1/rho.
double scalar_bmse_given_zn(double z_n, double alpha, double lambda);

struct MeanStderr {
  double mean = 0;
  double stderr_ = 0;
};

/// E over z_N ~ chi2_N / N of scalar_bmse_given_zn. reps >= 1e4.
MeanStderr bmse_n_expectation(long n, double rho, double lambda, long reps, Rng& rng);

/// The same expectation over a lambda grid with common z_N draws.
std::vector<MeanStderr> bmse_n_curve(long n, double rho, const std::vector<double>& lambdas, long reps,
                                     std::uint64_t seed);

/// (1/N) sum y_i y_i^T + jitter I.
Mat empirical_second_moment(const std::vector<ParamVector>& samples, double jitter = 1e-9);

}  // namespace bce
