#pragma once

// Monte-Carlo measurement of estimator performance at fixed parameters:
// bias, variance and MSE, inverse-SNR error, CRB scatter plots, averaging
// curves, and the closed-form linear regularization study.

#include "bce/linear_bce.hpp"
#include "bce/training.hpp"

#include <functional>
#include <memory>
#include <optional>

namespace bce {

/// Any estimator, applied to a batch of observations. Returns d x count.
/// Must be safe to call concurrently.
struct Estimator {
  std::string name;
  Eigen::Index dim = 0;
  std::function<Mat(std::span<const ObservationBatch>)> apply;
};

Estimator make_estimator(std::string name, const LinearEstimator& est);
Estimator make_estimator(std::string name, std::shared_ptr<const SnrNet> net);
Estimator make_estimator(std::string name, std::shared_ptr<const CovNet> net);
Estimator make_estimator(std::string name, std::shared_ptr<const LinearNet> net);
Estimator snr_mle_estimator(const SnrModel& model);
/// Adds a constant offset to every estimate.
Estimator offset_estimator(Estimator base, double offset);

struct MetricsRecord {
  ParamVector y;
  Vec bias;
  Vec bias_stderr;
  double variance = 0;  // trace of the error covariance about the mean estimate
  double variance_stderr = 0;
  double mse = 0;
  double mse_stderr = 0;
  std::optional<double> crb;
  std::optional<double> crb_stderr;
  long reps = 0;
};

/// Metrics from a d x reps matrix of estimates at parameter y.
MetricsRecord metrics_from_estimates(const Mat& estimates, const ParamVector& y);

/// Draws `reps` observations at y and applies the estimator. Observation r is
/// drawn from substream r of `seed`, so the result does not depend on the
/// thread count.
Mat collect_estimates(const Estimator& est, const StatModel& model, const ParamVector& y, long reps,
                      std::uint64_t seed);

MetricsRecord eval_point(const Estimator& est, const StatModel& model, const ParamVector& y, long reps,
                         std::uint64_t seed);

/// Grid point i uses substream i of `seed`.
std::vector<MetricsRecord> eval_sweep(const Estimator& est, const StatModel& model,
                                      const std::vector<ParamVector>& grid, long reps, std::uint64_t seed);

/// CSV with columns y..., bias..., var, mse, crb, bias_stderr..., var_stderr,
/// mse_stderr, crb_stderr. Extra scalar columns can be appended per row.
CsvTable metrics_csv(const std::vector<MetricsRecord>& records,
                     const std::vector<std::pair<std::string, std::vector<double>>>& extra = {});

/// E[(1/y_hat - 1/y)^2] with estimates clipped to [kSnrMin, kSnrMax].
MeanStderr inverse_snr_mse(const Mat& estimates, double y);
MeanStderr inverse_snr_mse(const Estimator& est, const SnrModel& model, double y, long reps, std::uint64_t seed);

/// Trace of the inverse FIM at y for models with an analytic FIM (linear and
/// covariance). Throws InvalidArgument for the SNR model.
double analytic_crb(const StatModel& model, const ParamVector& y);

struct ScatterPoint {
  ParamVector y;
  double crb = 0;
  double mse = 0;
  double mse_stderr = 0;
  double bias_norm = 0;
};

/// `count` test parameters from `test_prior`, each evaluated with `reps`
/// observations; sorted by CRB.
std::vector<ScatterPoint> crb_scatter(const Estimator& est, const StatModel& model, const FictitiousPrior& test_prior,
                                      long count, long reps, std::uint64_t seed);
/// Mean of mse/crb over the points.
double mean_crb_ratio(const std::vector<ScatterPoint>& pts);
CsvTable scatter_csv(const std::vector<ScatterPoint>& pts);

struct AveragingRow {
  long mt = 0;
  double mse = 0, mse_stderr = 0;
  double bias_norm = 0;
  double variance = 0, variance_stderr = 0;
};
struct AveragingCurve {
  std::vector<AveragingRow> rows;
  /// Least-squares slope of log variance against log M_t.
  double variance_slope() const;
  CsvTable to_csv() const;
};

/// Global estimate = mean of the local estimates of M_t i.i.d. observations
/// of the same y.
AveragingCurve averaging_eval(const Estimator& est, const StatModel& model, const ParamVector& y,
                              const std::vector<long>& mt_list, long reps, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Regularization study with closed-form linear estimators

struct RegularizationConfig {
  int n = 20;
  int d = 20;
  Mat h;        // defaults to the identity when empty
  Mat sigma_n;  // defaults to a random rotation of linspace(0.5, 1.5), trace n
  Mat sigma_y;  // defaults to a random rotation of {0.01 x 5, 100 x 15}
  std::uint64_t matrix_seed = 2024;
  std::vector<long> n_list{5, 10, 20};
  long trials = 100;
  std::vector<double> bce_grid;    // defaults to 100 points on [0, 10]
  std::vector<double> ridge_grid;  // defaults to 100 points on [-0.012, 0.002]
  long validation_pairs = 100000;
  /// Diagonal loading of the sample second moment before inversion.
  double jitter = 0.1;

  void finalize();  // fills defaults, validates
  Json to_json() const;
  static RegularizationConfig from_json(const Json& j);
};

struct RegularizationTrial {
  long n = 0;
  long trial = 0;
  double emmse = 0, ridge = 0, bce = 0;  // test BMSE under the true prior
  double ridge_lambda = 0, bce_lambda = 0;
  long ridge_skipped = 0;  // grid points where Sigma_n + lambda I is not PD
};

struct RegularizationSummary {
  long n = 0;
  MeanStderr emmse, ridge, bce;
  double ridge_negative_fraction = 0;
  double mean_ridge_lambda = 0, mean_bce_lambda = 0;
  double oracle_lmmse = 0;  // BMSE of the LMMSE with the true prior
};

struct RegularizationResult {
  std::vector<RegularizationTrial> trials;
  std::vector<RegularizationSummary> summary;
  CsvTable trials_csv() const;
  CsvTable summary_csv() const;
};

RegularizationResult regularization_experiment(RegularizationConfig cfg, std::uint64_t seed);

}  // namespace bce
