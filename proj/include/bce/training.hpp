#pragma once

// Training of the learned estimators: the SNR network on hand-made moment
// features, the iterative-refinement covariance network, and plain linear
// networks for the linear Gaussian model. Every loop minimizes the grouped
// bias-constrained loss; lambda = 0 gives the EMMSE baseline.

#include "bce/datagen.hpp"
#include "bce/neuralnet.hpp"

#include <span>

namespace bce {

// ---------------------------------------------------------------------------
// Training configuration

struct TrainConfig {
  double lambda = 0;
  long groups = 10;      // N_b
  long per_group = 100;  // M_b
  long steps = 20000;
  std::uint64_t seed = 1;
  MseTerm mse_term = MseTerm::AllPairs;
  AdamConfig adam;
  Json schedule = {{"kind", "multistep"}, {"lr", 1e-3}, {"milestones", {10000, 15000}}, {"factor", 0.1}};

  /// Fresh batches every step, or a fixed dataset of `dataset_groups` groups
  /// that is cycled through in order.
  enum class DataMode { Fresh, Fixed };
  DataMode data_mode = DataMode::Fresh;
  long dataset_groups = 0;

  /// Validation every `eval_every` steps on `val_groups` groups of
  /// `per_group` (0 disables). Drives plateau schedules; with `keep_best`
  /// the best validated parameters are returned.
  long eval_every = 500;
  long val_groups = 0;
  bool keep_best = true;

  void validate() const;
  Json to_json() const;
  static TrainConfig from_json(const Json& j);
};

struct TrainHistory {
  std::vector<double> loss;  // per step
  std::vector<double> lr;    // per step
  std::vector<std::pair<long, double>> validation;
  long best_step = -1;
  CsvTable to_csv() const;
};

// ---------------------------------------------------------------------------
// SNR estimator

inline constexpr int kSnrFeatures = 6;

/// Moments of x / sqrt(m2): (m4, m6, m4^2, m6^(2/3), m4 / m6^(2/3), log m4).
Vec snr_features(const ObservationBatch& x);

class SnrNet {
 public:
  /// One tanh hidden layer. The input standardization comes from a pilot
  /// sample with SNR uniform on [snr_lo, snr_hi]; the output affine map sends
  /// [-1, 1] to that range.
  static SnrNet create(int hidden, const SnrModel& model, double snr_lo, double snr_hi, std::uint64_t seed);

  SnrNet(Mlp net, Vec feat_mean, Vec feat_scale, double out_center, double out_scale);

  /// Standardized features, one column per observation.
  Mat inputs(std::span<const ObservationBatch> xs) const;
  /// Raw network output mapped to SNR units (not clipped).
  Mat output(const Mat& inputs) const;
  /// SNR estimates clipped to [kSnrMin, kSnrMax].
  Mat estimate(std::span<const ObservationBatch> xs) const;

  double loss_grad(const Mat& inputs, const Mat& targets, long m, double lambda, MseTerm term, Vec& grad) const;

  Mlp& net() { return net_; }
  const Mlp& net() const { return net_; }

  void save(const std::filesystem::path& path, const Json& extra = Json::object()) const;
  static SnrNet load(const std::filesystem::path& path);

 private:
  Mlp net_;
  Vec feat_mean_, feat_scale_;
  double out_center_, out_scale_;
};

// ---------------------------------------------------------------------------
// Covariance network

struct CovNetSpec {
  /// What the MLP sees besides v_k: "sigma" feeds vech(C_k) with
  /// C_k = Sigma(alpha_k) after the first step (C_0 enters only once);
  /// "residual" feeds vech(C_0 - Sigma(alpha_k)) at every step.
  enum class Input { Sigma, Residual };
  Input input = Input::Residual;
  int iterations = 50;
  double step = 0.1;
  int hidden = 128;
  int state = 16;
  Activation activation = Activation::Tanh;

  void validate() const;
  Json to_json() const;
  static CovNetSpec from_json(const Json& j);
};

/// Number of upper-triangular entries of a 5x5 symmetric matrix.
inline constexpr int kCovVech = 15;

/// Upper triangle, row by row.
Vec cov_vech(const Mat& c);

/// Iterative refinement: a shared MLP maps (vech(C_k), v_k) to
/// (d_alpha, d_v); alpha_{k+1} = clamp(alpha_k + step d_alpha, 0, 1),
/// v_{k+1} = v_k + step d_v, C_{k+1} = Sigma(alpha_{k+1}). C_0 is the sample
/// covariance, alpha_0 = 1/2, v_0 = 0. In residual mode the matrix input is
/// C_0 - Sigma(alpha_k) instead. The clamp passes gradients straight through
/// during training.
class CovNet {
 public:
  CovNet(CovNetSpec spec, Mlp mlp);
  static CovNet init(const CovNetSpec& spec, std::uint64_t seed);

  const CovNetSpec& spec() const { return spec_; }
  Mlp& mlp() { return mlp_; }
  const Mlp& mlp() const { return mlp_; }

  /// vech of the sample covariance, one column per observation.
  Mat inputs(std::span<const ObservationBatch> xs) const;
  /// 9 x B estimates from 15 x B inputs.
  Mat forward(const Mat& c0) const;
  Mat estimate(std::span<const ObservationBatch> xs) const { return forward(inputs(xs)); }

  double loss_grad(const Mat& inputs, const Mat& targets, long m, double lambda, MseTerm term, Vec& grad) const;

  void save(const std::filesystem::path& path, const Json& extra = Json::object()) const;
  static CovNet load(const std::filesystem::path& path);

 private:
  struct Trace {
    std::vector<Tape> tapes;
  };
  Mat run(const Mat& c0, Trace* trace) const;

  CovNetSpec spec_;
  Mlp mlp_;
  Mat pattern_;   // 15 x 9, vech(Sigma(alpha)) = pattern_ alpha + offset_
  Vec offset_;
};

// ---------------------------------------------------------------------------
// Linear networks on the linear Gaussian model

/// A single affine layer x -> A x + b.
class LinearNet {
 public:
  static LinearNet init(Eigen::Index n, Eigen::Index d, std::uint64_t seed);
  explicit LinearNet(Mlp net);

  Mat inputs(std::span<const ObservationBatch> xs) const;
  Mat estimate(std::span<const ObservationBatch> xs) const { return net_.forward(inputs(xs)); }
  double loss_grad(const Mat& inputs, const Mat& targets, long m, double lambda, MseTerm term, Vec& grad) const;

  Mat a() const { return net_.weight(0); }
  Vec b() const { return net_.bias(0); }
  Mlp& net() { return net_; }
  const Mlp& net() const { return net_; }

 private:
  Mlp net_;
};

// ---------------------------------------------------------------------------
// Training loops

TrainHistory train(SnrNet& net, const FictitiousPrior& prior, const SnrModel& model, const TrainConfig& cfg);
TrainHistory train(CovNet& net, const FictitiousPrior& prior, const StructuredCovModel& model, const TrainConfig& cfg);
TrainHistory train(LinearNet& net, const FictitiousPrior& prior, const LinearGaussianModel& model,
                   const TrainConfig& cfg);

/// Column-stacked targets y_i of a dataset, d x N.
Mat dataset_targets(const DatasetNM& ds);
/// All observations of a dataset, group by group.
std::vector<ObservationBatch> dataset_observations(const DatasetNM& ds);

}  // namespace bce
