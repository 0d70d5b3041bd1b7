#pragma once

// Minimal feed-forward networks with hand-written backpropagation, the
// grouped bias-constrained loss, Adam and learning-rate schedules.
//
// Batches are column-major: every column of an input matrix is one sample.
// A grouped batch with N groups of M samples stores group i in columns
// [i*M, (i+1)*M).

#include "bce/io.hpp"

#include <optional>

namespace bce {

enum class Activation { Relu, Tanh };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& s);

struct MlpSpec {
  std::vector<int> widths;              // input, hidden..., output
  std::vector<Activation> activations;  // one per hidden layer; output is linear

  void validate() const;
  int layers() const { return static_cast<int>(widths.size()) - 1; }
  int input_dim() const { return widths.front(); }
  int output_dim() const { return widths.back(); }
  Eigen::Index param_count() const;

  Json to_json() const;
  static MlpSpec from_json(const Json& j);
  /// widths with the same activation on every hidden layer
  static MlpSpec uniform(std::vector<int> widths, Activation act);
};

/// Per-layer activations kept for backpropagation.
struct Tape {
  std::vector<Mat> a;  // a[0] = input, a[l] = output of layer l
};

/// Parameters live in one flat vector; layer l stores W_l (out x in,
/// column-major) followed by b_l.
class Mlp {
 public:
  Mlp(MlpSpec spec, Vec params);

  /// Glorot-uniform weights, zero biases.
  static Mlp init(const MlpSpec& spec, std::uint64_t seed);

  const MlpSpec& spec() const { return spec_; }
  const Vec& params() const { return params_; }
  Vec& params() { return params_; }

  Eigen::Map<const Mat> weight(int layer) const;
  Eigen::Map<const Vec> bias(int layer) const;
  Eigen::Map<Mat> weight(int layer);
  Eigen::Map<Vec> bias(int layer);

  Mat forward(const Mat& input) const;
  Mat forward(const Mat& input, Tape& tape) const;

  /// Accumulates dLoss/dparams into `grad` (resized and zeroed if empty) and
  /// optionally returns dLoss/dinput.
  void backward(const Tape& tape, const Mat& d_output, Vec& grad, Mat* d_input = nullptr) const;

 private:
  std::vector<Eigen::Index> offsets_;
  MlpSpec spec_;
  Vec params_;
};

/// Which pairs enter the MSE term of the grouped loss: all N*M pairs, or only
/// the first sample of every group.
enum class MseTerm { AllPairs, FirstOfGroup };

struct LossGrad {
  double loss = 0;
  double mse = 0;
  double bias2 = 0;
  Mat grad;  // d x (N*M), dLoss / dprediction
};

/// mean squared error + lambda * (1/N) sum_i || mean_j pred_ij - y_i ||^2.
LossGrad bce_loss(const Mat& predictions, const Mat& targets, long per_group, double lambda,
                  MseTerm term = MseTerm::AllPairs);

struct BceBatch {
  Mat inputs;   // features x (N*M)
  Mat targets;  // d x N
  long per_group = 1;
  double lambda = 0;
};

struct BatchGrad {
  double loss = 0;
  Vec grad;
};

BatchGrad loss_and_gradient(const Mlp& net, const BceBatch& batch, MseTerm term = MseTerm::AllPairs);

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  explicit Adam(Eigen::Index size, AdamConfig config = {});

  void step(Vec& params, const Vec& grad, double lr);
  long steps() const { return t_; }

 private:
  AdamConfig config_;
  Vec m_, v_;
  long t_ = 0;
};

/// Multistep or reduce-on-plateau learning-rate schedule.
class LrSchedule {
 public:
  enum class Kind { Constant, MultiStep, Plateau };

  static LrSchedule constant(double base);
  static LrSchedule multistep(double base, std::vector<long> milestones, double factor);
  static LrSchedule plateau(double base, int patience, double factor, double min_lr = 0.0);

  /// Step size at optimizer step `step` (0-based).
  double lr(long step) const;
  /// Reports a validation metric (lower is better). Plateau schedules cut the
  /// rate after `patience` reports without improvement.
  void observe(double metric);

  Kind kind() const { return kind_; }
  Json to_json() const;
  static LrSchedule from_json(const Json& j);

 private:
  Kind kind_ = Kind::Constant;
  double base_ = 1e-3;
  std::vector<long> milestones_;
  double factor_ = 0.1;
  int patience_ = 10;
  double min_lr_ = 0;
  double current_ = 1e-3;
  double best_ = std::numeric_limits<double>::infinity();
  int bad_ = 0;
};

struct GradCheckReport {
  double max_rel_error = 0;
  Eigen::Index worst_index = -1;
  Eigen::Index checked = 0;
  double analytic = 0;
  double numeric = 0;
};

struct GradCheckOptions {
  long groups = 3;
  long per_group = 4;
  double lambda = 1.0;
  double step = 1e-5;
  MseTerm term = MseTerm::AllPairs;
};

/// Compares backward() with central differences on a random network and a
/// random grouped batch. For relu networks, inputs whose hidden
/// pre-activations come near zero are redrawn so no kink is crossed.
/// Relative error is |a - f| / max(|a|, |f|, 1e-3 * max_k |a_k|).
GradCheckReport grad_check(const MlpSpec& spec, std::uint64_t seed, const GradCheckOptions& options = {});

/// Network checkpoint: blob with {"format": "bce-mlp", "spec": ..., "extra": ...}
/// and the flat parameter vector as payload.
void save_mlp(const std::filesystem::path& path, const Mlp& net, const Json& extra = Json::object());
struct LoadedMlp {
  Mlp net;
  Json extra;
};
LoadedMlp load_mlp(const std::filesystem::path& path);

}  // namespace bce
