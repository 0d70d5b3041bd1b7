#include "bce/neuralnet.hpp"

#include <cmath>

namespace bce {

std::string to_string(Activation a) { return a == Activation::Relu ? "relu" : "tanh"; }

Activation activation_from_string(const std::string& s) {
  if (s == "relu") return Activation::Relu;
  if (s == "tanh") return Activation::Tanh;
  throw InvalidArgument("unknown activation '" + s + "' (expected relu or tanh)");
}

// ---------------------------------------------------------------------------
// MlpSpec

void MlpSpec::validate() const {
  require(widths.size() >= 2, "MlpSpec: need at least an input and an output width");
  for (int w : widths) require(w > 0, "MlpSpec: widths must be positive");
  require(activations.size() + 2 == widths.size(), "MlpSpec: need one activation per hidden layer");
}

Eigen::Index MlpSpec::param_count() const {
  Eigen::Index n = 0;
  for (int l = 0; l < layers(); ++l) n += static_cast<Eigen::Index>(widths[l + 1]) * (widths[l] + 1);
  return n;
}

Json MlpSpec::to_json() const {
  Json acts = Json::array();
  for (auto a : activations) acts.push_back(to_string(a));
  return {{"widths", widths}, {"activations", acts}};
}

MlpSpec MlpSpec::from_json(const Json& j) {
  MlpSpec s;
  s.widths = j.at("widths").get<std::vector<int>>();
  if (j.contains("activations")) {
    const auto& a = j.at("activations");
    if (a.is_string()) {
      s.activations.assign(s.widths.size() >= 2 ? s.widths.size() - 2 : 0, activation_from_string(a.get<std::string>()));
    } else {
      for (const auto& e : a) s.activations.push_back(activation_from_string(e.get<std::string>()));
    }
  }
  s.validate();
  return s;
}

MlpSpec MlpSpec::uniform(std::vector<int> widths, Activation act) {
  MlpSpec s;
  s.activations.assign(widths.size() >= 2 ? widths.size() - 2 : 0, act);
  s.widths = std::move(widths);
  s.validate();
  return s;
}

// ---------------------------------------------------------------------------
// Mlp

Mlp::Mlp(MlpSpec spec, Vec params) : spec_(std::move(spec)), params_(std::move(params)) {
  spec_.validate();
  require(params_.size() == spec_.param_count(), "Mlp: parameter vector has the wrong length");
  Eigen::Index off = 0;
  for (int l = 0; l < spec_.layers(); ++l) {
    offsets_.push_back(off);
    off += static_cast<Eigen::Index>(spec_.widths[l + 1]) * (spec_.widths[l] + 1);
  }
}

Mlp Mlp::init(const MlpSpec& spec, std::uint64_t seed) {
  spec.validate();
  Rng rng(seed);
  Vec p = Vec::Zero(spec.param_count());
  Eigen::Index off = 0;
  for (int l = 0; l < spec.layers(); ++l) {
    const int in = spec.widths[l], out = spec.widths[l + 1];
    const double limit = std::sqrt(6.0 / (in + out));
    for (Eigen::Index k = 0; k < static_cast<Eigen::Index>(in) * out; ++k) p[off + k] = rng.uniform(-limit, limit);
    off += static_cast<Eigen::Index>(out) * (in + 1);
  }
  return Mlp(spec, std::move(p));
}

Eigen::Map<const Mat> Mlp::weight(int l) const {
  return {params_.data() + offsets_[l], spec_.widths[l + 1], spec_.widths[l]};
}
Eigen::Map<const Vec> Mlp::bias(int l) const {
  return {params_.data() + offsets_[l] + static_cast<Eigen::Index>(spec_.widths[l + 1]) * spec_.widths[l],
          spec_.widths[l + 1]};
}
Eigen::Map<Mat> Mlp::weight(int l) { return {params_.data() + offsets_[l], spec_.widths[l + 1], spec_.widths[l]}; }
Eigen::Map<Vec> Mlp::bias(int l) {
  return {params_.data() + offsets_[l] + static_cast<Eigen::Index>(spec_.widths[l + 1]) * spec_.widths[l],
          spec_.widths[l + 1]};
}

namespace {

// tanh through the vectorized exp: 1 - 2 / (e^{2z} + 1). Saturates cleanly
// at +-1; absolute error stays at rounding level.
void tanh_inplace(Mat& z) { z = 1.0 - 2.0 / ((2.0 * z.array()).exp() + 1.0); }

void activate(Activation act, Mat& z) {
  if (act == Activation::Relu)
    z = z.cwiseMax(0.0);
  else
    tanh_inplace(z);
}

}  // namespace

Mat Mlp::forward(const Mat& input, Tape& tape) const {
  if (input.rows() != spec_.input_dim())
    throw InvalidArgument("Mlp::forward: input has " + std::to_string(input.rows()) + " rows, expected " +
                          std::to_string(spec_.input_dim()));
  const int L = spec_.layers();
  tape.a.resize(L + 1);
  tape.a[0] = input;
  for (int l = 0; l < L; ++l) {
    Mat z = weight(l) * tape.a[l];
    z.colwise() += bias(l);
    if (l + 1 < L) activate(spec_.activations[l], z);
    tape.a[l + 1] = std::move(z);
  }
  return tape.a[L];
}

Mat Mlp::forward(const Mat& input) const {
  if (input.rows() != spec_.input_dim())
    throw InvalidArgument("Mlp::forward: input has " + std::to_string(input.rows()) + " rows, expected " +
                          std::to_string(spec_.input_dim()));
  Mat a = input;
  const int L = spec_.layers();
  for (int l = 0; l < L; ++l) {
    Mat z = weight(l) * a;
    z.colwise() += bias(l);
    if (l + 1 < L) activate(spec_.activations[l], z);
    a = std::move(z);
  }
  return a;
}

void Mlp::backward(const Tape& tape, const Mat& d_output, Vec& grad, Mat* d_input) const {
  const int L = spec_.layers();
  require(static_cast<int>(tape.a.size()) == L + 1, "Mlp::backward: tape does not match network");
  require(d_output.rows() == spec_.output_dim() && d_output.cols() == tape.a[L].cols(),
          "Mlp::backward: output gradient shape mismatch");
  if (grad.size() == 0) grad = Vec::Zero(params_.size());
  require(grad.size() == params_.size(), "Mlp::backward: gradient has the wrong length");

  Mat delta = d_output;  // dLoss / d(pre-activation) of layer l
  for (int l = L - 1; l >= 0; --l) {
    const int in = spec_.widths[l], out = spec_.widths[l + 1];
    Eigen::Map<Mat> gw(grad.data() + offsets_[l], out, in);
    Eigen::Map<Vec> gb(grad.data() + offsets_[l] + static_cast<Eigen::Index>(out) * in, out);
    gw.noalias() += delta * tape.a[l].transpose();
    gb += delta.rowwise().sum();
    if (l == 0 && d_input == nullptr) break;
    Mat up = weight(l).transpose() * delta;
    if (l > 0) {
      const Mat& a = tape.a[l];
      if (spec_.activations[l - 1] == Activation::Relu)
        up = (a.array() > 0.0).select(up, 0.0);
      else
        up.array() *= 1.0 - a.array().square();
    }
    delta = std::move(up);
  }
  if (d_input != nullptr) *d_input = std::move(delta);
}

// ---------------------------------------------------------------------------
// Loss

LossGrad bce_loss(const Mat& pred, const Mat& targets, long m, double lambda, MseTerm term) {
  require(m >= 1, "bce_loss: group size must be >= 1");
  require(lambda >= 0 && std::isfinite(lambda), "bce_loss: lambda must be finite and >= 0");
  require(pred.rows() == targets.rows(), "bce_loss: prediction and target dimensions differ");
  require(pred.cols() == targets.cols() * m, "bce_loss: predictions are not N groups of M");
  const Eigen::Index n = targets.cols();
  const double nm = static_cast<double>(n) * static_cast<double>(m);

  LossGrad out;
  out.grad = Mat::Zero(pred.rows(), pred.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto block = pred.middleCols(i * m, m);
    const Vec b = block.rowwise().mean() - targets.col(i);
    out.bias2 += b.squaredNorm();
    if (term == MseTerm::AllPairs) {
      const Mat e = block.colwise() - targets.col(i);
      out.mse += e.squaredNorm();
      out.grad.middleCols(i * m, m) = (2.0 / nm) * e;
    } else {
      const Vec e = block.col(0) - targets.col(i);
      out.mse += e.squaredNorm();
      out.grad.col(i * m) = (2.0 / static_cast<double>(n)) * e;
    }
    out.grad.middleCols(i * m, m).colwise() += (2.0 * lambda / nm) * b;
  }
  out.mse /= term == MseTerm::AllPairs ? nm : static_cast<double>(n);
  out.bias2 /= static_cast<double>(n);
  out.loss = out.mse + lambda * out.bias2;
  return out;
}

BatchGrad loss_and_gradient(const Mlp& net, const BceBatch& batch, MseTerm term) {
  Tape tape;
  const Mat pred = net.forward(batch.inputs, tape);
  const auto lg = bce_loss(pred, batch.targets, batch.per_group, batch.lambda, term);
  BatchGrad out;
  out.loss = lg.loss;
  net.backward(tape, lg.grad, out.grad);
  return out;
}

// ---------------------------------------------------------------------------
// Optimizer and schedules

Adam::Adam(Eigen::Index size, AdamConfig config)
    : config_(config), m_(Vec::Zero(size)), v_(Vec::Zero(size)) {}

void Adam::step(Vec& params, const Vec& grad, double lr) {
  require(grad.size() == m_.size() && params.size() == m_.size(), "Adam: size mismatch");
  ++t_;
  m_ = config_.beta1 * m_ + (1.0 - config_.beta1) * grad;
  v_ = config_.beta2 * v_ + (1.0 - config_.beta2) * grad.cwiseAbs2();
  const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  params.array() -= lr * (m_.array() / c1) / ((v_.array() / c2).sqrt() + config_.eps);
}

LrSchedule LrSchedule::constant(double base) {
  require(base >= 0, "learning rate must be >= 0");
  LrSchedule s;
  s.base_ = s.current_ = base;
  return s;
}

LrSchedule LrSchedule::multistep(double base, std::vector<long> milestones, double factor) {
  auto s = constant(base);
  s.kind_ = Kind::MultiStep;
  std::sort(milestones.begin(), milestones.end());
  s.milestones_ = std::move(milestones);
  s.factor_ = factor;
  return s;
}

LrSchedule LrSchedule::plateau(double base, int patience, double factor, double min_lr) {
  require(patience >= 1, "plateau patience must be >= 1");
  auto s = constant(base);
  s.kind_ = Kind::Plateau;
  s.patience_ = patience;
  s.factor_ = factor;
  s.min_lr_ = min_lr;
  return s;
}

double LrSchedule::lr(long step) const {
  if (kind_ != Kind::MultiStep) return current_;
  double lr = base_;
  for (long m : milestones_)
    if (step >= m) lr *= factor_;
  return lr;
}

void LrSchedule::observe(double metric) {
  if (kind_ != Kind::Plateau) return;
  if (metric < best_) {
    best_ = metric;
    bad_ = 0;
    return;
  }
  if (++bad_ >= patience_) {
    current_ = std::max(min_lr_, current_ * factor_);
    bad_ = 0;
  }
}

Json LrSchedule::to_json() const {
  switch (kind_) {
    case Kind::Constant:
      return {{"kind", "constant"}, {"lr", base_}};
    case Kind::MultiStep:
      return {{"kind", "multistep"}, {"lr", base_}, {"milestones", milestones_}, {"factor", factor_}};
    case Kind::Plateau:
      return {{"kind", "plateau"}, {"lr", base_}, {"patience", patience_}, {"factor", factor_}, {"min_lr", min_lr_}};
  }
  return {};
}

LrSchedule LrSchedule::from_json(const Json& j) {
  const auto kind = j.value("kind", std::string("constant"));
  const double lr = j.value("lr", 1e-3);
  if (kind == "constant") return constant(lr);
  if (kind == "multistep")
    return multistep(lr, j.value("milestones", std::vector<long>{}), j.value("factor", 0.1));
  if (kind == "plateau") return plateau(lr, j.value("patience", 10), j.value("factor", 0.5), j.value("min_lr", 0.0));
  throw InvalidArgument("unknown schedule kind '" + kind + "'");
}

// ---------------------------------------------------------------------------
// Gradient check

GradCheckReport grad_check(const MlpSpec& spec, std::uint64_t seed, const GradCheckOptions& opt) {
  spec.validate();
  require(opt.groups >= 1 && opt.per_group >= 1 && opt.step > 0, "grad_check: bad options");
  Rng rng(seed);
  Mlp net = Mlp::init(spec, rng.engine()());
  for (int l = 0; l < spec.layers(); ++l) {
    // nonzero biases so every parameter gets exercised
    for (Eigen::Index k = 0; k < net.bias(l).size(); ++k) net.bias(l)[k] = 0.3 * rng.normal();
  }

  const bool has_relu =
      std::find(spec.activations.begin(), spec.activations.end(), Activation::Relu) != spec.activations.end();
  const Eigen::Index count = opt.groups * opt.per_group;
  Mat inputs(spec.input_dim(), count);
  constexpr double kMargin = 1e-2;
  for (Eigen::Index c = 0; c < count; ++c) {
    for (int attempt = 0;; ++attempt) {
      if (attempt > 10000) throw NumericalError("grad_check: could not draw a kink-free input");
      inputs.col(c) = rng.normal_vector(spec.input_dim());
      if (!has_relu) break;
      // smallest |pre-activation| over hidden relu units
      Vec a = inputs.col(c);
      double smallest = std::numeric_limits<double>::infinity();
      for (int l = 0; l + 1 < spec.layers(); ++l) {
        Vec z = net.weight(l) * a + net.bias(l);
        if (spec.activations[l] == Activation::Relu) {
          smallest = std::min(smallest, z.cwiseAbs().minCoeff());
          a = z.cwiseMax(0.0);
        } else {
          a = z.array().tanh().matrix();
        }
      }
      if (smallest > kMargin) break;
    }
  }
  BceBatch batch{inputs, rng.normal_matrix(spec.output_dim(), opt.groups), opt.per_group, opt.lambda};

  const Vec analytic = loss_and_gradient(net, batch, opt.term).grad;
  const double floor = 1e-3 * std::max(analytic.cwiseAbs().maxCoeff(), 1e-12);
  GradCheckReport rep;
  Vec& p = net.params();
  for (Eigen::Index k = 0; k < p.size(); ++k) {
    const double saved = p[k];
    p[k] = saved + opt.step;
    const double up = loss_and_gradient(net, batch, opt.term).loss;
    p[k] = saved - opt.step;
    const double down = loss_and_gradient(net, batch, opt.term).loss;
    p[k] = saved;
    const double numeric = (up - down) / (2.0 * opt.step);
    const double err = std::abs(analytic[k] - numeric) / std::max({std::abs(analytic[k]), std::abs(numeric), floor});
    ++rep.checked;
    if (err > rep.max_rel_error || rep.worst_index < 0) {
      rep.max_rel_error = err;
      rep.worst_index = k;
      rep.analytic = analytic[k];
      rep.numeric = numeric;
    }
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Checkpoints

void save_mlp(const std::filesystem::path& path, const Mlp& net, const Json& extra) {
  const Json header{{"format", "bce-mlp"}, {"version", 1}, {"spec", net.spec().to_json()}, {"extra", extra}};
  write_blob(path, header, std::span<const double>(net.params().data(), static_cast<std::size_t>(net.params().size())));
}

LoadedMlp load_mlp(const std::filesystem::path& path) {
  auto blob = read_blob(path);
  if (blob.header.value("format", std::string()) != "bce-mlp")
    throw IoError(path.string() + ": not a network checkpoint");
  MlpSpec spec;
  try {
    spec = MlpSpec::from_json(blob.header.at("spec"));
  } catch (const std::exception& e) {
    throw IoError(path.string() + ": bad network spec: " + e.what());
  }
  if (static_cast<Eigen::Index>(blob.payload.size()) != spec.param_count())
    throw IoError(path.string() + ": parameter payload does not match the network layout");
  Vec p = Eigen::Map<const Vec>(blob.payload.data(), static_cast<Eigen::Index>(blob.payload.size()));
  return {Mlp(std::move(spec), std::move(p)), blob.header.value("extra", Json::object())};
}

}  // namespace bce
