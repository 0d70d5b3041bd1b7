#include "bce/training.hpp"

#include <cmath>
#include <set>

namespace bce {

// ---------------------------------------------------------------------------
// TrainConfig

void TrainConfig::validate() const {
  require(lambda >= 0 && std::isfinite(lambda), "train: lambda must be finite and >= 0");
  require(groups >= 1 && per_group >= 1, "train: batch sizes must be positive");
  require(steps >= 0, "train: steps must be >= 0");
  require(eval_every >= 1 && val_groups >= 0, "train: bad validation settings");
  if (data_mode == DataMode::Fixed)
    require(dataset_groups >= groups && dataset_groups % groups == 0,
            "train: dataset_groups must be a positive multiple of the batch group count");
  (void)LrSchedule::from_json(schedule);
}

Json TrainConfig::to_json() const {
  return {{"lambda", lambda},
          {"groups", groups},
          {"per_group", per_group},
          {"steps", steps},
          {"seed", seed},
          {"mse_term", mse_term == MseTerm::AllPairs ? "all_pairs" : "first_of_group"},
          {"adam", {{"beta1", adam.beta1}, {"beta2", adam.beta2}, {"eps", adam.eps}}},
          {"schedule", schedule},
          {"data_mode", data_mode == DataMode::Fresh ? "fresh" : "fixed"},
          {"dataset_groups", dataset_groups},
          {"eval_every", eval_every},
          {"val_groups", val_groups},
          {"keep_best", keep_best}};
}

TrainConfig TrainConfig::from_json(const Json& j) {
  static const std::set<std::string> known{"lambda",    "groups",         "per_group",  "steps",
                                           "seed",      "mse_term",       "adam",       "schedule",
                                           "data_mode", "dataset_groups", "eval_every", "val_groups",
                                           "keep_best"};
  require(j.is_object(), "train config must be an object");
  for (const auto& [k, v] : j.items()) require(known.count(k) > 0, "train config: unknown key '" + k + "'");
  TrainConfig c;
  try {
    c.lambda = j.value("lambda", c.lambda);
    c.groups = j.value("groups", c.groups);
    c.per_group = j.value("per_group", c.per_group);
    c.steps = j.value("steps", c.steps);
    c.seed = j.value("seed", c.seed);
    const auto term = j.value("mse_term", std::string("all_pairs"));
    require(term == "all_pairs" || term == "first_of_group", "mse_term must be all_pairs or first_of_group");
    c.mse_term = term == "all_pairs" ? MseTerm::AllPairs : MseTerm::FirstOfGroup;
    if (j.contains("adam")) {
      const auto& a = j.at("adam");
      c.adam.beta1 = a.value("beta1", c.adam.beta1);
      c.adam.beta2 = a.value("beta2", c.adam.beta2);
      c.adam.eps = a.value("eps", c.adam.eps);
    }
    if (j.contains("schedule")) c.schedule = j.at("schedule");
    const auto mode = j.value("data_mode", std::string("fresh"));
    require(mode == "fresh" || mode == "fixed", "data_mode must be fresh or fixed");
    c.data_mode = mode == "fresh" ? DataMode::Fresh : DataMode::Fixed;
    c.dataset_groups = j.value("dataset_groups", c.dataset_groups);
    c.eval_every = j.value("eval_every", c.eval_every);
    c.val_groups = j.value("val_groups", c.val_groups);
    c.keep_best = j.value("keep_best", c.keep_best);
  } catch (const Json::exception& e) {
    throw InvalidArgument(std::string("train config: ") + e.what());
  }
  c.validate();
  return c;
}

CsvTable TrainHistory::to_csv() const {
  CsvTable t({"step", "loss", "lr", "validation"});
  std::size_t v = 0;
  for (std::size_t s = 0; s < loss.size(); ++s) {
    std::string val;
    // validation at step s is recorded after the update of step s
    if (v < validation.size() && validation[v].first == static_cast<long>(s)) val = format_double(validation[v++].second);
    t.add_row({std::to_string(s), format_double(loss[s]), format_double(lr[s]), val});
  }
  return t;
}

Mat dataset_targets(const DatasetNM& ds) {
  require(ds.n() >= 1, "empty dataset");
  Mat t(ds.records[0].y.size(), ds.n());
  for (long i = 0; i < ds.n(); ++i) t.col(i) = ds.records[i].y;
  return t;
}

std::vector<ObservationBatch> dataset_observations(const DatasetNM& ds) {
  std::vector<ObservationBatch> out;
  out.reserve(static_cast<std::size_t>(ds.n() * ds.m()));
  for (const auto& r : ds.records)
    for (const auto& o : r.observations) out.push_back(o);
  return out;
}

// ---------------------------------------------------------------------------
// SNR network

Vec snr_features(const ObservationBatch& x) {
  require(x.samples.size() >= 2, "snr_features: need at least two samples");
  const auto a = x.samples.reshaped().array();
  const double m2 = a.square().mean();
  if (!(m2 > 0) || !std::isfinite(m2)) throw InvalidArgument("snr_features: zero or non-finite second moment");
  const auto sq = a.square() / m2;
  const double m4 = sq.square().mean();
  const double m6 = (sq.square() * sq).mean();
  const double m6_23 = std::cbrt(m6 * m6);
  Vec f(kSnrFeatures);
  f << m4, m6, m4 * m4, m6_23, m4 / m6_23, std::log(m4);
  return f;
}

SnrNet::SnrNet(Mlp net, Vec feat_mean, Vec feat_scale, double out_center, double out_scale)
    : net_(std::move(net)),
      feat_mean_(std::move(feat_mean)),
      feat_scale_(std::move(feat_scale)),
      out_center_(out_center),
      out_scale_(out_scale) {
  require(net_.spec().input_dim() == kSnrFeatures && net_.spec().output_dim() == 1, "SnrNet: network must map 6 -> 1");
  require(feat_mean_.size() == kSnrFeatures && feat_scale_.size() == kSnrFeatures, "SnrNet: bad standardization");
  require((feat_scale_.array() > 0).all() && out_scale_ > 0, "SnrNet: scales must be positive");
}

SnrNet SnrNet::create(int hidden, const SnrModel& model, double snr_lo, double snr_hi, std::uint64_t seed) {
  model.validate();
  require(hidden >= 1, "SnrNet: hidden width must be positive");
  require(0 < snr_lo && snr_lo < snr_hi, "SnrNet: need 0 < snr_lo < snr_hi");
  constexpr long kPilot = 4000;
  SnrModel unit = model;
  unit.amplitude = 1.0;
  const auto feats = parallel_map<Vec>(kPilot, [&](std::size_t i) {
    Rng rng(Rng::derive(Rng::derive(seed, 1), i));
    const double y = rng.uniform(snr_lo, snr_hi);
    return snr_features(sample(unit, ParamVector::Constant(1, y), rng));
  });
  Vec mean = Vec::Zero(kSnrFeatures), sq = Vec::Zero(kSnrFeatures);
  for (const auto& f : feats) {
    mean += f;
    sq += f.cwiseAbs2();
  }
  mean /= kPilot;
  Vec scale = (sq / kPilot - mean.cwiseAbs2()).cwiseMax(1e-12).cwiseSqrt();
  auto net = Mlp::init(MlpSpec::uniform({kSnrFeatures, hidden, 1}, Activation::Tanh), Rng::derive(seed, 0));
  return SnrNet(std::move(net), mean, scale, 0.5 * (snr_lo + snr_hi), 0.5 * (snr_hi - snr_lo));
}

Mat SnrNet::inputs(std::span<const ObservationBatch> xs) const {
  Mat in(kSnrFeatures, static_cast<Eigen::Index>(xs.size()));
  for (std::size_t c = 0; c < xs.size(); ++c)
    in.col(static_cast<Eigen::Index>(c)) = (snr_features(xs[c]) - feat_mean_).cwiseQuotient(feat_scale_);
  return in;
}

Mat SnrNet::output(const Mat& inputs) const { return (out_scale_ * net_.forward(inputs)).array() + out_center_; }

Mat SnrNet::estimate(std::span<const ObservationBatch> xs) const {
  return output(inputs(xs)).cwiseMax(kSnrMin).cwiseMin(kSnrMax);
}

double SnrNet::loss_grad(const Mat& inputs, const Mat& targets, long m, double lambda, MseTerm term, Vec& grad) const {
  Tape tape;
  const Mat raw = net_.forward(inputs, tape);
  const Mat y = (out_scale_ * raw).array() + out_center_;
  const auto lg = bce_loss(y, targets, m, lambda, term);
  grad.setZero(net_.params().size());
  net_.backward(tape, out_scale_ * lg.grad, grad);
  return lg.loss;
}

void SnrNet::save(const std::filesystem::path& path, const Json& extra) const {
  Json e = extra;
  e["kind"] = "snr";
  e["feature_mean"] = vector_to_json(feat_mean_);
  e["feature_scale"] = vector_to_json(feat_scale_);
  e["output_center"] = out_center_;
  e["output_scale"] = out_scale_;
  save_mlp(path, net_, e);
}

SnrNet SnrNet::load(const std::filesystem::path& path) {
  auto l = load_mlp(path);
  if (l.extra.value("kind", std::string()) != "snr") throw IoError(path.string() + ": not an SNR network checkpoint");
  try {
    return SnrNet(std::move(l.net), vector_from_json(l.extra.at("feature_mean")),
                  vector_from_json(l.extra.at("feature_scale")), l.extra.at("output_center").get<double>(),
                  l.extra.at("output_scale").get<double>());
  } catch (const std::exception& e) {
    throw IoError(path.string() + ": bad SNR checkpoint: " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Covariance network

void CovNetSpec::validate() const {
  require(iterations >= 1, "CovNet: iterations must be >= 1");
  require(step > 0 && std::isfinite(step), "CovNet: step must be > 0");
  require(hidden >= 1 && state >= 0, "CovNet: bad widths");
}

Json CovNetSpec::to_json() const {
  return {{"input", input == Input::Sigma ? "sigma" : "residual"},
          {"iterations", iterations},
          {"step", step},
          {"hidden", hidden},
          {"state", state},
          {"activation", to_string(activation)}};
}

CovNetSpec CovNetSpec::from_json(const Json& j) {
  static const std::set<std::string> known{"input", "iterations", "step", "hidden", "state", "activation"};
  require(j.is_object(), "covnet spec must be an object");
  for (const auto& [k, v] : j.items()) require(known.count(k) > 0, "covnet spec: unknown key '" + k + "'");
  CovNetSpec s;
  try {
    const auto in = j.value("input", std::string("residual"));
    require(in == "sigma" || in == "residual", "covnet spec: input must be sigma or residual");
    s.input = in == "sigma" ? Input::Sigma : Input::Residual;
    s.iterations = j.value("iterations", s.iterations);
    s.step = j.value("step", s.step);
    s.hidden = j.value("hidden", s.hidden);
    s.state = j.value("state", s.state);
    s.activation = activation_from_string(j.value("activation", std::string("tanh")));
  } catch (const Json::exception& e) {
    throw InvalidArgument(std::string("covnet spec: ") + e.what());
  }
  s.validate();
  return s;
}

Vec cov_vech(const Mat& c) {
  require(c.rows() == kCovDim && c.cols() == kCovDim, "cov_vech: expected a 5x5 matrix");
  Vec v(kCovVech);
  int k = 0;
  for (int i = 0; i < kCovDim; ++i)
    for (int j = i; j < kCovDim; ++j) v[k++] = c(i, j);
  return v;
}

CovNet::CovNet(CovNetSpec spec, Mlp mlp) : spec_(spec), mlp_(std::move(mlp)) {
  spec_.validate();
  require(mlp_.spec().input_dim() == kCovVech + spec_.state && mlp_.spec().output_dim() == kCovParams + spec_.state,
          "CovNet: MLP widths do not match the network layout");
  pattern_.resize(kCovVech, kCovParams);
  for (int k = 0; k < kCovParams; ++k) pattern_.col(k) = cov_vech(cov_pattern(k));
  offset_ = cov_vech(Mat::Identity(kCovDim, kCovDim));
}

CovNet CovNet::init(const CovNetSpec& spec, std::uint64_t seed) {
  spec.validate();
  const MlpSpec m{{kCovVech + spec.state, spec.hidden, kCovParams + spec.state}, {spec.activation}};
  return CovNet(spec, Mlp::init(m, seed));
}

Mat CovNet::inputs(std::span<const ObservationBatch> xs) const {
  Mat in(kCovVech, static_cast<Eigen::Index>(xs.size()));
  for (std::size_t c = 0; c < xs.size(); ++c) {
    require(xs[c].dim() == kCovDim, "CovNet: observations must be 5-dimensional");
    in.col(static_cast<Eigen::Index>(c)) = cov_vech(sample_covariance(xs[c]));
  }
  return in;
}

Mat CovNet::run(const Mat& c0, Trace* trace) const {
  require(c0.rows() == kCovVech, "CovNet: input must be vech of a 5x5 covariance");
  const Eigen::Index b = c0.cols();
  const int s = spec_.state;
  Mat alpha = Mat::Constant(kCovParams, b, 0.5);
  Mat v = Mat::Zero(s, b);
  Mat u(kCovVech + s, b);
  if (trace) trace->tapes.resize(spec_.iterations);
  const bool residual = spec_.input == CovNetSpec::Input::Residual;
  for (int k = 0; k < spec_.iterations; ++k) {
    if (residual)
      u.topRows(kCovVech) = c0 - ((pattern_ * alpha).colwise() + offset_);
    else if (k == 0)
      u.topRows(kCovVech) = c0;
    else
      u.topRows(kCovVech) = (pattern_ * alpha).colwise() + offset_;
    u.bottomRows(s) = v;
    const Mat z = trace ? mlp_.forward(u, trace->tapes[k]) : mlp_.forward(u);
    alpha = (alpha + spec_.step * z.topRows(kCovParams)).cwiseMax(0.0).cwiseMin(1.0);
    v += spec_.step * z.bottomRows(s);
  }
  return alpha;
}

Mat CovNet::forward(const Mat& c0) const { return run(c0, nullptr); }

double CovNet::loss_grad(const Mat& inputs, const Mat& targets, long m, double lambda, MseTerm term, Vec& grad) const {
  Trace trace;
  const Mat alpha = run(inputs, &trace);
  const auto lg = bce_loss(alpha, targets, m, lambda, term);
  grad.setZero(mlp_.params().size());
  const int s = spec_.state;
  Mat g_alpha = lg.grad;  // straight-through clamp
  Mat g_v = Mat::Zero(s, alpha.cols());
  Mat d_out(kCovParams + s, alpha.cols()), d_in;
  for (int k = spec_.iterations - 1; k >= 0; --k) {
    d_out.topRows(kCovParams) = spec_.step * g_alpha;
    d_out.bottomRows(s) = spec_.step * g_v;
    mlp_.backward(trace.tapes[k], d_out, grad, k > 0 ? &d_in : nullptr);
    if (k == 0) break;
    if (spec_.input == CovNetSpec::Input::Residual)
      g_alpha.noalias() -= pattern_.transpose() * d_in.topRows(kCovVech);
    else
      g_alpha.noalias() += pattern_.transpose() * d_in.topRows(kCovVech);
    g_v += d_in.bottomRows(s);
  }
  return lg.loss;
}

void CovNet::save(const std::filesystem::path& path, const Json& extra) const {
  Json e = extra;
  e["kind"] = "covariance";
  e["covnet"] = spec_.to_json();
  save_mlp(path, mlp_, e);
}

CovNet CovNet::load(const std::filesystem::path& path) {
  auto l = load_mlp(path);
  if (l.extra.value("kind", std::string()) != "covariance")
    throw IoError(path.string() + ": not a covariance network checkpoint");
  try {
    return CovNet(CovNetSpec::from_json(l.extra.at("covnet")), std::move(l.net));
  } catch (const std::exception& e) {
    throw IoError(path.string() + ": bad covariance checkpoint: " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Linear network

LinearNet::LinearNet(Mlp net) : net_(std::move(net)) {
  require(net_.spec().layers() == 1, "LinearNet: expected a single affine layer");
}

LinearNet LinearNet::init(Eigen::Index n, Eigen::Index d, std::uint64_t seed) {
  return LinearNet(Mlp::init(MlpSpec{{static_cast<int>(n), static_cast<int>(d)}, {}}, seed));
}

Mat LinearNet::inputs(std::span<const ObservationBatch> xs) const {
  Mat in(net_.spec().input_dim(), static_cast<Eigen::Index>(xs.size()));
  for (std::size_t c = 0; c < xs.size(); ++c) {
    require(xs[c].count() == 1 && xs[c].dim() == in.rows(), "LinearNet: observation shape mismatch");
    in.col(static_cast<Eigen::Index>(c)) = xs[c].samples.col(0);
  }
  return in;
}

double LinearNet::loss_grad(const Mat& inputs, const Mat& targets, long m, double lambda, MseTerm term,
                            Vec& grad) const {
  Tape tape;
  const Mat y = net_.forward(inputs, tape);
  const auto lg = bce_loss(y, targets, m, lambda, term);
  grad.setZero(net_.params().size());
  net_.backward(tape, lg.grad, grad);
  return lg.loss;
}

// ---------------------------------------------------------------------------
// Generic loop

namespace {

template <class Net>
TrainHistory run_training(Net& net, Vec& params, const FictitiousPrior& prior, const StatModel& model,
                          const TrainConfig& cfg) {
  cfg.validate();
  require(prior.dim() == param_dim(model), "train: prior and model dimensions differ");
  auto schedule = LrSchedule::from_json(cfg.schedule);
  Adam adam(params.size(), cfg.adam);
  TrainHistory hist;
  hist.loss.reserve(static_cast<std::size_t>(cfg.steps));
  hist.lr.reserve(static_cast<std::size_t>(cfg.steps));

  const BatchStream stream(prior, model, cfg.groups, cfg.per_group, Rng::derive(cfg.seed, 1));
  Mat fixed_inputs, fixed_targets;
  if (cfg.data_mode == TrainConfig::DataMode::Fixed) {
    const auto ds = gen_dataset(prior, model, cfg.dataset_groups, cfg.per_group, Rng::derive(cfg.seed, 2));
    const auto obs = dataset_observations(ds);
    fixed_inputs = net.inputs(obs);
    fixed_targets = dataset_targets(ds);
  }
  Mat val_inputs, val_targets;
  if (cfg.val_groups > 0) {
    const auto ds = gen_dataset(prior, model, cfg.val_groups, cfg.per_group, Rng::derive(cfg.seed, 3));
    const auto obs = dataset_observations(ds);
    val_inputs = net.inputs(obs);
    val_targets = dataset_targets(ds);
  }

  Vec grad, best = params;
  double best_val = std::numeric_limits<double>::infinity();
  for (long step = 0; step < cfg.steps; ++step) {
    double loss;
    if (cfg.data_mode == TrainConfig::DataMode::Fresh) {
      const auto ds = stream.batch(step);
      const auto obs = dataset_observations(ds);
      loss = net.loss_grad(net.inputs(obs), dataset_targets(ds), cfg.per_group, cfg.lambda, cfg.mse_term, grad);
    } else {
      const long blocks = cfg.dataset_groups / cfg.groups;
      const long blk = step % blocks;
      loss = net.loss_grad(fixed_inputs.middleCols(blk * cfg.groups * cfg.per_group, cfg.groups * cfg.per_group),
                           fixed_targets.middleCols(blk * cfg.groups, cfg.groups), cfg.per_group, cfg.lambda,
                           cfg.mse_term, grad);
    }
    if (!std::isfinite(loss) || !all_finite(grad))
      throw NumericalError("training diverged at step " + std::to_string(step) + " (loss " + format_double(loss) + ")");
    const double lr = schedule.lr(step);
    adam.step(params, grad, lr);
    hist.loss.push_back(loss);
    hist.lr.push_back(lr);

    if (cfg.val_groups > 0 && ((step + 1) % cfg.eval_every == 0 || step + 1 == cfg.steps)) {
      Vec scratch;
      const double val = net.loss_grad(val_inputs, val_targets, cfg.per_group, cfg.lambda, cfg.mse_term, scratch);
      if (!std::isfinite(val)) throw NumericalError("validation loss is not finite at step " + std::to_string(step));
      hist.validation.emplace_back(step, val);
      schedule.observe(val);
      if (val < best_val) {
        best_val = val;
        best = params;
        hist.best_step = step;
      }
    }
  }
  if (cfg.val_groups > 0 && cfg.keep_best && hist.best_step >= 0) params = best;
  return hist;
}

}  // namespace

TrainHistory train(SnrNet& net, const FictitiousPrior& prior, const SnrModel& model, const TrainConfig& cfg) {
  return run_training(net, net.net().params(), prior, StatModel(model), cfg);
}

TrainHistory train(CovNet& net, const FictitiousPrior& prior, const StructuredCovModel& model, const TrainConfig& cfg) {
  return run_training(net, net.mlp().params(), prior, StatModel(model), cfg);
}

TrainHistory train(LinearNet& net, const FictitiousPrior& prior, const LinearGaussianModel& model,
                   const TrainConfig& cfg) {
  require(net.net().spec().input_dim() == model.h().rows() && net.net().spec().output_dim() == model.h().cols(),
          "train: linear net does not match the model");
  return run_training(net, net.net().params(), prior, StatModel(model), cfg);
}

}  // namespace bce
