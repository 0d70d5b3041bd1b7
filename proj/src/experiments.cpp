#include "bce/experiments.hpp"

#include <cmath>
#include <set>

namespace bce {

namespace {


Json train_json(double lambda, long steps, long groups, long per_group, double lr, std::vector<long> milestones) {
  TrainConfig c;
  c.lambda = lambda;
  c.steps = steps;
  c.groups = groups;
  c.per_group = per_group;
  c.schedule = {{"kind", "multistep"}, {"lr", lr}, {"milestones", milestones}, {"factor", 0.1}};
  Json j = c.to_json();
  j.erase("seed");  // derived from the experiment seed
  return j;
}

TrainConfig train_from(const Json& j, std::uint64_t seed) {
  Json copy = j;
  copy["seed"] = seed;
  return TrainConfig::from_json(copy);
}

Json snr_prior_json() { return {{"amp_lo", 1.0}, {"amp_hi", 10.0}, {"snr_lo", 1.0}, {"snr_hi", 60.0}}; }

FictitiousPrior snr_prior_from(const Json& j) {
  return FictitiousPrior::snr_composite(j.at("amp_lo").get<double>(), j.at("amp_hi").get<double>(),
                                        j.at("snr_lo").get<double>(), j.at("snr_hi").get<double>());
}

using KeySet = std::set<std::string>;

void check_keys(const Json& user, const Json& defaults, const std::string& path, const KeySet& free_form) {
  for (const auto& [k, v] : user.items()) {
    const std::string where = path.empty() ? k : path + "." + k;
    if (!defaults.contains(k)) throw InvalidArgument("config: unknown key '" + where + "'");
    const auto& d = defaults.at(k);
    if (v.is_object() && d.is_object() && free_form.count(k) == 0) check_keys(v, d, where, free_form);
  }
}

// Objects under free-form keys are replaced wholesale.
void overlay(Json& base, const Json& user, const KeySet& free_form) {
  for (const auto& [k, v] : user.items()) {
    if (v.is_object() && base.contains(k) && base[k].is_object() && free_form.count(k) == 0)
      overlay(base[k], v, free_form);
    else
      base[k] = v;
  }
}

template <class T>
T get(const Json& j, const char* key) {
  try {
    return j.at(key).get<T>();
  } catch (const Json::exception& e) {
    throw InvalidArgument(std::string("config key '") + key + "': " + e.what());
  }
}

struct Writer {
  std::filesystem::path dir;
  std::vector<std::string> files;

  void csv(const std::string& name, const CsvTable& t) {
    t.write(dir / name);
    files.push_back(name);
  }
  void json(const std::string& name, const Json& j) {
    write_text(dir / name, j.dump(2) + "\n");
    files.push_back(name);
  }
  template <class Net>
  void checkpoint(const std::string& name, const Net& net, const Json& extra) {
    net.save(dir / name, extra);
    files.push_back(name);
  }
};

Json history_summary(const TrainHistory& h) {
  Json j{{"steps", h.loss.size()}};
  if (!h.loss.empty()) {
    const std::size_t tail = std::min<std::size_t>(500, h.loss.size());
    double s = 0;
    for (std::size_t i = h.loss.size() - tail; i < h.loss.size(); ++i) s += h.loss[i];
    j["tail_loss"] = s / static_cast<double>(tail);
  }
  return j;
}

// ---------------------------------------------------------------------------
// SNR

Json snr_defaults() {
  return {{"experiment", "snr"},
          {"seed", 1},
          {"model", {{"p", 50}}},
          {"prior", snr_prior_json()},
          {"hidden", 64},
          {"emmse", train_json(0, 20000, 10, 100, 1e-3, {10000, 15000})},
          {"bce", train_json(1000, 40000, 10, 100, 1e-3, {20000, 30000})},
          {"warm_start", true},
          {"grid", {2.0, 5.0, 10.0, 20.0, 35.0, 50.0}},
          {"reps", 10000},
          {"crb_reps", 100000},
          {"mle", true}};
}

struct SnrNets {
  SnrNet emmse, bce;
  TrainHistory emmse_hist, bce_hist;
};

SnrNets train_snr_nets(const Json& cfg, std::uint64_t seed) {
  const SnrModel model{get<int>(cfg.at("model"), "p"), 1.0};
  const Json& pj = cfg.at("prior");
  const auto prior = snr_prior_from(pj);
  const int hidden = get<int>(cfg, "hidden");
  const double lo = get<double>(pj, "snr_lo"), hi = get<double>(pj, "snr_hi");
  auto emmse = SnrNet::create(hidden, model, lo, hi, Rng::derive(seed, 0));
  auto bce = emmse;
  const auto he = train(emmse, prior, model, train_from(cfg.at("emmse"), Rng::derive(seed, 1)));
  if (get<bool>(cfg, "warm_start")) bce = emmse;
  const auto hb = train(bce, prior, model, train_from(cfg.at("bce"), Rng::derive(seed, 2)));
  return {std::move(emmse), std::move(bce), he, hb};
}

ExperimentResult run_snr(const Json& cfg, Writer& w) {
  const std::uint64_t seed = get<std::uint64_t>(cfg, "seed");
  const SnrModel model{get<int>(cfg.at("model"), "p"), 1.0};
  model.validate();
  const auto grid = get<std::vector<double>>(cfg, "grid");
  const long reps = get<long>(cfg, "reps"), crb_reps = get<long>(cfg, "crb_reps");
  require(!grid.empty(), "snr: empty grid");
  for (double y : grid) require(y > 0, "snr: grid values must be positive");

  auto nets = train_snr_nets(cfg, seed);
  const Json extra{{"experiment", "snr"}, {"seed", seed}};
  w.checkpoint("emmse.ckpt", nets.emmse, extra);
  w.checkpoint("bce.ckpt", nets.bce, extra);
  w.csv("emmse_history.csv", nets.emmse_hist.to_csv());
  w.csv("bce_history.csv", nets.bce_hist.to_csv());

  std::vector<double> crb(grid.size()), crb_se(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    Rng rng(Rng::derive(Rng::derive(seed, 4), i));
    const auto f = snr_fim_mc(model, model.amplitude, model.amplitude * model.amplitude / grid[i], crb_reps, rng);
    crb[i] = f.crb;
    crb_se[i] = f.crb_stderr;
  }
  {
    CsvTable t({"snr", "snr_db", "crb", "crb_stderr"});
    for (std::size_t i = 0; i < grid.size(); ++i)
      t.add_row(std::vector<double>{grid[i], 10.0 * std::log10(grid[i]), crb[i], crb_se[i]});
    w.csv("crb.csv", t);
  }

  std::vector<Estimator> ests;
  if (get<bool>(cfg, "mle")) ests.push_back(snr_mle_estimator(model));
  ests.push_back(make_estimator("emmse", std::make_shared<const SnrNet>(nets.emmse)));
  ests.push_back(make_estimator("bce", std::make_shared<const SnrNet>(nets.bce)));

  Json summary{{"grid", grid}, {"crb", crb}, {"crb_stderr", crb_se}, {"estimators", Json::object()}};
  summary["training"] = {{"emmse", history_summary(nets.emmse_hist)}, {"bce", history_summary(nets.bce_hist)}};
  for (const auto& est : ests) {
    std::vector<MetricsRecord> recs;
    std::vector<double> db, mse_y2, ratio, inv, inv_se, bias, bias_se, mse;
    for (std::size_t i = 0; i < grid.size(); ++i) {
      const ParamVector y = ParamVector::Constant(1, grid[i]);
      // every estimator sees the same observations
      const Mat e = collect_estimates(est, model, y, reps, Rng::derive(Rng::derive(seed, 3), i));
      auto m = metrics_from_estimates(e, y);
      m.crb = crb[i];
      m.crb_stderr = crb_se[i];
      const auto is = inverse_snr_mse(e, grid[i]);
      db.push_back(10.0 * std::log10(grid[i]));
      mse_y2.push_back(m.mse / (grid[i] * grid[i]));
      ratio.push_back(m.mse / crb[i]);
      inv.push_back(is.mean);
      inv_se.push_back(is.stderr_);
      bias.push_back(m.bias[0]);
      bias_se.push_back(m.bias_stderr[0]);
      mse.push_back(m.mse);
      recs.push_back(std::move(m));
    }
    w.csv("metrics_" + est.name + ".csv",
          metrics_csv(recs, {{"snr_db", db}, {"mse_over_y2", mse_y2}, {"mse_over_crb", ratio}, {"inv_mse", inv},
                             {"inv_mse_stderr", inv_se}}));
    summary["estimators"][est.name] = {{"bias", bias},       {"bias_stderr", bias_se}, {"mse", mse},
                                       {"mse_over_crb", ratio}, {"inv_mse", inv},      {"inv_mse_stderr", inv_se}};
  }
  return {summary, {}};
}

// ---------------------------------------------------------------------------
// Covariance

Json cov_defaults() {
  CovNetSpec spec;
  spec.hidden = 64;
  return {{"experiment", "covariance"},
          {"seed", 1},
          {"model", {{"p_samples", 200}, {"compress", true}}},
          {"net", spec.to_json()},
          {"emmse", train_json(0, 6000, 10, 50, 1e-3, {3000, 4500})},
          {"bce", train_json(1000, 4000, 10, 50, 1e-4, {2000, 3000})},
          {"warm_start", true},
          {"test_upper", {1.0, 0.4}},
          {"points", 200},
          {"reps", 1000},
          {"baseline_reps", 10000}};
}

std::string upper_tag(double hi) {
  std::string s = format_double(hi);
  for (auto& c : s)
    if (c == '.') c = 'p';
  return "u" + s;
}

ExperimentResult run_covariance(const Json& cfg, Writer& w) {
  const std::uint64_t seed = get<std::uint64_t>(cfg, "seed");
  StructuredCovModel model{get<int>(cfg.at("model"), "p_samples"), get<bool>(cfg.at("model"), "compress")};
  model.validate();
  const auto spec = CovNetSpec::from_json(cfg.at("net"));
  const auto uppers = get<std::vector<double>>(cfg, "test_upper");
  const long points = get<long>(cfg, "points"), reps = get<long>(cfg, "reps");
  const long base_reps = get<long>(cfg, "baseline_reps");
  for (double hi : uppers) require(hi > 0 && hi <= 1, "covariance: test priors must be U(0, hi) with 0 < hi <= 1");

  const auto prior = FictitiousPrior::uniform(kCovParams, 0.0, 1.0);
  auto emmse = CovNet::init(spec, Rng::derive(seed, 0));
  auto bce = emmse;
  const auto he = train(emmse, prior, model, train_from(cfg.at("emmse"), Rng::derive(seed, 1)));
  if (get<bool>(cfg, "warm_start")) bce = emmse;
  const auto hb = train(bce, prior, model, train_from(cfg.at("bce"), Rng::derive(seed, 2)));
  const Json extra{{"experiment", "covariance"}, {"seed", seed}};
  w.checkpoint("emmse.ckpt", emmse, extra);
  w.checkpoint("bce.ckpt", bce, extra);
  w.csv("emmse_history.csv", he.to_csv());
  w.csv("bce_history.csv", hb.to_csv());

  const std::vector<Estimator> ests{make_estimator("emmse", std::make_shared<const CovNet>(emmse)),
                                    make_estimator("bce", std::make_shared<const CovNet>(bce))};
  Json summary{{"test_upper", uppers}, {"ratios", Json::object()}, {"degradation", Json::object()}};
  summary["training"] = {{"emmse", history_summary(he)}, {"bce", history_summary(hb)}};
  for (const auto& est : ests) {
    std::vector<double> ratios;
    for (std::size_t j = 0; j < uppers.size(); ++j) {
      // same test points and observations for both networks
      const auto pts = crb_scatter(est, model, FictitiousPrior::uniform(kCovParams, 0.0, uppers[j]), points, reps,
                                   Rng::derive(Rng::derive(seed, 3), j));
      w.csv("scatter_" + est.name + "_" + upper_tag(uppers[j]) + ".csv", scatter_csv(pts));
      ratios.push_back(mean_crb_ratio(pts));
    }
    summary["ratios"][est.name] = ratios;
    if (ratios.size() >= 2) summary["degradation"][est.name] = ratios[1] / ratios[0] - 1.0;
  }

  // the networks against the raw projection of the sample covariance
  const ParamVector mid = ParamVector::Constant(kCovParams, 0.5);
  Json base = Json::object();
  std::vector<MetricsRecord> recs;
  const std::vector<Estimator> all{cov_projection_estimator(), ests[0], ests[1]};
  for (const auto& est : all) {
    auto m = eval_point(est, model, mid, base_reps, Rng::derive(seed, 5));
    m.crb = analytic_crb(model, mid);
    base[est.name] = {{"mse", m.mse}, {"mse_stderr", m.mse_stderr}, {"bias_norm", m.bias.norm()}};
    recs.push_back(std::move(m));
  }
  {
    std::vector<double> idx{0, 1, 2};
    w.csv("midpoint.csv", metrics_csv(recs, {{"estimator_index", idx}}));
  }
  base["crb"] = analytic_crb(model, mid);
  summary["midpoint"] = base;
  return {summary, {}};
}

// ---------------------------------------------------------------------------
// Regularization

Json linreg_defaults() {
  RegularizationConfig c;
  Json j{{"experiment", "linear-reg"}, {"seed", 1}};
  j["n"] = c.n;
  j["d"] = c.d;
  j["h"] = nullptr;
  j["sigma_n"] = nullptr;
  j["sigma_y"] = nullptr;
  j["matrix_seed"] = c.matrix_seed;
  j["n_list"] = c.n_list;
  j["trials"] = c.trials;
  j["bce_grid"] = {{"lo", 0.0}, {"hi", 10.0}, {"count", 100}};
  j["ridge_grid"] = {{"lo", -0.012}, {"hi", 0.002}, {"count", 100}};
  j["validation_pairs"] = c.validation_pairs;
  j["jitter"] = c.jitter;
  return j;
}

ExperimentResult run_linreg(const Json& cfg, Writer& w) {
  Json rc = cfg;
  rc.erase("experiment");
  rc.erase("seed");
  const auto res = regularization_experiment(RegularizationConfig::from_json(rc), get<std::uint64_t>(cfg, "seed"));
  w.csv("trials.csv", res.trials_csv());
  w.csv("summary.csv", res.summary_csv());
  Json rows = Json::array();
  for (const auto& s : res.summary) {
    const double sep = (s.emmse.mean - s.bce.mean) / std::hypot(s.emmse.stderr_, s.bce.stderr_);
    rows.push_back({{"n", s.n},
                    {"emmse", s.emmse.mean},
                    {"emmse_stderr", s.emmse.stderr_},
                    {"ridge", s.ridge.mean},
                    {"ridge_stderr", s.ridge.stderr_},
                    {"bce", s.bce.mean},
                    {"bce_stderr", s.bce.stderr_},
                    {"bce_gain_in_stderr", sep},
                    {"ridge_negative_fraction", s.ridge_negative_fraction},
                    {"mean_ridge_lambda", s.mean_ridge_lambda},
                    {"mean_bce_lambda", s.mean_bce_lambda},
                    {"oracle_lmmse", s.oracle_lmmse}});
  }
  return {{{"summary", rows}}, {}};
}

// ---------------------------------------------------------------------------
// Averaging

Json averaging_defaults() {
  return {{"experiment", "averaging"},
          {"seed", 1},
          {"checkpoint", ""},
          {"model", {{"p", 50}}},
          {"prior", snr_prior_json()},
          {"hidden", 64},
          {"emmse", train_json(0, 5000, 10, 100, 1e-3, {5000})},
          {"bce", train_json(1000, 15000, 10, 100, 1e-3, {7500, 11250})},
          {"warm_start", true},
          {"y", 10.0},
          {"mt", {1, 4, 16, 64, 256}},
          {"reps", 2000},
          {"control", {{"offset", 0.5}, {"y", 1.0}, {"noise_var", 1.0}}}};
}

ExperimentResult run_averaging(const Json& cfg, Writer& w) {
  const std::uint64_t seed = get<std::uint64_t>(cfg, "seed");
  const SnrModel model{get<int>(cfg.at("model"), "p"), 1.0};
  const auto mts = get<std::vector<long>>(cfg, "mt");
  const long reps = get<long>(cfg, "reps");
  const double y = get<double>(cfg, "y");

  const auto ckpt = get<std::string>(cfg, "checkpoint");
  std::shared_ptr<const SnrNet> net;
  Json summary = Json::object();
  if (!ckpt.empty()) {
    net = std::make_shared<const SnrNet>(SnrNet::load(ckpt));
  } else {
    auto nets = train_snr_nets(cfg, seed);
    w.checkpoint("bce.ckpt", nets.bce, {{"experiment", "averaging"}, {"seed", seed}});
    w.csv("bce_history.csv", nets.bce_hist.to_csv());
    summary["training"] = {{"emmse", history_summary(nets.emmse_hist)}, {"bce", history_summary(nets.bce_hist)}};
    net = std::make_shared<const SnrNet>(std::move(nets.bce));
  }
  const auto curve =
      averaging_eval(make_estimator("bce", net), model, ParamVector::Constant(1, y), mts, reps, Rng::derive(seed, 3));
  w.csv("averaging_bce.csv", curve.to_csv());

  const Json& cj = cfg.at("control");
  const double off = get<double>(cj, "offset"), cy = get<double>(cj, "y"), nv = get<double>(cj, "noise_var");
  require(nv > 0, "averaging: control noise variance must be positive");
  const LinearGaussianModel lin(Mat::Identity(1, 1), Mat::Constant(1, 1, nv));
  const auto control = offset_estimator(make_estimator("wls", wls(lin.h(), lin.sigma_n())), off);
  const auto ccurve = averaging_eval(control, lin, ParamVector::Constant(1, cy), mts, reps, Rng::derive(seed, 4));
  w.csv("averaging_control.csv", ccurve.to_csv());

  auto curve_json = [](const AveragingCurve& c) {
    Json rows = Json::array();
    for (const auto& r : c.rows)
      rows.push_back({{"mt", r.mt},
                      {"mse", r.mse},
                      {"mse_stderr", r.mse_stderr},
                      {"bias_norm", r.bias_norm},
                      {"variance", r.variance}});
    return Json{{"variance_slope", c.variance_slope()}, {"rows", rows}};
  };
  summary["bce"] = curve_json(curve);
  summary["control"] = curve_json(ccurve);
  summary["control"]["plateau_target"] = off * off;
  return {summary, {}};
}

// ---------------------------------------------------------------------------
// Linear sanity

Json linsanity_defaults() {
  return {{"experiment", "linear-sanity"},
          {"seed", 1},
          {"n", 20},
          {"d", 20},
          {"singular_lo", 0.5},
          {"singular_hi", 2.0},
          {"noise_var", 1.0},
          {"emmse", train_json(0, 6000, 100, 10, 3e-3, {3000, 4500})},
          {"bce", train_json(1000, 2000, 10, 1000, 1e-2, {1000, 1500})}};
}

ExperimentResult run_linsanity(const Json& cfg, Writer& w) {
  const std::uint64_t seed = get<std::uint64_t>(cfg, "seed");
  const int n = get<int>(cfg, "n"), d = get<int>(cfg, "d");
  require(n >= d && d >= 1, "linear-sanity: need n >= d >= 1");
  const double nv = get<double>(cfg, "noise_var");
  require(nv > 0, "linear-sanity: noise variance must be positive");
  Rng rng(Rng::derive(seed, 0));
  const Mat h = well_conditioned_matrix(rng, n, d, get<double>(cfg, "singular_lo"), get<double>(cfg, "singular_hi"));
  const LinearGaussianModel model(h, nv * Mat::Identity(n, n));
  const Mat sy = Mat::Identity(d, d);
  const auto prior = FictitiousPrior::gaussian(Vec::Zero(d), sy);

  CsvTable t({"run", "lambda", "rel_error", "bias_norm", "steps"});
  Json summary = Json::object();
  int idx = 1;
  for (const char* name : {"emmse", "bce"}) {
    const auto tc = train_from(cfg.at(name), Rng::derive(seed, static_cast<std::uint64_t>(idx) + 1));
    auto net = LinearNet::init(n, d, Rng::derive(seed, static_cast<std::uint64_t>(idx) + 10));
    const auto hist = train(net, prior, model, tc);
    const Mat target =
        tc.lambda == 0 ? lmmse(h, model.sigma_n(), sy).a : lbce_model_form(h, model.sigma_n(), sy, tc.lambda).a;
    const double rel = (net.a() - target).norm() / target.norm();
    t.add_row({name, format_double(tc.lambda), format_double(rel), format_double(net.b().norm()),
               std::to_string(tc.steps)});
    w.csv(std::string(name) + "_history.csv", hist.to_csv());
    summary[name] = {{"lambda", tc.lambda}, {"rel_error", rel}, {"bias_norm", net.b().norm()}};
    ++idx;
  }
  w.csv("linear_sanity.csv", t);
  return {summary, {}};
}

}  // namespace

// ---------------------------------------------------------------------------

std::vector<std::string> experiment_kinds() { return {"snr", "covariance", "linear-reg", "averaging", "linear-sanity"}; }

Json default_experiment_config(const std::string& kind) {
  if (kind == "snr") return snr_defaults();
  if (kind == "covariance") return cov_defaults();
  if (kind == "linear-reg") return linreg_defaults();
  if (kind == "averaging") return averaging_defaults();
  if (kind == "linear-sanity") return linsanity_defaults();
  throw InvalidArgument("unknown experiment '" + kind + "'");
}

Json resolve_experiment_config(const Json& user) {
  require(user.is_object(), "config must be a JSON object");
  require(user.contains("experiment") && user.at("experiment").is_string(), "config needs an \"experiment\" name");
  return merge_config(default_experiment_config(user.at("experiment").get<std::string>()), user);
}

Json merge_config(const Json& defaults, const Json& user, const std::vector<std::string>& free_form) {
  require(user.is_object(), "config must be a JSON object");
  const KeySet ff(free_form.begin(), free_form.end());
  check_keys(user, defaults, "", ff);
  Json eff = defaults;
  overlay(eff, user, ff);
  return eff;
}

ExperimentResult run_experiment(const Json& config, const std::filesystem::path& out_dir) {
  const Json cfg = resolve_experiment_config(config);
  try {
    std::filesystem::create_directories(out_dir);
  } catch (const std::filesystem::filesystem_error& e) {
    throw IoError("cannot create output directory " + out_dir.string() + ": " + e.what());
  }
  Writer w{out_dir, {}};
  w.json("effective_config.json", cfg);
  const auto kind = cfg.at("experiment").get<std::string>();
  ExperimentResult r;
  if (kind == "snr")
    r = run_snr(cfg, w);
  else if (kind == "covariance")
    r = run_covariance(cfg, w);
  else if (kind == "linear-reg")
    r = run_linreg(cfg, w);
  else if (kind == "averaging")
    r = run_averaging(cfg, w);
  else
    r = run_linsanity(cfg, w);
  r.summary["experiment"] = kind;
  r.summary["seed"] = cfg.at("seed");
  w.json("summary.json", r.summary);
  r.artifacts = w.files;
  return r;
}

Estimator cov_projection_estimator() {
  Mat p(kCovVech, kCovParams);
  for (int k = 0; k < kCovParams; ++k) p.col(k) = cov_vech(cov_pattern(k));
  const Vec offset = cov_vech(Mat::Identity(kCovDim, kCovDim));
  const Mat pinv = p.colPivHouseholderQr().solve(Mat::Identity(kCovVech, kCovVech));
  return {"projection", kCovParams, [pinv, offset](std::span<const ObservationBatch> xs) {
            Mat out(kCovParams, static_cast<Eigen::Index>(xs.size()));
            for (std::size_t c = 0; c < xs.size(); ++c)
              out.col(static_cast<Eigen::Index>(c)) =
                  (pinv * (cov_vech(sample_covariance(xs[c])) - offset)).cwiseMax(0.0).cwiseMin(1.0);
            return out;
          }};
}

Mat well_conditioned_matrix(Rng& rng, int n, int d, double lo, double hi) {
  require(n >= 1 && d >= 1, "well_conditioned_matrix: dimensions must be positive");
  require(0 < lo && lo <= hi, "well_conditioned_matrix: need 0 < lo <= hi");
  const Eigen::JacobiSVD<Mat> svd(rng.normal_matrix(n, d), Eigen::ComputeThinU | Eigen::ComputeThinV);
  Vec s(svd.singularValues().size());
  for (Eigen::Index i = 0; i < s.size(); ++i) s[i] = rng.uniform(lo, hi);
  return svd.matrixU() * s.asDiagonal() * svd.matrixV().transpose();
}

Json parse_json_with_comments(const std::string& text) {
  try {
    return Json::parse(text, nullptr, true, /*ignore_comments=*/true);
  } catch (const Json::parse_error& e) {
    throw InvalidArgument(std::string("config is not valid JSON: ") + e.what());
  }
}

void apply_override(Json& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  require(eq != std::string::npos && eq > 0, "override must look like key.path=value: '" + assignment + "'");
  const std::string path = assignment.substr(0, eq), raw = assignment.substr(eq + 1);
  Json value;
  try {
    value = Json::parse(raw);
  } catch (const Json::parse_error&) {
    value = raw;
  }
  Json* node = &config;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    require(!key.empty(), "override has an empty key: '" + assignment + "'");
    if (!node->is_object()) *node = Json::object();
    if (dot == std::string::npos) {
      (*node)[key] = value;
      return;
    }
    node = &(*node)[key];
    start = dot + 1;
  }
}

}  // namespace bce
