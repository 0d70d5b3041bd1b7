// Command-line driver: data generation, training, evaluation, the end-to-end
// experiments and a gradient check.
//
// Exit codes: 0 success, 1 grad-check above tolerance, 2 bad arguments or
// config, 3 numerical failure, 4 I/O failure.

#include "bce/experiments.hpp"

#include "CLI11.hpp"

#include <cstdio>
#include <iostream>

using namespace bce;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  int threads = 0;
  std::string out = "out";
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "JSON config (comments allowed)");
  cmd->add_option("--seed", c.seed, "Top-level seed (overrides the config)");
  cmd->add_option("--threads", c.threads, "Worker thread cap (0 = all cores)")->check(CLI::NonNegativeNumber);
  cmd->add_option("--out", c.out, "Output directory");
  cmd->add_option("--set", c.overrides, "Override a config key: a.b.c=value (repeatable)");
}

// Reads --config, applies --set and --seed, and merges onto the defaults.
Json load_config(const Common& c, Json defaults, const std::vector<std::string>& free_form) {
  Json user = Json::object();
  if (!c.config.empty()) user = parse_json_with_comments(read_text(c.config));
  require(user.is_object(), "config must be a JSON object");
  for (const auto& o : c.overrides) apply_override(user, o);
  if (c.seed) user["seed"] = *c.seed;
  return merge_config(defaults, user, free_form);
}

std::filesystem::path prepare_out(const std::string& out) {
  try {
    std::filesystem::create_directories(out);
  } catch (const std::filesystem::filesystem_error& e) {
    throw IoError("cannot create output directory " + out + ": " + e.what());
  }
  return out;
}

void write_json(const std::filesystem::path& p, const Json& j) { write_text(p, j.dump(2) + "\n"); }

// ---------------------------------------------------------------------------
// gen

Json gen_defaults() {
  return {{"seed", 1},
          {"model", {{"kind", "snr"}, {"p", 50}}},
          {"prior", {{"kind", "snr"}, {"amplitude", {1.0, 10.0}}, {"snr", {1.0, 60.0}}}},
          {"groups", 1000},
          {"per_group", 100}};
}

int cmd_gen(const Common& c) {
  const Json cfg = load_config(c, gen_defaults(), {"model", "prior"});
  const auto out = prepare_out(c.out);
  const auto model = model_from_json(cfg.at("model"));
  const auto prior = FictitiousPrior::from_json(cfg.at("prior"));
  const auto seed = cfg.at("seed").get<std::uint64_t>();
  const auto ds = gen_dataset(prior, model, cfg.at("groups").get<long>(), cfg.at("per_group").get<long>(), seed);
  write_json(out / "effective_config.json", cfg);
  save_dataset(out / "dataset.bin", ds, prior, model, seed);
  std::cout << "wrote " << ds.n() << " x " << ds.m() << " observations to " << (out / "dataset.bin").string() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// train

Json train_defaults() {
  Json t = TrainConfig{}.to_json();
  t.erase("seed");
  return {{"problem", "snr"},
          {"seed", 1},
          {"model", {{"kind", "snr"}, {"p", 50}}},
          {"prior", {{"kind", "snr"}, {"amplitude", {1.0, 10.0}}, {"snr", {1.0, 60.0}}}},
          {"net", {{"hidden", 64}}},
          {"init", ""},
          {"train", t}};
}

int cmd_train(const Common& c) {
  const Json cfg = load_config(c, train_defaults(), {"model", "prior", "net", "schedule"});
  const auto out = prepare_out(c.out);
  const auto problem = cfg.at("problem").get<std::string>();
  const auto seed = cfg.at("seed").get<std::uint64_t>();
  const auto model = model_from_json(cfg.at("model"));
  const auto prior = FictitiousPrior::from_json(cfg.at("prior"));
  Json tj = cfg.at("train");
  tj["seed"] = Rng::derive(seed, 1);
  const auto tc = TrainConfig::from_json(tj);
  const auto init = cfg.at("init").get<std::string>();
  const Json extra{{"problem", problem}, {"seed", seed}, {"train", tc.to_json()}};
  write_json(out / "effective_config.json", cfg);

  TrainHistory hist;
  if (problem == "snr") {
    const auto* m = std::get_if<SnrModel>(&model);
    require(m != nullptr, "train: problem snr needs an snr model");
    const auto range = cfg.at("prior").at("snr").get<std::vector<double>>();
    require(range.size() == 2, "train: prior.snr must be [lo, hi]");
    auto net = init.empty() ? SnrNet::create(cfg.at("net").at("hidden").get<int>(), *m, range[0], range[1],
                                             Rng::derive(seed, 0))
                            : SnrNet::load(init);
    hist = train(net, prior, *m, tc);
    net.save(out / "model.ckpt", extra);
  } else if (problem == "covariance") {
    const auto* m = std::get_if<StructuredCovModel>(&model);
    require(m != nullptr, "train: problem covariance needs a covariance model");
    auto net = init.empty() ? CovNet::init(CovNetSpec::from_json(cfg.at("net")), Rng::derive(seed, 0)) : CovNet::load(init);
    hist = train(net, prior, *m, tc);
    net.save(out / "model.ckpt", extra);
  } else if (problem == "linear") {
    const auto* m = std::get_if<LinearGaussianModel>(&model);
    require(m != nullptr, "train: problem linear needs a linear model");
    auto net = init.empty() ? LinearNet::init(m->obs_dim(), m->param_dim(), Rng::derive(seed, 0))
                            : LinearNet(load_mlp(init).net);
    hist = train(net, prior, *m, tc);
    Json e = extra;
    e["kind"] = "linear";
    save_mlp(out / "model.ckpt", net.net(), e);
  } else {
    throw InvalidArgument("train: unknown problem '" + problem + "' (snr, covariance, linear)");
  }
  hist.to_csv().write(out / "history.csv");
  std::cout << "trained " << problem << " for " << hist.loss.size() << " steps";
  if (!hist.loss.empty()) std::cout << ", final loss " << format_double(hist.loss.back());
  std::cout << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// eval

Json eval_defaults() {
  return {{"seed", 1},
          {"model", {{"kind", "snr"}, {"p", 50}}},
          {"estimator", "checkpoint"},
          {"checkpoint", ""},
          {"grid", {2.0, 5.0, 10.0, 20.0, 35.0, 50.0}},
          {"reps", 10000}};
}

Estimator estimator_from(const Json& cfg, const StatModel& model) {
  const auto kind = cfg.at("estimator").get<std::string>();
  if (kind == "mle") {
    const auto* m = std::get_if<SnrModel>(&model);
    require(m != nullptr, "eval: the mle estimator needs an snr model");
    return snr_mle_estimator(*m);
  }
  if (kind == "wls" || kind == "projection") {
    if (kind == "projection") {
      require(std::holds_alternative<StructuredCovModel>(model), "eval: projection needs a covariance model");
      return cov_projection_estimator();
    }
    const auto* m = std::get_if<LinearGaussianModel>(&model);
    require(m != nullptr, "eval: the wls estimator needs a linear model");
    return make_estimator("wls", wls(m->h(), m->sigma_n()));
  }
  require(kind == "checkpoint", "eval: estimator must be checkpoint, mle, wls or projection");
  const auto path = cfg.at("checkpoint").get<std::string>();
  require(!path.empty(), "eval: checkpoint path is empty");
  const auto loaded = load_mlp(path);
  const auto ck = loaded.extra.value("kind", std::string());
  if (ck == "snr") return make_estimator("net", std::make_shared<const SnrNet>(SnrNet::load(path)));
  if (ck == "covariance") return make_estimator("net", std::make_shared<const CovNet>(CovNet::load(path)));
  if (ck == "linear") return make_estimator("net", std::make_shared<const LinearNet>(loaded.net));
  throw IoError(path + ": unknown checkpoint kind '" + ck + "'");
}

int cmd_eval(const Common& c) {
  const Json cfg = load_config(c, eval_defaults(), {"model"});
  const auto out = prepare_out(c.out);
  const auto model = model_from_json(cfg.at("model"));
  const auto est = estimator_from(cfg, model);
  const auto seed = cfg.at("seed").get<std::uint64_t>();
  const long reps = cfg.at("reps").get<long>();
  std::vector<ParamVector> grid;
  for (const auto& g : cfg.at("grid")) {
    if (g.is_number())
      grid.push_back(ParamVector::Constant(1, g.get<double>()));
    else
      grid.push_back(vector_from_json(g));
  }
  require(!grid.empty(), "eval: empty grid");
  write_json(out / "effective_config.json", cfg);

  std::vector<MetricsRecord> recs;
  std::vector<double> inv, inv_se;
  const bool snr = std::holds_alternative<SnrModel>(model);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const Mat e = collect_estimates(est, model, grid[i], reps, Rng::derive(seed, i));
    auto m = metrics_from_estimates(e, grid[i]);
    if (!snr) m.crb = analytic_crb(model, grid[i]);
    if (snr) {
      const auto is = inverse_snr_mse(e, grid[i][0]);
      inv.push_back(is.mean);
      inv_se.push_back(is.stderr_);
    }
    recs.push_back(std::move(m));
  }
  std::vector<std::pair<std::string, std::vector<double>>> extra;
  if (snr) extra = {{"inv_mse", inv}, {"inv_mse_stderr", inv_se}};
  const auto table = metrics_csv(recs, extra);
  table.write(out / "metrics.csv");
  std::cout << table.str();
  return 0;
}

// ---------------------------------------------------------------------------
// experiment

int cmd_experiment(const Common& c, const std::string& kind) {
  Json user = Json::object();
  if (!c.config.empty()) user = parse_json_with_comments(read_text(c.config));
  require(user.is_object(), "config must be a JSON object");
  for (const auto& o : c.overrides) apply_override(user, o);
  if (c.seed) user["seed"] = *c.seed;
  if (!kind.empty()) {
    if (user.contains("experiment"))
      require(user.at("experiment") == kind, "config is for experiment '" + user.at("experiment").dump() +
                                                 "' but the command asked for '" + kind + "'");
    user["experiment"] = kind;
  }
  require(user.contains("experiment"), "experiment: name one of snr, covariance, linear-reg, averaging, linear-sanity");
  const auto res = run_experiment(user, c.out);
  std::cout << res.summary.dump(2) << "\n";
  std::cout << "artifacts in " << c.out << ":";
  for (const auto& f : res.artifacts) std::cout << " " << f;
  std::cout << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// grad-check

Json gradcheck_defaults() {
  return {{"seed", 1},
          {"nets",
           {{{"widths", {3, 8, 2}}, {"activations", {"tanh"}}},
            {{"widths", {3, 8, 8, 2}}, {"activations", {"relu", "relu"}}}}},
          {"lambdas", {0.0, 1.0, 1000.0}},
          {"groups", 3},
          {"per_group", 4},
          {"mse_term", "all_pairs"},
          {"tolerance", 1e-5}};
}

int cmd_gradcheck(const Common& c) {
  const Json cfg = load_config(c, gradcheck_defaults(), {});
  const auto seed = cfg.at("seed").get<std::uint64_t>();
  const double tol = cfg.at("tolerance").get<double>();
  const auto term = cfg.at("mse_term").get<std::string>();
  require(term == "all_pairs" || term == "first_of_group", "grad-check: mse_term must be all_pairs or first_of_group");
  double worst = 0;
  CsvTable t({"net", "lambda", "max_rel_error", "checked"});
  std::size_t idx = 0;
  for (const auto& nj : cfg.at("nets")) {
    const auto spec = MlpSpec::from_json(nj);
    for (double lambda : cfg.at("lambdas").get<std::vector<double>>()) {
      GradCheckOptions opt;
      opt.groups = cfg.at("groups").get<long>();
      opt.per_group = cfg.at("per_group").get<long>();
      opt.lambda = lambda;
      opt.term = term == "all_pairs" ? MseTerm::AllPairs : MseTerm::FirstOfGroup;
      const auto r = grad_check(spec, Rng::derive(seed, idx), opt);
      worst = std::max(worst, r.max_rel_error);
      t.add_row({nj.at("widths").dump(), format_double(lambda), format_double(r.max_rel_error),
                 std::to_string(r.checked)});
    }
    ++idx;
  }
  std::cout << t.str();
  std::cout << "max relative error " << format_double(worst) << " (tolerance " << format_double(tol) << ")\n";
  if (!c.out.empty() && c.out != "out") {
    const auto out = prepare_out(c.out);
    t.write(out / "grad_check.csv");
  }
  return worst <= tol ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bias-constrained estimation toolkit"};
  app.require_subcommand(1);
  Common common;
  std::string kind;

  auto* gen = app.add_subcommand("gen", "Generate an enhanced dataset (N groups of M observations)");
  add_common(gen, common);
  auto* tr = app.add_subcommand("train", "Train an estimator network");
  add_common(tr, common);
  auto* ev = app.add_subcommand("eval", "Monte-Carlo bias/variance/MSE of an estimator on a parameter grid");
  add_common(ev, common);
  auto* ex = app.add_subcommand("experiment", "Run an end-to-end experiment");
  ex->add_option("name", kind, "snr | covariance | linear-reg | averaging | linear-sanity")
      ->check(CLI::IsMember(experiment_kinds()));
  add_common(ex, common);
  auto* gc = app.add_subcommand("grad-check", "Compare backprop with finite differences");
  add_common(gc, common);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    set_max_threads(common.threads);
    if (gen->parsed()) return cmd_gen(common);
    if (tr->parsed()) return cmd_train(common);
    if (ev->parsed()) return cmd_eval(common);
    if (ex->parsed()) return cmd_experiment(common, kind);
    if (gc->parsed()) return cmd_gradcheck(common);
  } catch (const InvalidArgument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 3;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
