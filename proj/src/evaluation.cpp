#include "bce/evaluation.hpp"

#include <cmath>
#include <set>

namespace bce {

namespace {

constexpr std::size_t kEvalChunk = 500;

MeanStderr mean_stderr(const std::vector<double>& v) {
  require(!v.empty(), "mean of an empty sample");
  const double n = static_cast<double>(v.size());
  double s = 0;
  for (double x : v) s += x;
  const double mean = s / n;
  double ss = 0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return {mean, v.size() > 1 ? std::sqrt(ss / (n - 1.0) / n) : 0.0};
}

}  // namespace

// ---------------------------------------------------------------------------
// Estimator adapters

Estimator make_estimator(std::string name, const LinearEstimator& est) {
  const Mat a = est.a;
  return {std::move(name), a.rows(), [a](std::span<const ObservationBatch> xs) {
            Mat out(a.rows(), static_cast<Eigen::Index>(xs.size()));
            for (std::size_t c = 0; c < xs.size(); ++c) {
              require(xs[c].count() == 1 && xs[c].dim() == a.cols(), "linear estimator: observation shape mismatch");
              out.col(static_cast<Eigen::Index>(c)) = a * xs[c].samples.col(0);
            }
            return out;
          }};
}

Estimator make_estimator(std::string name, std::shared_ptr<const SnrNet> net) {
  return {std::move(name), 1, [net](std::span<const ObservationBatch> xs) { return net->estimate(xs); }};
}

Estimator make_estimator(std::string name, std::shared_ptr<const CovNet> net) {
  return {std::move(name), kCovParams, [net](std::span<const ObservationBatch> xs) { return net->estimate(xs); }};
}

Estimator make_estimator(std::string name, std::shared_ptr<const LinearNet> net) {
  return {std::move(name), net->net().spec().output_dim(),
          [net](std::span<const ObservationBatch> xs) { return net->estimate(xs); }};
}

Estimator snr_mle_estimator(const SnrModel& model) {
  return {"mle", 1, [model](std::span<const ObservationBatch> xs) {
            Mat out(1, static_cast<Eigen::Index>(xs.size()));
            for (std::size_t c = 0; c < xs.size(); ++c) out(0, static_cast<Eigen::Index>(c)) = snr_mle(model, xs[c]);
            return out;
          }};
}

Estimator offset_estimator(Estimator base, double offset) {
  auto inner = base.apply;
  base.name += "+offset";
  base.apply = [inner, offset](std::span<const ObservationBatch> xs) -> Mat {
    return inner(xs).array() + offset;
  };
  return base;
}

// ---------------------------------------------------------------------------
// Point metrics

MetricsRecord metrics_from_estimates(const Mat& e, const ParamVector& y) {
  require(e.rows() == y.size(), "metrics: estimate and parameter dimensions differ");
  require(e.cols() >= 2, "metrics: need at least two estimates");
  const double n = static_cast<double>(e.cols());
  MetricsRecord r;
  r.y = y;
  r.reps = e.cols();
  const Vec mean = e.rowwise().mean();
  r.bias = mean - y;
  const Mat centered = e.colwise() - mean;
  const Vec comp_var = centered.rowwise().squaredNorm() / (n - 1.0);
  r.bias_stderr = (comp_var / n).cwiseSqrt();
  r.variance = comp_var.sum();
  const Eigen::RowVectorXd q = centered.colwise().squaredNorm();
  const Eigen::RowVectorXd s = (e.colwise() - y).colwise().squaredNorm();
  r.mse = s.mean();
  auto se = [n](const Eigen::RowVectorXd& v) {
    const double m = v.mean();
    return std::sqrt((v.array() - m).square().sum() / (n - 1.0) / n);
  };
  r.variance_stderr = se(q);
  r.mse_stderr = se(s);
  return r;
}

Mat collect_estimates(const Estimator& est, const StatModel& model, const ParamVector& y, long reps,
                      std::uint64_t seed) {
  require(reps >= 1, "collect_estimates: reps must be >= 1");
  require(y.size() == param_dim(model), "collect_estimates: parameter dimension does not match the model");
  require(est.dim == y.size(), "estimator '" + est.name + "' does not match the parameter dimension");
  const Chunking chunks{static_cast<std::size_t>(reps), kEvalChunk};
  const auto parts = parallel_map<Mat>(chunks.count(), [&](std::size_t c) {
    std::vector<ObservationBatch> xs;
    xs.reserve(chunks.end(c) - chunks.begin(c));
    for (std::size_t r = chunks.begin(c); r < chunks.end(c); ++r) {
      Rng rng(Rng::derive(seed, r));
      xs.push_back(sample(model, y, rng));
    }
    return est.apply(xs);
  });
  Mat out(y.size(), reps);
  for (std::size_t c = 0; c < chunks.count(); ++c) {
    require(parts[c].rows() == y.size() && parts[c].cols() == static_cast<Eigen::Index>(chunks.end(c) - chunks.begin(c)),
            "estimator '" + est.name + "' returned the wrong shape");
    out.middleCols(static_cast<Eigen::Index>(chunks.begin(c)), parts[c].cols()) = parts[c];
  }
  if (!all_finite(out)) throw NumericalError("estimator '" + est.name + "' produced non-finite estimates");
  return out;
}

MetricsRecord eval_point(const Estimator& est, const StatModel& model, const ParamVector& y, long reps,
                         std::uint64_t seed) {
  require(reps >= 100, "eval_point: reps must be >= 100");
  return metrics_from_estimates(collect_estimates(est, model, y, reps, seed), y);
}

std::vector<MetricsRecord> eval_sweep(const Estimator& est, const StatModel& model,
                                      const std::vector<ParamVector>& grid, long reps, std::uint64_t seed) {
  std::vector<MetricsRecord> out;
  out.reserve(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) out.push_back(eval_point(est, model, grid[i], reps, Rng::derive(seed, i)));
  return out;
}

CsvTable metrics_csv(const std::vector<MetricsRecord>& records,
                     const std::vector<std::pair<std::string, std::vector<double>>>& extra) {
  require(!records.empty(), "metrics_csv: no records");
  const auto d = records[0].y.size();
  auto indexed = [d](const std::string& base) {
    std::vector<std::string> cols;
    if (d == 1) return std::vector<std::string>{base};
    for (Eigen::Index k = 0; k < d; ++k) cols.push_back(base + std::to_string(k + 1));
    return cols;
  };
  std::vector<std::string> header;
  for (const auto& base : {"y", "bias"})
    for (auto& c : indexed(base)) header.push_back(c);
  for (const auto* c : {"var", "mse", "crb"}) header.emplace_back(c);
  for (auto& c : indexed("bias_stderr")) header.push_back(c);
  for (const auto* c : {"var_stderr", "mse_stderr", "crb_stderr", "reps"}) header.emplace_back(c);
  for (const auto& [name, values] : extra) {
    require(values.size() == records.size(), "metrics_csv: extra column length mismatch");
    header.push_back(name);
  }
  CsvTable t(header);
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    std::vector<std::string> row;
    for (Eigen::Index k = 0; k < d; ++k) row.push_back(format_double(r.y[k]));
    for (Eigen::Index k = 0; k < d; ++k) row.push_back(format_double(r.bias[k]));
    row.push_back(format_double(r.variance));
    row.push_back(format_double(r.mse));
    row.push_back(r.crb ? format_double(*r.crb) : "");
    for (Eigen::Index k = 0; k < d; ++k) row.push_back(format_double(r.bias_stderr[k]));
    row.push_back(format_double(r.variance_stderr));
    row.push_back(format_double(r.mse_stderr));
    row.push_back(r.crb_stderr ? format_double(*r.crb_stderr) : "");
    row.push_back(std::to_string(r.reps));
    for (const auto& col : extra) row.push_back(format_double(col.second[i]));
    t.add_row(std::move(row));
  }
  return t;
}

// ---------------------------------------------------------------------------
// Inverse SNR

MeanStderr inverse_snr_mse(const Mat& estimates, double y) {
  require(y > 0, "inverse_snr_mse: y must be positive");
  require(estimates.rows() == 1 && estimates.cols() >= 1, "inverse_snr_mse: expected a row of SNR estimates");
  std::vector<double> v(static_cast<std::size_t>(estimates.cols()));
  for (Eigen::Index c = 0; c < estimates.cols(); ++c) {
    const double e = std::clamp(estimates(0, c), kSnrMin, kSnrMax);
    v[static_cast<std::size_t>(c)] = (1.0 / e - 1.0 / y) * (1.0 / e - 1.0 / y);
  }
  return mean_stderr(v);
}

MeanStderr inverse_snr_mse(const Estimator& est, const SnrModel& model, double y, long reps, std::uint64_t seed) {
  return inverse_snr_mse(collect_estimates(est, model, ParamVector::Constant(1, y), reps, seed), y);
}

// ---------------------------------------------------------------------------
// CRB scatter

double analytic_crb(const StatModel& model, const ParamVector& y) {
  if (const auto* cov = std::get_if<StructuredCovModel>(&model)) return crb_trace(cov_fim(*cov, y));
  if (const auto* lin = std::get_if<LinearGaussianModel>(&model)) return crb_trace(lin_fim(*lin));
  throw InvalidArgument("analytic_crb: no closed-form FIM for the SNR model");
}

std::vector<ScatterPoint> crb_scatter(const Estimator& est, const StatModel& model, const FictitiousPrior& test_prior,
                                      long count, long reps, std::uint64_t seed) {
  require(count >= 1 && reps >= 2, "crb_scatter: need count >= 1 and reps >= 2");
  Rng prng(Rng::derive(seed, 0));
  const auto ys = prior_sample(test_prior, count, prng);
  std::vector<ScatterPoint> pts;
  pts.reserve(ys.size());
  for (std::size_t i = 0; i < ys.size(); ++i) {
    const auto m = metrics_from_estimates(collect_estimates(est, model, ys[i], reps, Rng::derive(seed, i + 1)), ys[i]);
    pts.push_back({ys[i], analytic_crb(model, ys[i]), m.mse, m.mse_stderr, m.bias.norm()});
  }
  std::stable_sort(pts.begin(), pts.end(), [](const ScatterPoint& a, const ScatterPoint& b) { return a.crb < b.crb; });
  return pts;
}

double mean_crb_ratio(const std::vector<ScatterPoint>& pts) {
  require(!pts.empty(), "mean_crb_ratio: no points");
  double s = 0;
  for (const auto& p : pts) s += p.mse / p.crb;
  return s / static_cast<double>(pts.size());
}

CsvTable scatter_csv(const std::vector<ScatterPoint>& pts) {
  require(!pts.empty(), "scatter_csv: no points");
  std::vector<std::string> header{"crb", "mse", "mse_stderr", "ratio", "bias_norm"};
  for (Eigen::Index k = 0; k < pts[0].y.size(); ++k) header.push_back("y" + std::to_string(k + 1));
  CsvTable t(header);
  for (const auto& p : pts) {
    std::vector<double> row{p.crb, p.mse, p.mse_stderr, p.mse / p.crb, p.bias_norm};
    for (Eigen::Index k = 0; k < p.y.size(); ++k) row.push_back(p.y[k]);
    t.add_row(row);
  }
  return t;
}

// ---------------------------------------------------------------------------
// Averaging

double AveragingCurve::variance_slope() const {
  require(rows.size() >= 2, "variance_slope: need at least two rows");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double n = static_cast<double>(rows.size());
  for (const auto& r : rows) {
    require(r.variance > 0, "variance_slope: variance must be positive");
    const double x = std::log(static_cast<double>(r.mt)), yv = std::log(r.variance);
    sx += x;
    sy += yv;
    sxx += x * x;
    sxy += x * yv;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

CsvTable AveragingCurve::to_csv() const {
  CsvTable t({"mt", "mse", "mse_stderr", "bias_norm", "var", "var_stderr"});
  for (const auto& r : rows)
    t.add_row({std::to_string(r.mt), format_double(r.mse), format_double(r.mse_stderr), format_double(r.bias_norm),
               format_double(r.variance), format_double(r.variance_stderr)});
  return t;
}

AveragingCurve averaging_eval(const Estimator& est, const StatModel& model, const ParamVector& y,
                              const std::vector<long>& mt_list, long reps, std::uint64_t seed) {
  require(!mt_list.empty() && reps >= 2, "averaging_eval: need M_t values and reps >= 2");
  require(est.dim == y.size() && y.size() == param_dim(model), "averaging_eval: dimension mismatch");
  for (std::size_t t = 0; t < mt_list.size(); ++t) {
    require(mt_list[t] >= 1, "averaging_eval: M_t must be >= 1");
    if (t > 0) require(mt_list[t] > mt_list[t - 1], "averaging_eval: M_t must be strictly increasing");
  }
  AveragingCurve curve;
  for (std::size_t t = 0; t < mt_list.size(); ++t) {
    const long mt = mt_list[t];
    const std::uint64_t tseed = Rng::derive(seed, t);
    // keep roughly kEvalChunk local estimates per task
    const std::size_t per = std::max<std::size_t>(1, kEvalChunk / static_cast<std::size_t>(mt));
    const Chunking chunks{static_cast<std::size_t>(reps), per};
    const auto parts = parallel_map<Mat>(chunks.count(), [&](std::size_t c) {
      std::vector<ObservationBatch> xs;
      for (std::size_t r = chunks.begin(c); r < chunks.end(c); ++r) {
        Rng rng(Rng::derive(tseed, r));
        for (long j = 0; j < mt; ++j) xs.push_back(sample(model, y, rng));
      }
      const Mat local = est.apply(xs);
      Mat global(y.size(), static_cast<Eigen::Index>(chunks.end(c) - chunks.begin(c)));
      for (Eigen::Index r = 0; r < global.cols(); ++r) global.col(r) = local.middleCols(r * mt, mt).rowwise().mean();
      return global;
    });
    Mat all(y.size(), reps);
    for (std::size_t c = 0; c < chunks.count(); ++c)
      all.middleCols(static_cast<Eigen::Index>(chunks.begin(c)), parts[c].cols()) = parts[c];
    const auto m = metrics_from_estimates(all, y);
    curve.rows.push_back({mt, m.mse, m.mse_stderr, m.bias.norm(), m.variance, m.variance_stderr});
  }
  return curve;
}

// ---------------------------------------------------------------------------
// Regularization study

namespace {

Mat random_rotation(Rng& rng, int n) {
  Eigen::HouseholderQR<Mat> qr(rng.normal_matrix(n, n));
  Mat q = qr.householderQ();
  // fix column signs so the rotation is a deterministic function of the draw
  const Mat r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (int k = 0; k < n; ++k)
    if (r(k, k) < 0) q.col(k) = -q.col(k);
  return q;
}

std::vector<double> linspace(double lo, double hi, int count) {
  std::vector<double> v(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) v[static_cast<std::size_t>(i)] = count == 1 ? lo : lo + (hi - lo) * i / (count - 1);
  return v;
}

std::vector<double> grid_from_json(const Json& j) {
  if (j.is_array()) return j.get<std::vector<double>>();
  require(j.is_object(), "grid must be a list or {lo, hi, count}");
  return linspace(j.at("lo").get<double>(), j.at("hi").get<double>(), j.at("count").get<int>());
}

struct ValidationStats {
  Mat sxx, sxy;  // E[x x^T], E[x y^T]
  double syy = 0;

  double bmse(const Mat& a) const {
    return (a * sxx * a.transpose()).trace() - 2.0 * (a * sxy).trace() + syy;
  }
};

ValidationStats validation_stats(const Mat& h, const Mat& ln, const Mat& ly, long pairs, std::uint64_t seed) {
  constexpr std::size_t kChunk = 10000;
  const Chunking chunks{static_cast<std::size_t>(pairs), kChunk};
  ValidationStats v{Mat::Zero(h.rows(), h.rows()), Mat::Zero(h.rows(), h.cols()), 0.0};
  for (std::size_t c = 0; c < chunks.count(); ++c) {
    Rng rng(Rng::derive(seed, c));
    const auto cnt = static_cast<Eigen::Index>(chunks.end(c) - chunks.begin(c));
    const Mat y = ly * rng.normal_matrix(h.cols(), cnt);
    const Mat x = h * y + ln * rng.normal_matrix(h.rows(), cnt);
    v.sxx.noalias() += x * x.transpose();
    v.sxy.noalias() += x * y.transpose();
    v.syy += y.squaredNorm();
  }
  const double n = static_cast<double>(pairs);
  v.sxx /= n;
  v.sxy /= n;
  v.syy /= n;
  return v;
}

}  // namespace

void RegularizationConfig::finalize() {
  require(n >= 1 && d >= 1, "regularization: dimensions must be positive");
  require(trials >= 2, "regularization: need at least two trials");
  require(!n_list.empty(), "regularization: empty N list");
  for (long v : n_list) require(v >= 1, "regularization: N must be >= 1");
  require(validation_pairs >= 1000, "regularization: validation set too small");
  require(jitter >= 0, "regularization: jitter must be >= 0");
  Rng rng(matrix_seed);
  if (h.size() == 0) {
    require(n == d, "regularization: the default H = I needs n == d");
    h = Mat::Identity(n, d);
  }
  if (sigma_n.size() == 0) {
    const Mat v = random_rotation(rng, n);
    Vec ev = Eigen::Map<const Vec>(linspace(0.5, 1.5, n).data(), n);
    ev *= n / ev.sum();  // trace n
    sigma_n = v * ev.asDiagonal() * v.transpose();
    sigma_n = 0.5 * (sigma_n + sigma_n.transpose());
  }
  if (sigma_y.size() == 0) {
    const Mat u = random_rotation(rng, d);
    Vec ev = Vec::Constant(d, 100.0);
    ev.head(std::min(d, 5)).setConstant(0.01);
    sigma_y = u * ev.asDiagonal() * u.transpose();
    sigma_y = 0.5 * (sigma_y + sigma_y.transpose());
  }
  require(h.rows() == n && h.cols() == d, "regularization: H must be n x d");
  require(sigma_n.rows() == n && sigma_n.cols() == n, "regularization: Sigma_n must be n x n");
  require(sigma_y.rows() == d && sigma_y.cols() == d, "regularization: Sigma_y must be d x d");
  if (bce_grid.empty()) bce_grid = linspace(0.0, 10.0, 100);
  if (ridge_grid.empty()) ridge_grid = linspace(-0.012, 0.002, 100);
  for (double l : bce_grid) require(l >= 0, "regularization: BCE grid must be >= 0");
}

Json RegularizationConfig::to_json() const {
  return {{"n", n},
          {"d", d},
          {"h", matrix_to_json(h)},
          {"sigma_n", matrix_to_json(sigma_n)},
          {"sigma_y", matrix_to_json(sigma_y)},
          {"matrix_seed", matrix_seed},
          {"n_list", n_list},
          {"trials", trials},
          {"bce_grid", bce_grid},
          {"ridge_grid", ridge_grid},
          {"validation_pairs", validation_pairs},
          {"jitter", jitter}};
}

RegularizationConfig RegularizationConfig::from_json(const Json& j) {
  static const std::set<std::string> known{"n",      "d",        "h",          "sigma_n",    "sigma_y",
                                           "matrix_seed", "n_list", "trials", "bce_grid", "ridge_grid",
                                           "validation_pairs", "jitter"};
  require(j.is_object(), "regularization config must be an object");
  for (const auto& [k, v] : j.items()) require(known.count(k) > 0, "regularization config: unknown key '" + k + "'");
  RegularizationConfig c;
  try {
    c.n = j.value("n", c.n);
    c.d = j.value("d", c.d);
    if (j.contains("h") && !j.at("h").is_null()) c.h = matrix_from_json(j.at("h"));
    if (j.contains("sigma_n") && !j.at("sigma_n").is_null()) c.sigma_n = matrix_from_json(j.at("sigma_n"));
    if (j.contains("sigma_y") && !j.at("sigma_y").is_null()) c.sigma_y = matrix_from_json(j.at("sigma_y"));
    c.matrix_seed = j.value("matrix_seed", c.matrix_seed);
    if (j.contains("n_list")) c.n_list = j.at("n_list").get<std::vector<long>>();
    c.trials = j.value("trials", c.trials);
    if (j.contains("bce_grid")) c.bce_grid = grid_from_json(j.at("bce_grid"));
    if (j.contains("ridge_grid")) c.ridge_grid = grid_from_json(j.at("ridge_grid"));
    c.validation_pairs = j.value("validation_pairs", c.validation_pairs);
    c.jitter = j.value("jitter", c.jitter);
  } catch (const Json::exception& e) {
    throw InvalidArgument(std::string("regularization config: ") + e.what());
  }
  c.finalize();
  return c;
}

RegularizationResult regularization_experiment(RegularizationConfig cfg, std::uint64_t seed) {
  cfg.finalize();
  const Eigen::LLT<Mat> ly(cfg.sigma_y), ln(cfg.sigma_n);
  if (ly.info() != Eigen::Success || ln.info() != Eigen::Success)
    throw NumericalError("regularization: covariances must be positive definite");
  const Mat ly_m = ly.matrixL(), ln_m = ln.matrixL();
  const double oracle = linear_bmse(lmmse(cfg.h, cfg.sigma_n, cfg.sigma_y).a, cfg.h, cfg.sigma_n, cfg.sigma_y);

  RegularizationResult res;
  for (std::size_t ni = 0; ni < cfg.n_list.size(); ++ni) {
    const long n_train = cfg.n_list[ni];
    const std::uint64_t nseed = Rng::derive(seed, ni);
    auto trials = parallel_map<RegularizationTrial>(static_cast<std::size_t>(cfg.trials), [&](std::size_t t) {
      const std::uint64_t tseed = Rng::derive(nseed, t);
      Rng rng(Rng::derive(tseed, 0));
      std::vector<ParamVector> ys;
      ys.reserve(static_cast<std::size_t>(n_train));
      for (long i = 0; i < n_train; ++i) ys.push_back(ly_m * rng.normal_vector(cfg.d));
      const Mat s_hat = empirical_second_moment(ys, cfg.jitter);
      const auto val = validation_stats(cfg.h, ln_m, ly_m, cfg.validation_pairs, Rng::derive(tseed, 1));
      auto test = [&](const Mat& a) { return linear_bmse(a, cfg.h, cfg.sigma_n, cfg.sigma_y); };

      RegularizationTrial tr;
      tr.n = n_train;
      tr.trial = static_cast<long>(t);
      tr.emmse = test(lmmse(cfg.h, cfg.sigma_n, s_hat).a);

      double best = std::numeric_limits<double>::infinity();
      Mat best_a;
      for (double l : cfg.bce_grid) {
        const Mat a = lbce_model_form(cfg.h, cfg.sigma_n, s_hat, l).a;
        const double v = val.bmse(a);
        if (v < best) {
          best = v;
          best_a = a;
          tr.bce_lambda = l;
        }
      }
      tr.bce = test(best_a);

      best = std::numeric_limits<double>::infinity();
      for (double l : cfg.ridge_grid) {
        Mat a;
        try {
          a = ridge_linear(cfg.h, cfg.sigma_n, s_hat, l).a;
        } catch (const InvalidArgument&) {
          ++tr.ridge_skipped;
          continue;
        }
        const double v = val.bmse(a);
        if (v < best) {
          best = v;
          best_a = a;
          tr.ridge_lambda = l;
        }
      }
      if (!std::isfinite(best)) throw NumericalError("regularization: every ridge grid point violated positive definiteness");
      tr.ridge = test(best_a);
      return tr;
    });

    RegularizationSummary s;
    s.n = n_train;
    s.oracle_lmmse = oracle;
    std::vector<double> e, r, b;
    long negative = 0;
    for (const auto& tr : trials) {
      e.push_back(tr.emmse);
      r.push_back(tr.ridge);
      b.push_back(tr.bce);
      if (tr.ridge_lambda < 0) ++negative;
      s.mean_ridge_lambda += tr.ridge_lambda;
      s.mean_bce_lambda += tr.bce_lambda;
    }
    s.emmse = mean_stderr(e);
    s.ridge = mean_stderr(r);
    s.bce = mean_stderr(b);
    s.ridge_negative_fraction = static_cast<double>(negative) / static_cast<double>(trials.size());
    s.mean_ridge_lambda /= static_cast<double>(trials.size());
    s.mean_bce_lambda /= static_cast<double>(trials.size());
    res.summary.push_back(s);
    res.trials.insert(res.trials.end(), trials.begin(), trials.end());
  }
  return res;
}

CsvTable RegularizationResult::trials_csv() const {
  CsvTable t({"N", "trial", "emmse", "ridge", "bce", "ridge_lambda", "bce_lambda", "ridge_skipped"});
  for (const auto& tr : trials)
    t.add_row({std::to_string(tr.n), std::to_string(tr.trial), format_double(tr.emmse), format_double(tr.ridge),
               format_double(tr.bce), format_double(tr.ridge_lambda), format_double(tr.bce_lambda),
               std::to_string(tr.ridge_skipped)});
  return t;
}

CsvTable RegularizationResult::summary_csv() const {
  CsvTable t({"N", "emmse", "emmse_stderr", "ridge", "ridge_stderr", "bce", "bce_stderr", "ridge_negative_fraction",
              "mean_ridge_lambda", "mean_bce_lambda", "oracle_lmmse"});
  for (const auto& s : summary)
    t.add_row(std::vector<double>{static_cast<double>(s.n), s.emmse.mean, s.emmse.stderr_, s.ridge.mean,
                                  s.ridge.stderr_, s.bce.mean, s.bce.stderr_, s.ridge_negative_fraction,
                                  s.mean_ridge_lambda, s.mean_bce_lambda, s.oracle_lmmse});
  return t;
}

}  // namespace bce
