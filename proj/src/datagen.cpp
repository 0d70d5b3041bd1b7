#include "bce/datagen.hpp"

#include <cmath>

namespace bce {

FictitiousPrior FictitiousPrior::uniform(Vec lower, Vec upper) {
  require(lower.size() > 0 && lower.size() == upper.size(), "uniform prior: bounds must have equal, positive size");
  require(all_finite(lower) && all_finite(upper), "uniform prior: bounds must be finite");
  require((lower.array() <= upper.array()).all(), "uniform prior: lower must not exceed upper");
  FictitiousPrior p;
  p.kind_ = Kind::UniformBox;
  p.lower_ = std::move(lower);
  p.upper_ = std::move(upper);
  return p;
}

FictitiousPrior FictitiousPrior::uniform(Eigen::Index dim, double lower, double upper) {
  return uniform(Vec::Constant(dim, lower), Vec::Constant(dim, upper));
}

FictitiousPrior FictitiousPrior::gaussian(Vec mean, Mat cov, std::optional<std::pair<Vec, Vec>> clip) {
  require(mean.size() > 0 && cov.rows() == mean.size() && cov.cols() == mean.size(),
          "gaussian prior: covariance must be d x d");
  require(all_finite(mean) && all_finite(cov), "gaussian prior: non-finite entries");
  require((cov - cov.transpose()).cwiseAbs().maxCoeff() <= 1e-9 * (1.0 + cov.cwiseAbs().maxCoeff()),
          "gaussian prior: covariance must be symmetric");
  Eigen::SelfAdjointEigenSolver<Mat> eig(0.5 * (cov + cov.transpose()));
  const Vec ev = eig.eigenvalues();
  require(ev.minCoeff() >= -1e-10 * std::max(1.0, ev.cwiseAbs().maxCoeff()), "gaussian prior: covariance must be PSD");
  if (clip) {
    require(clip->first.size() == mean.size() && clip->second.size() == mean.size(),
            "gaussian prior: clip box dimension mismatch");
    require((clip->first.array() <= clip->second.array()).all(), "gaussian prior: clip lower must not exceed upper");
  }
  FictitiousPrior p;
  p.kind_ = Kind::Gaussian;
  p.mean_ = std::move(mean);
  p.cov_ = std::move(cov);
  p.factor_ = eig.eigenvectors() * ev.cwiseMax(0.0).cwiseSqrt().asDiagonal();
  p.clip_ = std::move(clip);
  return p;
}

FictitiousPrior FictitiousPrior::snr_composite(double amp_lo, double amp_hi, double snr_lo, double snr_hi) {
  require(amp_lo > 0 && amp_lo <= amp_hi, "snr prior: need 0 < amplitude_lo <= amplitude_hi");
  require(snr_lo > 0 && snr_lo <= snr_hi, "snr prior: need 0 < snr_lo <= snr_hi");
  FictitiousPrior p;
  p.kind_ = Kind::SnrComposite;
  p.amp_lo_ = amp_lo;
  p.amp_hi_ = amp_hi;
  p.snr_lo_ = snr_lo;
  p.snr_hi_ = snr_hi;
  return p;
}

Eigen::Index FictitiousPrior::dim() const {
  switch (kind_) {
    case Kind::UniformBox: return lower_.size();
    case Kind::Gaussian: return mean_.size();
    case Kind::SnrComposite: return 1;
  }
  return 0;
}

FictitiousPrior::Draw FictitiousPrior::draw(Rng& rng) const {
  Draw d;
  switch (kind_) {
    case Kind::UniformBox: {
      d.y.resize(lower_.size());
      for (Eigen::Index k = 0; k < lower_.size(); ++k) d.y[k] = rng.uniform(lower_[k], upper_[k]);
      break;
    }
    case Kind::Gaussian: {
      d.y = mean_ + factor_ * rng.normal_vector(mean_.size());
      if (clip_) d.y = d.y.cwiseMax(clip_->first).cwiseMin(clip_->second);
      break;
    }
    case Kind::SnrComposite: {
      d.amplitude = rng.uniform(amp_lo_, amp_hi_);
      d.y = Vec::Constant(1, rng.uniform(snr_lo_, snr_hi_));
      break;
    }
  }
  return d;
}

Json FictitiousPrior::to_json() const {
  switch (kind_) {
    case Kind::UniformBox:
      return {{"kind", "uniform"}, {"lower", vector_to_json(lower_)}, {"upper", vector_to_json(upper_)}};
    case Kind::Gaussian: {
      Json j = {{"kind", "gaussian"}, {"mean", vector_to_json(mean_)}, {"cov", matrix_to_json(cov_)}};
      if (clip_) j["clip"] = {{"lower", vector_to_json(clip_->first)}, {"upper", vector_to_json(clip_->second)}};
      return j;
    }
    case Kind::SnrComposite:
      return {{"kind", "snr"}, {"amplitude", {amp_lo_, amp_hi_}}, {"snr", {snr_lo_, snr_hi_}}};
  }
  return {};
}

FictitiousPrior FictitiousPrior::from_json(const Json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "uniform") {
    if (j.contains("dim")) return uniform(j.at("dim").get<long>(), j.at("lower").get<double>(), j.at("upper").get<double>());
    return uniform(vector_from_json(j.at("lower")), vector_from_json(j.at("upper")));
  }
  if (kind == "gaussian") {
    std::optional<std::pair<Vec, Vec>> clip;
    if (j.contains("clip")) clip = std::pair{vector_from_json(j["clip"].at("lower")), vector_from_json(j["clip"].at("upper"))};
    return gaussian(vector_from_json(j.at("mean")), matrix_from_json(j.at("cov")), clip);
  }
  if (kind == "snr") {
    const auto a = j.at("amplitude").get<std::vector<double>>();
    const auto s = j.at("snr").get<std::vector<double>>();
    require(a.size() == 2 && s.size() == 2, "snr prior: amplitude and snr must be [lo, hi]");
    return snr_composite(a[0], a[1], s[0], s[1]);
  }
  throw InvalidArgument("unknown prior kind: " + kind);
}

std::vector<ParamVector> prior_sample(const FictitiousPrior& prior, long count, Rng& rng) {
  require(count >= 1, "prior_sample: count must be >= 1");
  std::vector<ParamVector> out;
  out.reserve(static_cast<std::size_t>(count));
  for (long i = 0; i < count; ++i) out.push_back(prior.draw(rng).y);
  return out;
}

DatasetRecord generate_record(const FictitiousPrior& prior, const StatModel& model, long m, Rng& rng) {
  require(m >= 1, "generate_record: M must be >= 1");
  require(prior.dim() == param_dim(model), "generate_record: prior dimension does not match the model");
  const auto d = prior.draw(rng);
  DatasetRecord rec;
  rec.y = d.y;
  rec.observations.reserve(static_cast<std::size_t>(m));
  const auto* snr = std::get_if<SnrModel>(&model);
  for (long j = 0; j < m; ++j) {
    if (snr && prior.kind() == FictitiousPrior::Kind::SnrComposite) {
      rec.observations.push_back(snr_sample(*snr, d.amplitude, d.amplitude * d.amplitude / d.y[0], rng));
    } else {
      rec.observations.push_back(sample(model, d.y, rng));
    }
  }
  return rec;
}

DatasetNM gen_dataset(const FictitiousPrior& prior, const StatModel& model, long n, long m, std::uint64_t seed) {
  require(n >= 1 && m >= 1, "gen_dataset: N and M must be >= 1");
  require(prior.dim() == param_dim(model), "gen_dataset: prior dimension does not match the model");
  const Rng master(seed);
  DatasetNM ds;
  ds.records = parallel_map<DatasetRecord>(static_cast<std::size_t>(n), [&](std::size_t i) {
    Rng rng = master.substream(i);
    return generate_record(prior, model, m, rng);
  });
  return ds;
}

BatchStream::BatchStream(FictitiousPrior prior, StatModel model, long groups, long per_group, std::uint64_t seed)
    : prior_(std::move(prior)), model_(std::move(model)), groups_(groups), per_group_(per_group), seed_(seed) {
  require(groups >= 1 && per_group >= 1, "BatchStream: batch sizes must be >= 1");
  require(prior_.dim() == param_dim(model_), "BatchStream: prior dimension does not match the model");
}

DatasetNM BatchStream::batch(long index) const {
  return gen_dataset(prior_, model_, groups_, per_group_, Rng::derive(seed_, static_cast<std::uint64_t>(index)));
}

Json model_to_json(const StatModel& model) {
  return std::visit(
      [](const auto& m) -> Json {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, LinearGaussianModel>)
          return {{"kind", "linear"}, {"H", matrix_to_json(m.h())}, {"sigma_n", matrix_to_json(m.sigma_n())}};
        else if constexpr (std::is_same_v<T, SnrModel>)
          return {{"kind", "snr"}, {"p", m.p}, {"amplitude", m.amplitude}};
        else
          return {{"kind", "covariance"}, {"p_samples", m.p_samples}, {"compress", m.compress}};
      },
      model);
}

StatModel model_from_json(const Json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "linear") return LinearGaussianModel(matrix_from_json(j.at("H")), matrix_from_json(j.at("sigma_n")));
  if (kind == "snr") {
    SnrModel m{.p = j.value("p", 50), .amplitude = j.value("amplitude", 1.0)};
    m.validate();
    return m;
  }
  if (kind == "covariance") {
    StructuredCovModel m{.p_samples = j.value("p_samples", 20), .compress = j.value("compress", false)};
    m.validate();
    return m;
  }
  throw InvalidArgument("unknown model kind: " + kind);
}

void save_dataset(const std::filesystem::path& path, const DatasetNM& ds, const FictitiousPrior& prior,
                  const StatModel& model, std::uint64_t seed) {
  require(ds.n() >= 1 && ds.m() >= 1, "save_dataset: empty dataset");
  const auto& first = ds.records.front();
  const Eigen::Index d = first.y.size();
  const Eigen::Index rows = first.observations.front().dim();
  const Eigen::Index cols = first.observations.front().count();
  std::vector<double> payload;
  payload.reserve(static_cast<std::size_t>(ds.n() * (d + ds.m() * rows * cols)));
  for (const auto& rec : ds.records) {
    require(rec.y.size() == d && static_cast<long>(rec.observations.size()) == ds.m(), "save_dataset: ragged dataset");
    payload.insert(payload.end(), rec.y.data(), rec.y.data() + d);
    for (const auto& obs : rec.observations) {
      require(obs.dim() == rows && obs.count() == cols, "save_dataset: ragged observations");
      // column-major n x count == row-major count x n: sample vectors contiguous
      payload.insert(payload.end(), obs.samples.data(), obs.samples.data() + rows * cols);
    }
  }
  Json header = {{"format", "bce-dataset"},
                 {"version", 1},
                 {"model", model_to_json(model)},
                 {"prior", prior.to_json()},
                 {"N", ds.n()},
                 {"M", ds.m()},
                 {"seed", seed},
                 {"dims", {{"param", d}, {"obs_dim", rows}, {"obs_count", cols}}}};
  write_blob(path, header, payload);
}

LoadedDataset load_dataset(const std::filesystem::path& path) {
  Blob blob = read_blob(path);
  const Json& h = blob.header;
  if (h.value("format", "") != "bce-dataset") throw IoError(path.string() + ": not a dataset file");
  const long n = h.at("N").get<long>();
  const long m = h.at("M").get<long>();
  const auto d = h.at("dims").at("param").get<Eigen::Index>();
  const auto rows = h.at("dims").at("obs_dim").get<Eigen::Index>();
  const auto cols = h.at("dims").at("obs_count").get<Eigen::Index>();
  const std::size_t expect = static_cast<std::size_t>(n * (d + m * rows * cols));
  if (blob.payload.size() != expect) throw IoError(path.string() + ": payload size does not match header");
  LoadedDataset out;
  out.header = h;
  std::size_t pos = 0;
  out.dataset.records.resize(static_cast<std::size_t>(n));
  for (auto& rec : out.dataset.records) {
    rec.y = Eigen::Map<const Vec>(blob.payload.data() + pos, d);
    pos += static_cast<std::size_t>(d);
    rec.observations.resize(static_cast<std::size_t>(m));
    for (auto& obs : rec.observations) {
      obs.samples = Eigen::Map<const Mat>(blob.payload.data() + pos, rows, cols);
      pos += static_cast<std::size_t>(rows * cols);
    }
  }
  return out;
}

}  // namespace bce
