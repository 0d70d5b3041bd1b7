#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "bce/linear_bce.hpp"
#include "bce/training.hpp"

#include <cmath>
#include <filesystem>

using namespace bce;

namespace {

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("bce_test_training_" + name);
}

std::vector<ObservationBatch> draw(const StatModel& model, const ParamVector& y, int count, Rng& rng) {
  std::vector<ObservationBatch> xs;
  for (int i = 0; i < count; ++i) xs.push_back(sample(model, y, rng));
  return xs;
}

}  // namespace

TEST_CASE("SNR features") {
  Rng rng(1);
  const SnrModel model{50, 1.0};
  const auto x = snr_sample(model, 1.3, 0.4, rng);
  ObservationBatch scaled{7.3 * x.samples};
  CHECK((snr_features(x) - snr_features(scaled)).cwiseAbs().maxCoeff() < 1e-12);

  // pure noise: Gaussian moments 3 and 15
  const ObservationBatch noise{rng.normal_matrix(1, 1000000)};
  const Vec f = snr_features(noise);
  CHECK(std::abs(f[0] / 3.0 - 1.0) < 0.01);
  CHECK(std::abs(f[1] / 15.0 - 1.0) < 0.01);

  // noiseless +-h: every normalized power is 1
  ObservationBatch pm{Mat(1, 6)};
  pm.samples << 2, -2, 2, 2, -2, -2;
  const Vec g = snr_features(pm);
  CHECK(g[0] == doctest::Approx(1.0));
  CHECK(g[1] == doctest::Approx(1.0));
  CHECK(g[5] == doctest::Approx(0.0));

  CHECK_THROWS_AS(snr_features(ObservationBatch{Mat::Zero(1, 10)}), InvalidArgument);
  CHECK_THROWS_AS(snr_features(ObservationBatch{Mat::Ones(1, 1)}), InvalidArgument);
}

TEST_CASE("covariance net with zero weights stays at one half") {
  const CovNetSpec spec{};
  auto net = CovNet::init(spec, 3);
  net.mlp().params().setZero();
  Rng rng(2);
  const StructuredCovModel model{20};
  const auto xs = draw(model, Vec::Constant(kCovParams, 0.3), 5, rng);
  const Mat out = net.estimate(xs);
  CHECK((out.array() == 0.5).all());
}

TEST_CASE("covariance net outputs stay in the unit box") {
  CovNetSpec spec;
  spec.iterations = 20;
  auto net = CovNet::init(spec, 4);
  net.mlp().params() *= 30.0;  // large updates hit the clamp
  Rng rng(3);
  const auto xs = draw(StructuredCovModel{20}, Vec::Constant(kCovParams, 0.8), 50, rng);
  const Mat out = net.estimate(xs);
  CHECK(out.minCoeff() >= 0.0);
  CHECK(out.maxCoeff() <= 1.0);
  CHECK(((out.array() == 0.0) || (out.array() == 1.0)).any());
}

TEST_CASE("covariance net gradient through the unrolled iterations") {
  CovNetSpec spec;
  SUBCASE("residual input") { spec.input = CovNetSpec::Input::Residual; }
  SUBCASE("sigma input") { spec.input = CovNetSpec::Input::Sigma; }
  spec.iterations = 4;
  spec.hidden = 6;
  spec.state = 3;
  auto net = CovNet::init(spec, 5);
  Rng rng(6);
  net.mlp().params() *= 0.5;  // keep alpha inside (0, 1) so the clamp is inactive
  const StructuredCovModel model{20};
  const long groups = 2, m = 3;
  Mat targets(kCovParams, groups);
  std::vector<ObservationBatch> xs;
  for (long i = 0; i < groups; ++i) {
    targets.col(i) = Vec::Constant(kCovParams, 0.2 + 0.3 * static_cast<double>(i));
    for (long j = 0; j < m; ++j) xs.push_back(sample(model, targets.col(i), rng));
  }
  const Mat in = net.inputs(xs);
  const Mat alpha = net.forward(in);
  REQUIRE(alpha.minCoeff() > 0.0);
  REQUIRE(alpha.maxCoeff() < 1.0);

  for (double lambda : {0.0, 10.0}) {
    Vec grad, scratch;
    net.loss_grad(in, targets, m, lambda, MseTerm::AllPairs, grad);
    double worst = 0;
    const double floor = 1e-3 * grad.cwiseAbs().maxCoeff();
    for (Eigen::Index p = 0; p < grad.size(); ++p) {
      const double keep = net.mlp().params()[p];
      net.mlp().params()[p] = keep + 1e-6;
      const double up = net.loss_grad(in, targets, m, lambda, MseTerm::AllPairs, scratch);
      net.mlp().params()[p] = keep - 1e-6;
      const double down = net.loss_grad(in, targets, m, lambda, MseTerm::AllPairs, scratch);
      net.mlp().params()[p] = keep;
      const double fd = (up - down) / 2e-6;
      worst = std::max(worst, std::abs(fd - grad[p]) / std::max({std::abs(fd), std::abs(grad[p]), floor}));
    }
    CHECK(worst < 1e-5);
  }
}

TEST_CASE("cov_vech ordering") {
  Mat c(5, 5);
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 5; ++j) c(i, j) = 10 * std::min(i, j) + std::max(i, j);
  const Vec v = cov_vech(c);
  CHECK(v[0] == 0);
  CHECK(v[4] == 4);
  CHECK(v[5] == 11);
  CHECK(v[14] == 44);
}

TEST_CASE("train config round trip and validation") {
  TrainConfig c;
  c.lambda = 3;
  c.mse_term = MseTerm::FirstOfGroup;
  c.data_mode = TrainConfig::DataMode::Fixed;
  c.dataset_groups = 40;
  const auto back = TrainConfig::from_json(c.to_json());
  CHECK(back.to_json() == c.to_json());
  CovNetSpec cs;
  cs.input = CovNetSpec::Input::Sigma;
  CHECK(CovNetSpec::from_json(cs.to_json()).input == CovNetSpec::Input::Sigma);
  CHECK_THROWS_AS(CovNetSpec::from_json({{"input", "c0"}}), InvalidArgument);
  CHECK_THROWS_AS(TrainConfig::from_json({{"lamda", 1}}), InvalidArgument);
  CHECK_THROWS_AS(TrainConfig::from_json({{"lambda", -1}}), InvalidArgument);
  CHECK_THROWS_AS(TrainConfig::from_json({{"groups", 0}}), InvalidArgument);
  CHECK_THROWS_AS(TrainConfig::from_json({{"data_mode", "fixed"}, {"dataset_groups", 15}}), InvalidArgument);
}

TEST_CASE("zero-step training leaves the network unchanged") {
  const LinearGaussianModel model(Mat::Identity(3, 3), Mat::Identity(3, 3));
  auto net = LinearNet::init(3, 3, 9);
  const Vec before = net.net().params();
  TrainConfig cfg;
  cfg.steps = 0;
  const auto h = train(net, FictitiousPrior::uniform(3, -1.0, 1.0), model, cfg);
  CHECK(h.loss.empty());
  CHECK(net.net().params() == before);
}

TEST_CASE("divergence is reported") {
  const LinearGaussianModel model(Mat::Identity(2, 2), Mat::Identity(2, 2));
  auto net = LinearNet::init(2, 2, 1);
  net.net().params().setConstant(std::numeric_limits<double>::quiet_NaN());
  TrainConfig cfg;
  cfg.steps = 5;
  CHECK_THROWS_AS(train(net, FictitiousPrior::uniform(2, -1.0, 1.0), model, cfg), NumericalError);
}

TEST_CASE("linear nets recover the closed forms") {
  Rng rng(11);
  const int n = 5;
  const Eigen::JacobiSVD<Mat> svd(rng.normal_matrix(n, n), Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vec s = Vec::LinSpaced(n, 0.7, 1.5);
  const Mat h = svd.matrixU() * s.asDiagonal() * svd.matrixV().transpose();
  const LinearGaussianModel model(h, 0.5 * Mat::Identity(n, n));
  const auto prior = FictitiousPrior::gaussian(Vec::Zero(n), Mat::Identity(n, n));

  SUBCASE("lambda = 0 gives the LMMSE") {
    auto net = LinearNet::init(n, n, 1);
    TrainConfig cfg;
    cfg.groups = 100;
    cfg.per_group = 10;
    cfg.steps = 3000;
    cfg.schedule = {{"kind", "multistep"}, {"lr", 3e-3}, {"milestones", {1500, 2250}}, {"factor", 0.1}};
    train(net, prior, model, cfg);
    const Mat target = lmmse(h, model.sigma_n(), Mat::Identity(n, n)).a;
    CHECK((net.a() - target).norm() / target.norm() < 0.02);
    CHECK(net.b().norm() < 0.05);
  }
  SUBCASE("lambda = 1000 gives the LBCE") {
    auto net = LinearNet::init(n, n, 2);
    TrainConfig cfg;
    cfg.lambda = 1000;
    cfg.groups = 10;
    cfg.per_group = 1000;
    cfg.steps = 1500;
    cfg.schedule = {{"kind", "multistep"}, {"lr", 1e-2}, {"milestones", {750, 1125}}, {"factor", 0.1}};
    train(net, prior, model, cfg);
    const Mat target = lbce_model_form(h, model.sigma_n(), Mat::Identity(n, n), 1000).a;
    CHECK((net.a() - target).norm() / target.norm() < 0.02);
  }
}

TEST_CASE("training is deterministic and supports fixed datasets") {
  const LinearGaussianModel model(Mat::Identity(2, 2), Mat::Identity(2, 2));
  const auto prior = FictitiousPrior::uniform(2, -1.0, 1.0);
  TrainConfig cfg;
  cfg.steps = 50;
  cfg.groups = 4;
  cfg.per_group = 5;
  cfg.lambda = 2;
  cfg.data_mode = TrainConfig::DataMode::Fixed;
  cfg.dataset_groups = 12;
  cfg.val_groups = 8;
  cfg.eval_every = 10;
  auto a = LinearNet::init(2, 2, 3), b = LinearNet::init(2, 2, 3);
  set_max_threads(1);
  const auto ha = train(a, prior, model, cfg);
  set_max_threads(8);
  const auto hb = train(b, prior, model, cfg);
  set_max_threads(0);
  CHECK(a.net().params() == b.net().params());
  CHECK(ha.loss == hb.loss);
  CHECK(ha.validation.size() == 5);
  CHECK(ha.best_step >= 0);
  CHECK(ha.to_csv().rows() == 50);
}

TEST_CASE("SNR net training lowers the loss and checkpoints round trip") {
  const SnrModel model{50, 1.0};
  const auto prior = FictitiousPrior::snr_composite(1, 10, 2, 50);
  auto net = SnrNet::create(16, model, 2, 50, 4);
  TrainConfig cfg;
  cfg.steps = 300;
  cfg.schedule = {{"kind", "constant"}, {"lr", 3e-3}};
  const auto h = train(net, prior, model, cfg);
  double head = 0, tail = 0;
  for (int i = 0; i < 30; ++i) {
    head += h.loss[static_cast<std::size_t>(i)];
    tail += h.loss[h.loss.size() - 1 - static_cast<std::size_t>(i)];
  }
  CHECK(tail < 0.5 * head);

  Rng rng(5);
  const auto xs = draw(model, Vec::Constant(1, 10.0), 20, rng);
  const Mat est = net.estimate(xs);
  CHECK(est.minCoeff() >= kSnrMin);
  CHECK(est.maxCoeff() <= kSnrMax);

  const auto path = temp_path("snr.json");
  net.save(path, {{"lambda", 0}});
  const auto back = SnrNet::load(path);
  CHECK((back.estimate(xs) - est).norm() == 0.0);

  const auto cpath = temp_path("cov.json");
  CovNetSpec spec;
  spec.iterations = 3;
  spec.hidden = 8;
  const auto cov = CovNet::init(spec, 1);
  cov.save(cpath);
  const auto cxs = draw(StructuredCovModel{20}, Vec::Constant(kCovParams, 0.5), 3, rng);
  CHECK((CovNet::load(cpath).estimate(cxs) - cov.estimate(cxs)).norm() == 0.0);
  CHECK_THROWS_AS(SnrNet::load(cpath), IoError);
  std::filesystem::remove(path);
  std::filesystem::remove(cpath);
}
