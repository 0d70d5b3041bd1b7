#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "bce/neuralnet.hpp"

#include <cmath>
#include <filesystem>

using namespace bce;

namespace {

Mat row(std::initializer_list<double> v) {
  Mat m(1, static_cast<Eigen::Index>(v.size()));
  Eigen::Index k = 0;
  for (double x : v) m(0, k++) = x;
  return m;
}

}  // namespace

TEST_CASE("forward: trivial networks") {
  const auto spec = MlpSpec::uniform({3, 5, 2}, Activation::Tanh);
  const Mlp zero(spec, Vec::Zero(spec.param_count()));
  Rng rng(1);
  const Mat x = rng.normal_matrix(3, 7);
  CHECK(zero.forward(x).norm() == 0.0);

  Mlp ident(MlpSpec::uniform({4, 4}, Activation::Tanh), Vec::Zero(20));
  ident.weight(0) = Mat::Identity(4, 4);
  const Mat x4 = rng.normal_matrix(4, 3);
  CHECK(ident.forward(x4) == x4);

  // dead relu: every hidden pre-activation negative
  Mlp dead = Mlp::init(MlpSpec::uniform({2, 6, 3}, Activation::Relu), 5);
  dead.weight(0).setZero();
  dead.bias(0).setConstant(-1.0);
  dead.bias(1) << 0.1, -0.2, 0.3;
  const Mat out = dead.forward(rng.normal_matrix(2, 4));
  for (Eigen::Index c = 0; c < 4; ++c) CHECK(out.col(c) == dead.bias(1));

  CHECK_THROWS_AS(zero.forward(rng.normal_matrix(2, 1)), InvalidArgument);
}

TEST_CASE("forward with tape matches plain forward") {
  const auto net = Mlp::init(MlpSpec::uniform({3, 8, 8, 2}, Activation::Relu), 2);
  Rng rng(2);
  const Mat x = rng.normal_matrix(3, 11);
  Tape tape;
  CHECK(net.forward(x, tape) == net.forward(x));
  CHECK(tape.a.size() == 4);
}

TEST_CASE("MlpSpec validation and json") {
  CHECK_THROWS_AS(MlpSpec::uniform({3}, Activation::Relu), InvalidArgument);
  CHECK_THROWS_AS(MlpSpec::uniform({3, 0, 1}, Activation::Relu), InvalidArgument);
  MlpSpec bad{{3, 4, 1}, {}};
  CHECK_THROWS_AS(bad.validate(), InvalidArgument);
  const MlpSpec s{{6, 64, 1}, {Activation::Tanh}};
  CHECK(s.param_count() == 6 * 64 + 64 + 64 + 1);
  const auto back = MlpSpec::from_json(s.to_json());
  CHECK(back.widths == s.widths);
  CHECK(back.activations == s.activations);
}

TEST_CASE("bce_loss: hand values") {
  // N=1, M=2: predictions (1, 3), target 2, lambda 1
  auto r = bce_loss(row({1.0, 3.0}), row({2.0}), 2, 1.0);
  CHECK(r.loss == doctest::Approx(1.0));
  CHECK(r.grad(0, 0) == doctest::Approx(-1.0));
  CHECK(r.grad(0, 1) == doctest::Approx(1.0));

  r = bce_loss(row({3.0, 3.0}), row({2.0}), 2, 1.0);
  CHECK(r.loss == doctest::Approx(2.0));
  CHECK(r.grad(0, 0) == doctest::Approx(2.0));
  CHECK(r.grad(0, 1) == doctest::Approx(2.0));

  r = bce_loss(row({2.0, 2.0, 5.0, 5.0}), row({2.0, 5.0}), 2, 7.0);
  CHECK(r.loss == 0.0);
  CHECK(r.grad.norm() == 0.0);

  // first-of-group MSE: only (1 - 2)^2 enters the MSE part
  r = bce_loss(row({1.0, 3.0}), row({2.0}), 2, 0.0, MseTerm::FirstOfGroup);
  CHECK(r.loss == doctest::Approx(1.0));
  CHECK(r.grad(0, 0) == doctest::Approx(-2.0));
  CHECK(r.grad(0, 1) == 0.0);

  CHECK_THROWS_AS(bce_loss(row({1.0, 2.0, 3.0}), row({2.0}), 2, 1.0), InvalidArgument);
  CHECK_THROWS_AS(bce_loss(row({1.0, 2.0}), row({2.0}), 2, -1.0), InvalidArgument);
}

TEST_CASE("bce_loss: lambda = 0 is grouped MSE; loss is nonnegative") {
  Rng rng(3);
  for (int t = 0; t < 50; ++t) {
    const Mat pred = rng.normal_matrix(3, 4 * 5);
    const Mat y = rng.normal_matrix(3, 4);
    double mse = 0;
    for (Eigen::Index c = 0; c < pred.cols(); ++c) mse += (pred.col(c) - y.col(c / 5)).squaredNorm();
    mse /= 20.0;
    CHECK(bce_loss(pred, y, 5, 0.0).loss == doctest::Approx(mse).epsilon(1e-13));
    CHECK(bce_loss(pred, y, 5, rng.uniform(0, 100)).loss >= mse);
  }
}

TEST_CASE("bce_loss gradient matches finite differences") {
  Rng rng(4);
  const Mat pred = rng.normal_matrix(2, 12);
  const Mat y = rng.normal_matrix(2, 3);
  for (auto term : {MseTerm::AllPairs, MseTerm::FirstOfGroup}) {
    const auto r = bce_loss(pred, y, 4, 3.0, term);
    for (Eigen::Index k = 0; k < pred.size(); ++k) {
      Mat p = pred, q = pred;
      p(k) += 1e-6;
      q(k) -= 1e-6;
      const double fd = (bce_loss(p, y, 4, 3.0, term).loss - bce_loss(q, y, 4, 3.0, term).loss) / 2e-6;
      CHECK(r.grad(k) == doctest::Approx(fd).epsilon(1e-6));
    }
  }
}

TEST_CASE("backward: bias-term gradient vanishes at unbiased group means") {
  const auto net = Mlp::init(MlpSpec::uniform({2, 5, 1}, Activation::Tanh), 6);
  Rng rng(6);
  const Mat x = rng.normal_matrix(2, 3 * 4);
  const Mat pred = net.forward(x);
  Mat y(1, 3);
  for (int i = 0; i < 3; ++i) y(0, i) = pred.middleCols(i * 4, 4).mean();
  const auto g0 = loss_and_gradient(net, {x, y, 4, 0.0}).grad;
  const auto g1 = loss_and_gradient(net, {x, y, 4, 1000.0}).grad;
  CHECK((g0 - g1).norm() < 1e-12 * std::max(1.0, g0.norm()));

  Vec grad;
  Tape tape;
  net.forward(x, tape);
  net.backward(tape, Mat::Zero(1, 12), grad);
  CHECK(grad.norm() == 0.0);
}

TEST_CASE("backward: input gradient matches finite differences") {
  const auto net = Mlp::init(MlpSpec::uniform({3, 7, 2}, Activation::Tanh), 8);
  Rng rng(8);
  const Mat x = rng.normal_matrix(3, 5);
  const Mat w = rng.normal_matrix(2, 5);  // loss = sum(w .* f(x))
  Tape tape;
  net.forward(x, tape);
  Vec grad;
  Mat dx;
  net.backward(tape, w, grad, &dx);
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    Mat p = x, q = x;
    p(k) += 1e-6;
    q(k) -= 1e-6;
    const double fd = (w.cwiseProduct(net.forward(p)).sum() - w.cwiseProduct(net.forward(q)).sum()) / 2e-6;
    CHECK(dx(k) == doctest::Approx(fd).epsilon(1e-6));
  }
}

TEST_CASE("grad_check: tanh, relu and linear networks") {
  for (double lambda : {0.0, 1.0, 1000.0}) {
    GradCheckOptions opt;
    opt.lambda = lambda;
    CHECK(grad_check(MlpSpec::uniform({3, 8, 2}, Activation::Tanh), 11, opt).max_rel_error <= 1e-5);
    CHECK(grad_check(MlpSpec::uniform({3, 8, 8, 2}, Activation::Relu), 12, opt).max_rel_error <= 1e-5);
    CHECK(grad_check(MlpSpec::uniform({4, 3}, Activation::Tanh), 13, opt).max_rel_error <= 1e-8);
    opt.term = MseTerm::FirstOfGroup;
    CHECK(grad_check(MlpSpec::uniform({3, 8, 2}, Activation::Tanh), 14, opt).max_rel_error <= 1e-5);
  }
}

TEST_CASE("Adam: fixed points and a scalar quadratic") {
  Adam adam(3);
  Vec p(3);
  p << 1.0, -2.0, 3.0;
  const Vec start = p;
  for (int i = 0; i < 100; ++i) adam.step(p, Vec::Zero(3), 0.1);
  CHECK(p == start);
  Adam adam2(3);
  adam2.step(p, Vec::Ones(3), 0.0);
  CHECK(p == start);

  Adam opt(1);
  Vec theta = Vec::Zero(1);
  for (int i = 0; i < 5000; ++i) {
    const Vec g = Vec::Constant(1, 2.0 * (theta[0] - 5.0));
    opt.step(theta, g, 0.01);
  }
  CHECK(std::abs(theta[0] - 5.0) < 1e-3);
}

TEST_CASE("LrSchedule") {
  auto c = LrSchedule::multistep(1.0, {}, 0.1);
  CHECK(c.lr(0) == 1.0);
  CHECK(c.lr(100000) == 1.0);
  const auto ms = LrSchedule::multistep(1.0, {10, 20}, 0.1);
  CHECK(ms.lr(9) == 1.0);
  CHECK(ms.lr(10) == doctest::Approx(0.1));
  CHECK(ms.lr(25) == doctest::Approx(0.01));

  auto pl = LrSchedule::plateau(1.0, 3, 0.5);
  for (int i = 0; i < 50; ++i) pl.observe(100.0 - i);
  CHECK(pl.lr(0) == 1.0);
  for (int i = 0; i < 3; ++i) pl.observe(1000.0);
  CHECK(pl.lr(0) == 0.5);

  const auto back = LrSchedule::from_json(ms.to_json());
  CHECK(back.lr(25) == ms.lr(25));
  CHECK_THROWS_AS(LrSchedule::from_json(Json{{"kind", "cosine"}}), InvalidArgument);
}

TEST_CASE("checkpoint round trip") {
  const auto dir = std::filesystem::temp_directory_path() / "bce_test_neuralnet";
  const auto net = Mlp::init(MlpSpec::uniform({6, 64, 1}, Activation::Tanh), 21);
  save_mlp(dir / "net.bin", net, Json{{"lambda", 1000}});
  const auto loaded = load_mlp(dir / "net.bin");
  CHECK(loaded.net.params() == net.params());
  CHECK(loaded.net.spec().widths == net.spec().widths);
  CHECK(loaded.extra["lambda"] == 1000);
  write_blob(dir / "other.bin", Json{{"format", "bce-dataset"}}, {});
  CHECK_THROWS_AS(load_mlp(dir / "other.bin"), IoError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("init is seed deterministic and glorot bounded") {
  const auto spec = MlpSpec::uniform({10, 30, 5}, Activation::Relu);
  const auto a = Mlp::init(spec, 3), b = Mlp::init(spec, 3), c = Mlp::init(spec, 4);
  CHECK(a.params() == b.params());
  CHECK(a.params() != c.params());
  CHECK(a.weight(0).cwiseAbs().maxCoeff() <= std::sqrt(6.0 / 40.0));
  CHECK(a.bias(1).norm() == 0.0);
}
