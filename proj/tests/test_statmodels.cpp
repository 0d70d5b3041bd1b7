#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "bce/statmodels.hpp"

#include <cmath>
#include <numbers>

using namespace bce;

namespace {

Mat random_spd(Rng& rng, int n, double floor = 0.5) {
  Mat a = rng.normal_matrix(n, n);
  return a * a.transpose() / n + floor * Mat::Identity(n, n);
}

double rel_frob(const Mat& a, const Mat& b) { return (a - b).norm() / b.norm(); }

}  // namespace

TEST_CASE("lin_sample: zero signal returns the noise draw") {
  LinearGaussianModel m(Mat::Identity(2, 2), Mat::Identity(2, 2));
  Rng a(7), b(7);
  const auto x = lin_sample(m, Vec::Zero(2), a);
  const Vec z = b.normal_vector(2);
  CHECK(x.samples(0, 0) == doctest::Approx(z[0]).epsilon(1e-15));
  CHECK(x.samples(1, 0) == doctest::Approx(z[1]).epsilon(1e-15));
}

TEST_CASE("lin_sample: noiseless limit and covariance") {
  Rng rng(1);
  Mat h = rng.normal_matrix(3, 2);
  LinearGaussianModel tiny(h, 1e-12 * Mat::Identity(3, 3));
  Vec y(2);
  y << 0.3, -1.2;
  const auto x = lin_sample(tiny, y, rng);
  CHECK((x.samples.col(0) - h * y).cwiseAbs().maxCoeff() < 1e-5);

  Mat sn(2, 2);
  sn << 2, 0.5, 0.5, 1;
  LinearGaussianModel m(Mat::Identity(2, 2), sn);
  Mat acc = Mat::Zero(2, 2);
  const int n = 1000000;
  for (int i = 0; i < n; ++i) {
    const Vec v = lin_sample(m, Vec::Zero(2), rng).samples.col(0);
    acc.noalias() += v * v.transpose();
  }
  acc /= n;
  CHECK((acc - sn).cwiseAbs().maxCoeff() < 0.01);
}

TEST_CASE("lin_sample: dimension mismatch") {
  LinearGaussianModel m(Mat::Identity(2, 2), Mat::Identity(2, 2));
  Rng rng(1);
  CHECK_THROWS_AS(lin_sample(m, Vec::Zero(3), rng), InvalidArgument);
  CHECK_THROWS_AS(LinearGaussianModel(Mat::Identity(2, 2), -Mat::Identity(2, 2)), NumericalError);
}

TEST_CASE("lin_fim: closed form and score oracle") {
  CHECK(lin_fim(LinearGaussianModel(Mat::Identity(3, 3), Mat::Identity(3, 3))).matrix.isApprox(Mat::Identity(3, 3)));
  CHECK(lin_fim(LinearGaussianModel(2.0 * Mat::Identity(2, 2), Mat::Identity(2, 2)))
            .matrix.isApprox(4.0 * Mat::Identity(2, 2)));

  Rng rng(3);
  const Mat h = rng.normal_matrix(4, 3);
  const Mat sn = random_spd(rng, 4);
  LinearGaussianModel m(h, sn);
  const Mat f = lin_fim(m).matrix;
  const Mat sn_inv = spd_inverse(sn, "test");
  Vec y(3);
  y << 1.0, -0.5, 2.0;
  Mat acc = Mat::Zero(3, 3);
  const int n = 1000000;
  for (int i = 0; i < n; ++i) {
    const Vec x = lin_sample(m, y, rng).samples.col(0);
    const Vec score = h.transpose() * sn_inv * (x - h * y);
    acc.noalias() += score * score.transpose();
  }
  acc /= n;
  CHECK(rel_frob(acc, f) < 0.02);
}

TEST_CASE("snr_sample: noiseless, symmetric, second moment") {
  SnrModel m{.p = 1000};
  Rng rng(11);
  const auto x = snr_sample(m, 2.5, 1e-12, rng);
  CHECK((x.samples.cwiseAbs().array() - 2.5).abs().maxCoeff() < 1e-5);

  SnrModel big{.p = 1000000};
  const auto w = snr_sample(big, 2.0, 1.0, rng);
  const double mean = w.samples.mean();
  const double var = (w.samples.array() - mean).square().mean();
  CHECK(std::abs(mean) < 3.0 * std::sqrt(var / big.p));
  CHECK(w.samples.squaredNorm() / big.p == doctest::Approx(5.0).epsilon(0.01));

  CHECK_THROWS_AS(snr_sample(m, 0.0, 1.0, rng), InvalidArgument);
  CHECK_THROWS_AS(snr_sample(m, 1.0, -1.0, rng), InvalidArgument);
}

TEST_CASE("snr_loglik: hand value and symmetries") {
  SnrModel m{.p = 1};
  ObservationBatch x{Mat::Zero(1, 1)};
  // 0.5 phi(0; 1, 1) + 0.5 phi(0; -1, 1) = exp(-1/2)/sqrt(2 pi) = 0.24197
  CHECK(snr_loglik(m, x, 1.0, 1.0) == doctest::Approx(std::log(0.2419707245)).epsilon(1e-9));
  CHECK(snr_loglik(m, x, 1.0, 1.0) == doctest::Approx(-1.4189385).epsilon(1e-7));

  Rng rng(5);
  SnrModel m50{.p = 50};
  const auto obs = snr_sample(m50, 1.3, 0.4, rng);
  const ObservationBatch neg{-obs.samples};
  CHECK(snr_loglik(m50, obs, 1.3, 0.4) == snr_loglik(m50, neg, 1.3, 0.4));
  CHECK(snr_loglik(m50, obs, -1.3, 0.4) == doctest::Approx(snr_loglik(m50, obs, 1.3, 0.4)).epsilon(1e-14));
  CHECK_THROWS_AS(snr_loglik(m50, obs, 1.0, 0.0), InvalidArgument);
}

TEST_CASE("snr_mle: saturation at high SNR") {
  SnrModel m{.p = 50};
  Mat x(1, 50);
  for (int l = 0; l < 50; ++l) x(0, l) = (l % 3 == 0) ? 3.0 : -3.0;
  const auto r = snr_mle_detail(m, {x});
  CHECK(r.snr >= 1e3);
  CHECK(r.saturated);
  CHECK_THROWS_AS(snr_mle(m, {Mat::Zero(1, 50)}), InvalidArgument);
}

TEST_CASE("snr_mle: refined estimate dominates a 10x finer grid") {
  SnrModel m{.p = 50};
  Rng rng(21);
  for (double y : {2.0, 10.0, 40.0}) {
    const double h = 1.7;
    const auto raw = snr_sample(m, h, h * h / y, rng);
    const double rms = std::sqrt(raw.samples.squaredNorm() / m.p);
    const ObservationBatch z{raw.samples / rms};
    const auto r = snr_mle_detail(m, z);
    double best = -1e300;
    const int g = 600;
    for (int i = 0; i < g; ++i) {
      const double hh = std::exp(std::log(0.1) + std::log(200.0) * i / (g - 1));
      for (int j = 0; j < g; ++j) {
        const double s2 = std::exp(std::log(1e-3) + std::log(1e5) * j / (g - 1));
        best = std::max(best, snr_loglik(m, z, hh, s2));
      }
    }
    CHECK(r.loglik >= best - 1e-6);
    // the estimate is scale invariant
    CHECK(snr_mle(m, raw) == doctest::Approx(r.snr).epsilon(1e-6));
  }
}

TEST_CASE("snr_moment_match: exact moments recover y = 4") {
  // h = 2, sigma2 = 1: E[x^2] = 5, E[x^4] = 16 + 24 + 3 = 43
  const auto [h2, s2] = snr_moment_match(5.0, 43.0);
  CHECK(h2 == doctest::Approx(4.0));
  CHECK(s2 == doctest::Approx(1.0));
  CHECK(h2 / s2 == doctest::Approx(4.0));

  // on a long record the grid-search start lands near the same point
  SnrModel m{.p = 20000};
  Rng rng(2);
  const auto x = snr_sample(m, 2.0, 1.0, rng);
  CHECK(snr_mle(m, x) == doctest::Approx(4.0).epsilon(0.1));
}

TEST_CASE("snr_fim_mc: score regularity, high-SNR limit, positivity") {
  Rng rng(9);
  const double h = 1.0, s2 = 0.5;
  Eigen::Vector2d mean = Eigen::Vector2d::Zero(), sq = Eigen::Vector2d::Zero();
  const int n = 1000000;
  for (int i = 0; i < n; ++i) {
    const double x = rng.sign() * h + std::sqrt(s2) * rng.normal();
    const Eigen::Vector2d s = snr_score(x, h, s2);
    mean += s;
    sq += s.cwiseProduct(s);
  }
  mean /= n;
  sq /= n;
  for (int k = 0; k < 2; ++k) CHECK(std::abs(mean[k]) < 3.0 * std::sqrt(sq[k] / n));

  SnrModel m{.p = 50};
  const auto hi = snr_fim_mc(m, 10.0, 0.01, 100000, rng);
  CHECK(hi.per_sample.matrix(0, 0) == doctest::Approx(1.0 / 0.01).epsilon(0.05));
  CHECK(hi.per_sample.matrix(1, 1) == doctest::Approx(1.0 / (2.0 * 0.01 * 0.01)).epsilon(0.05));

  for (double y : {0.5, 2.0, 20.0, 50.0}) {
    const auto f = snr_fim_mc(m, 1.0, 1.0 / y, 20000, rng);
    CHECK(f.crb > 0);
    CHECK(f.crb_stderr > 0);
  }
  CHECK_THROWS_AS(snr_fim_mc(m, 1.0, 1.0, 100, rng), InvalidArgument);
}

TEST_CASE("cov_build_sigma: pattern and linearity") {
  CHECK(cov_build_sigma(Vec::Zero(9)).isApprox(Mat::Identity(5, 5)));
  const Mat s = cov_build_sigma(Vec::Ones(9));
  for (int k = 0; k < 5; ++k) CHECK(s(k, k) == 2.0);
  for (auto [r, c] : {std::pair{0, 3}, {1, 3}, {2, 4}, {3, 4}}) {
    CHECK(s(r, c) == 0.5);
    CHECK(s(c, r) == 0.5);
  }
  CHECK(s(0, 1) == 0.0);
  CHECK(s(0, 4) == 0.0);
  CHECK(s(2, 3) == 0.0);

  Rng rng(4);
  Vec y = (rng.normal_vector(9).array().abs() * 0.3).min(1.0).matrix();
  const Mat base = cov_build_sigma(y) - Mat::Identity(5, 5);
  for (double lam : {0.0, 0.25, 0.8, 1.0})
    CHECK(((cov_build_sigma(lam * y) - Mat::Identity(5, 5)) - lam * base).cwiseAbs().maxCoeff() < 1e-15);

  Vec bad = Vec::Zero(9);
  bad[3] = 1.5;
  CHECK_THROWS_AS(cov_build_sigma(bad), InvalidArgument);
  bad[3] = -0.1;
  CHECK_THROWS_AS(cov_build_sigma(bad), InvalidArgument);
}

TEST_CASE("cov_sample: moments match the model") {
  Rng rng(8);
  StructuredCovModel m{.p_samples = 1000000};
  const auto x0 = cov_sample(m, Vec::Zero(9), rng);
  CHECK((sample_covariance(x0) - Mat::Identity(5, 5)).cwiseAbs().maxCoeff() < 0.01);
  const Vec mean = x0.samples.rowwise().mean();
  for (int k = 0; k < 5; ++k) CHECK(std::abs(mean[k]) < 3.0 / std::sqrt(1e6));

  const auto x1 = cov_sample(m, Vec::Ones(9), rng);
  CHECK((sample_covariance(x1) - cov_build_sigma(Vec::Ones(9))).cwiseAbs().maxCoeff() < 0.02);

  Vec bad = Vec::Constant(9, 2.0);
  CHECK_THROWS_AS(cov_sample(m, bad, rng), InvalidArgument);
}

TEST_CASE("cov_fim: hand value at zero, linear in p, finite-difference oracle") {
  StructuredCovModel m{.p_samples = 20};
  const Mat f = cov_fim(m, Vec::Zero(9)).matrix;
  for (int k = 0; k < 9; ++k) CHECK(f(k, k) == doctest::Approx(k < 5 ? 10.0 : 5.0));
  CHECK((f - Mat(f.diagonal().asDiagonal())).cwiseAbs().maxCoeff() < 1e-14);
  CHECK(crb_trace({f}) == doctest::Approx(1.3));

  Rng rng(12);
  StructuredCovModel m2{.p_samples = 40};
  const Vec y = Vec::Constant(9, 0.5) + 0.4 * Vec(rng.normal_vector(9).array().tanh());
  CHECK((cov_fim(m2, y).matrix - 2.0 * cov_fim(m, y).matrix).cwiseAbs().maxCoeff() < 1e-12);

  // F/p = -Hessian of the expected per-vector log-likelihood, estimated
  // from 1e5 draws at y0 and differentiated by central differences.
  StructuredCovModel one{.p_samples = 1};
  std::vector<Vec> points = {Vec::Constant(9, 0.5)};
  for (int i = 0; i < 3; ++i) {
    Vec p(9);
    for (int k = 0; k < 9; ++k) p[k] = rng.uniform(0.05, 0.95);
    points.push_back(p);
  }
  for (const Vec& y0 : points) {
    StructuredCovModel draw{.p_samples = 100000};
    const Mat s = sample_covariance(cov_sample(draw, y0, rng));
    auto expected_ll = [&](const Vec& y) {
      const Mat sig = cov_build_sigma(y);
      Eigen::LLT<Mat> llt(sig);
      const double logdet = 2.0 * Eigen::Matrix<double, 5, 1>(Mat(llt.matrixL()).diagonal()).array().log().sum();
      return -0.5 * (5.0 * std::log(2.0 * std::numbers::pi) + logdet + llt.solve(s).trace());
    };
    const double e = 1e-3;
    Mat hess(9, 9);
    for (int k = 0; k < 9; ++k)
      for (int l = 0; l < 9; ++l) {
        auto at = [&](double dk, double dl) {
          Vec y = y0;
          y[k] += dk;
          y[l] += dl;
          return expected_ll(y);
        };
        hess(k, l) = (at(e, e) - at(e, -e) - at(-e, e) + at(-e, -e)) / (4 * e * e);
      }
    CHECK(rel_frob(-hess, cov_fim(one, y0).matrix) < 0.05);
  }
}

TEST_CASE("crb_trace") {
  CHECK(crb_trace({Mat::Identity(4, 4)}) == doctest::Approx(4.0));
  Mat f(2, 2);
  f << 2, 0, 0, 4;
  CHECK(crb_trace({f}) == doctest::Approx(0.75));
  Rng rng(6);
  const Mat g = random_spd(rng, 5);
  CHECK(crb_trace({3.0 * g}) == doctest::Approx(crb_trace({g}) / 3.0).epsilon(1e-12));
  CHECK_THROWS_AS(crb_trace({Mat::Zero(2, 2)}), NumericalError);
}

TEST_CASE("samplers are seed deterministic") {
  const StatModel models[] = {LinearGaussianModel(Mat::Identity(3, 2), Mat::Identity(3, 3)), SnrModel{.p = 50},
                              StructuredCovModel{.p_samples = 20}};
  for (const auto& m : models) {
    const Vec y = Vec::Constant(param_dim(m), 0.5);
    Rng a(99), b(99);
    CHECK(sample(m, y, a).samples == sample(m, y, b).samples);
  }
}

TEST_CASE("compressed covariance draws follow the Wishart law") {
  const ParamVector y = ParamVector::Constant(kCovParams, 0.7);
  const Mat sigma = cov_build_sigma(y);
  const int p = 200;
  const StructuredCovModel model{p, true};
  Rng rng(31);
  const long draws = 200000;
  CHECK(cov_sample(model, y, rng).count() == 5);
  Mat mean = Mat::Zero(5, 5), sq = Mat::Zero(5, 5);
  for (long r = 0; r < draws; ++r) {
    const auto x = cov_sample(model, y, rng);
    const Mat c = sample_covariance(x);
    mean += c;
    sq += c.cwiseProduct(c);
  }
  mean /= draws;
  const Mat var = sq / draws - mean.cwiseProduct(mean);
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 5; ++j) {
      // Wishart: Var(C_ij) = (S_ij^2 + S_ii S_jj) / p
      const double v = (sigma(i, j) * sigma(i, j) + sigma(i, i) * sigma(j, j)) / p;
      CHECK(std::abs(mean(i, j) - sigma(i, j)) < 4.0 * std::sqrt(v / draws));
      CHECK(std::abs(var(i, j) / v - 1.0) < 0.02);
    }
  CHECK_THROWS_AS(cov_sample(StructuredCovModel{4, true}, y, rng), InvalidArgument);
}
