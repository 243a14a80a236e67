#include <doctest.h>

#include <cmath>
#include <numeric>

#include "stv/diffusion.hpp"
#include "stv/error.hpp"
#include "stv/videoldm.hpp"

using namespace stv;

namespace {

double mean_of(const Tensor& t) {
  return std::accumulate(t.values().begin(), t.values().end(), 0.0) / static_cast<double>(t.size());
}

double rms_diff(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s / static_cast<double>(a.size()));
}

}  // namespace

TEST_CASE("schedule examples") {
  const Schedule s = make_schedule();
  CHECK(s.T == 1000);
  CHECK(s.alpha_at(1) == doctest::Approx(0.9915).epsilon(1e-15));
  CHECK(s.beta_at(1000) == doctest::Approx(0.0120).epsilon(1e-15));

  const Schedule two = make_schedule(2, 0.0085, 0.0120);
  CHECK(std::abs(two.alpha_bar_at(2) - 0.9915 * 0.9880) < 1e-15);

  const Schedule one = make_schedule(1, 0.003, 0.02);
  REQUIRE(one.beta.size() == 1);
  CHECK(one.beta[0] == 0.003);
  CHECK(one.alpha_bar_at(0) == 1.0);
}

TEST_CASE("schedule invariants") {
  const Schedule s = make_schedule();
  double prod = 1.0;
  for (int t = 1; t <= s.T; ++t) {
    CHECK(s.beta_at(t) > 0.0);
    CHECK(s.beta_at(t) < 1.0);
    if (t > 1) {
      CHECK(s.beta_at(t) >= s.beta_at(t - 1));
      CHECK(s.alpha_bar_at(t) < s.alpha_bar_at(t - 1));
    }
    prod *= 1.0 - s.beta_at(t);
    CHECK(std::abs(s.alpha_bar_at(t) - prod) < 1e-12);
  }
  CHECK_THROWS_AS(make_schedule(0), DomainError);
  CHECK_THROWS_AS(make_schedule(10, 0.0, 0.1), DomainError);
  CHECK_THROWS_AS(make_schedule(10, 0.2, 0.1), DomainError);
  CHECK_THROWS_AS(make_schedule(10, 0.1, 1.0), DomainError);
  CHECK_THROWS_AS(s.alpha_bar_at(1001), DomainError);
  CHECK_THROWS_AS(s.beta_at(0), DomainError);
}

TEST_CASE("noise level at the refinement depth") {
  const Schedule s = make_schedule();
  // Reference values from an independent cumulative product.
  CHECK(s.alpha_bar_at(600) == doctest::Approx(0.0031598701592420357).epsilon(1e-9));
  CHECK(std::sqrt(1.0 - s.alpha_bar_at(600)) == doctest::Approx(0.9984188148471351).epsilon(1e-12));
  CHECK(s.alpha_bar_at(1000) == doctest::Approx(3.35184312846354e-05).epsilon(1e-9));
}

TEST_CASE("forward diffusion limits and inversion") {
  const Schedule s = make_schedule();
  RngStream rng(3);
  const Tensor x0 = gaussian(rng, {4, 5, 3});
  const Tensor eps = gaussian(rng, {4, 5, 3});
  const Tensor zero = Tensor::zeros({4, 5, 3});
  for (int t : {1, 17, 600, 1000}) {
    const double ab = s.alpha_bar_at(t);
    CHECK(max_abs_diff(forward_diffuse(x0, t, zero, s), scale(x0, std::sqrt(ab))) == 0.0);
    CHECK(max_abs_diff(forward_diffuse(zero, t, eps, s), scale(eps, std::sqrt(1.0 - ab))) == 0.0);
    const Tensor xt = forward_diffuse(x0, t, eps, s);
    CHECK(max_abs_diff(predict_x0(xt, eps, t, s), x0) < 1e-10);
  }
  CHECK_THROWS_AS(forward_diffuse(x0, 0, eps, s), DomainError);
  CHECK_THROWS_AS(forward_diffuse(x0, 1001, eps, s), DomainError);
}

TEST_CASE("stepwise noising matches the marginal variance") {
  const Schedule s = make_schedule();
  const int t = 100;
  const std::size_t trials = 100000;
  RngStream rng(11);
  std::vector<double> z(static_cast<std::size_t>(t));
  double sum = 0.0, sum2 = 0.0;
  const double x0 = 0.7;
  for (std::size_t k = 0; k < trials; ++k) {
    rng.fill_gaussian(z);
    double x = x0;
    for (int i = 1; i <= t; ++i) x = std::sqrt(1.0 - s.beta_at(i)) * x + std::sqrt(s.beta_at(i)) * z[i - 1];
    const double d = x - std::sqrt(s.alpha_bar_at(t)) * x0;
    sum += d;
    sum2 += d * d;
  }
  const double n = static_cast<double>(trials);
  const double var = sum2 / n - (sum / n) * (sum / n);
  CHECK(std::abs(var / (1.0 - s.alpha_bar_at(t)) - 1.0) < 0.02);
}

TEST_CASE("ddim step examples") {
  const Schedule s = make_schedule();
  const Tensor x0({3}, {0.5, -1.25, 2.0});
  const Tensor zero = Tensor::zeros({3});

  // Exact prediction for a point mass without noise in x_t.
  const Tensor xt = scale(x0, std::sqrt(s.alpha_bar_at(500)));
  const DdimStep st = ddim_step(xt, zero, 500, 480, 0.0, s, Tensor{});
  CHECK(!st.sigma_clamped);
  for (std::size_t i = 0; i < 3; ++i) CHECK(st.x_prev[i] == doctest::Approx(std::sqrt(s.alpha_bar_at(480)) * x0[i]).epsilon(1e-14));

  // With realised noise and its exact prediction, the deterministic step
  // lands on the marginal at t_prev with the same noise.
  const Tensor eps({3}, {0.3, 0.1, -0.9});
  const Tensor xt2 = forward_diffuse(x0, 500, eps, s);
  const Tensor expect = forward_diffuse(x0, 480, eps, s);
  CHECK(max_abs_diff(ddim_step(xt2, eps, 500, 480, 0.0, s, Tensor{}).x_prev, expect) < 1e-12);

  // t_prev = 0 returns x0_hat.
  const Tensor e_any({3}, {1.0, -2.0, 0.5});
  CHECK(max_abs_diff(ddim_step(xt2, e_any, 500, 0, 0.0, s, Tensor{}).x_prev, predict_x0(xt2, e_any, 500, s)) < 1e-12);
  // And with eta > 0 as well, since sigma vanishes there.
  RngStream rng(1);
  CHECK(ddim_sigma(500, 0, 1.0, s) == 0.0);
  CHECK(max_abs_diff(ddim_step(xt2, e_any, 500, 0, 1.0, s, rng).x_prev, predict_x0(xt2, e_any, 500, s)) < 1e-12);

  CHECK_THROWS_AS(ddim_step(xt, zero, 10, 10, 0.0, s, Tensor{}), DomainError);
  CHECK_THROWS_AS(ddim_step(xt, zero, 10, 11, 0.0, s, Tensor{}), DomainError);
  CHECK_THROWS_AS(ddim_step(xt, Tensor::zeros({2}), 10, 5, 0.0, s, Tensor{}), ShapeError);
}

TEST_CASE("ddim step with explicit noise follows the update formula") {
  const Schedule s = make_schedule();
  const int t = 321, tp = 301;
  const double eta = 1.0;
  const Tensor x({2}, {0.4, -0.2}), e({2}, {0.1, 0.8}), z({2}, {-1.5, 0.25});
  const double ab = s.alpha_bar_at(t), abp = s.alpha_bar_at(tp);
  const double sigma = std::sqrt((1 - abp) / (1 - ab)) * std::sqrt(1 - ab / abp);
  CHECK(ddim_sigma(t, tp, eta, s) == doctest::Approx(sigma).epsilon(1e-14));
  const DdimStep st = ddim_step(x, e, t, tp, eta, s, z);
  for (std::size_t i = 0; i < 2; ++i) {
    const double x0h = (x[i] - std::sqrt(1 - ab) * e[i]) / std::sqrt(ab);
    const double want = std::sqrt(abp) * x0h + std::sqrt(1 - abp - sigma * sigma) * e[i] + sigma * z[i];
    CHECK(st.x_prev[i] == doctest::Approx(want).epsilon(1e-13));
  }
}

TEST_CASE("ddim clamps an excessive sigma") {
  const Schedule s = make_schedule();
  const Tensor x({1}, {0.0}), e({1}, {0.0}), z({1}, {1.0});
  const DdimStep st = ddim_step(x, e, 900, 100, 3.0, s, z);
  CHECK(st.sigma_clamped);
  CHECK(std::isfinite(st.x_prev[0]));
  CHECK(!ddim_step(x, e, 900, 100, 1.0, s, z).sigma_clamped);
}

TEST_CASE("ddim timesteps") {
  const auto ts = ddim_timesteps(1000, 50);
  REQUIRE(ts.size() == 51);
  CHECK(ts.front() == 1000);
  CHECK(ts[1] == 980);
  CHECK(ts[49] == 20);
  CHECK(ts.back() == 0);
  for (std::size_t i = 1; i < ts.size(); ++i) CHECK(ts[i] < ts[i - 1]);

  const auto odd = ddim_timesteps(600, 7);
  REQUIRE(odd.size() == 8);
  CHECK(odd.front() == 600);
  for (std::size_t i = 1; i < odd.size(); ++i) CHECK(odd[i] < odd[i - 1]);
  CHECK(ddim_timesteps(1, 1) == std::vector<int>{1, 0});
  CHECK_THROWS_AS(ddim_timesteps(10, 0), DomainError);
  CHECK_THROWS_AS(ddim_timesteps(10, 11), DomainError);
}

TEST_CASE("guidance combination") {
  const Tensor e0({1}, {0.0}), e1({1}, {1.0}), e2({1}, {2.0});
  CHECK(cfg_epsilon(e0, e1, e2, {7.5, 7.5})[0] == 15.0);

  RngStream rng(5);
  const Tensor a = gaussian(rng, {6}), b = gaussian(rng, {6}), c = gaussian(rng, {6});
  CHECK(bitwise_equal(cfg_epsilon(a, b, c, {0.0, 0.0}), a));
  CHECK(max_abs_diff(cfg_epsilon(a, a, a, {3.0, -11.0}), a) < 1e-14);

  const GuidanceWeights w{2.5, 4.0};
  // Linearity in each argument.
  const Tensor a2 = gaussian(rng, {6});
  const Tensor lhs = cfg_epsilon(add(a, a2), b, c, w);
  const Tensor rhs = add(cfg_epsilon(a, b, c, w), cfg_epsilon(a2, Tensor::zeros({6}), Tensor::zeros({6}), w));
  CHECK(max_abs_diff(lhs, rhs) < 1e-12);
  // Swapping the conditional branches changes the result for distinct inputs.
  CHECK(max_abs_diff(cfg_epsilon(a, b, c, w), cfg_epsilon(a, c, b, w)) > 1e-3);
  CHECK_THROWS_AS(cfg_epsilon(a, b, Tensor::zeros({5}), w), ShapeError);
}

namespace {

// Fixed affine function of x.
class AffinePredictor final : public NoisePredictor {
 public:
  Tensor predict(const Tensor& x, int t) const override { return scale(x, 0.1 + 1e-4 * t); }
};

}  // namespace

TEST_CASE("eta zero chains are bitwise deterministic") {
  const Schedule s = make_schedule();
  const AffinePredictor p;
  RngStream r1(1), r2(999);
  const Tensor x = gaussian(r1, {3, 4, 4, 2});
  const Tensor a = ddim_sample(x, 800, p, s, {50, 0.0}, r1);
  const Tensor b = ddim_sample(x, 800, p, s, {50, 0.0}, r2);
  CHECK(bitwise_equal(a, b));
  CHECK(r2.counter() == 0);
}

TEST_CASE("sdedit determinism and range") {
  const Schedule s = make_schedule();
  GaussianOracle o{Tensor({1}, {0.0}), 1.0};
  const OraclePredictor p(o, s);
  RngStream src(2);
  const Tensor chunk = gaussian(src, {4, 4, 4, 1});
  RngStream a(42), b(42);
  CHECK(bitwise_equal(sdedit_enhance(chunk, 600, p, s, a), sdedit_enhance(chunk, 600, p, s, b)));
  RngStream c(43);
  CHECK(!bitwise_equal(sdedit_enhance(chunk, 600, p, s, a), sdedit_enhance(chunk, 600, p, s, c)));
  CHECK_THROWS_AS(sdedit_enhance(chunk, 1000, p, s, a), DomainError);
  CHECK_THROWS_AS(sdedit_enhance(chunk, 0, p, s, a), DomainError);
}

TEST_CASE("sdedit at the shallowest depth") {
  const Schedule s = make_schedule();
  // Smooth input.
  Tensor chunk({4, 8, 8, 1});
  for (std::size_t i = 0; i < chunk.size(); ++i) chunk[i] = std::sin(0.3 * static_cast<double>(i));

  // One step from t=1 to 0 returns the posterior mean of x0. Its deviation
  // from the input is k * sqrt(1 - ab) * eps with
  // k = sqrt(ab) sigma2 / (ab sigma2 + 1 - ab).
  const double ab = s.alpha_bar_at(1);
  for (double sigma2 : {1.0, 1e-6}) {
    const OraclePredictor p(GaussianOracle{chunk, sigma2}, s);
    RngStream rng(8);
    const Tensor out = sdedit_enhance(chunk, 1, p, s, rng, {1, 1.0});
    const double k = std::sqrt(ab) * sigma2 / (ab * sigma2 + 1.0 - ab);
    const double predicted = k * std::sqrt(1.0 - ab);
    CHECK(rms_diff(out, chunk) == doctest::Approx(predicted).epsilon(0.1));
    if (sigma2 < 1e-3) CHECK(rms_diff(out, chunk) < 1e-3);
  }
}

TEST_CASE("oracle minimises the denoising objective") {
  const Schedule s = make_schedule();
  const double mu = 1.5, sigma2 = 0.5;
  const std::size_t n = 10000;
  RngStream rng(21);
  const Tensor x0 = add(scale(gaussian(rng, {n}), std::sqrt(sigma2)), Tensor::full({n}, mu));
  const Tensor eps = gaussian(rng, {n});
  for (int t : {10, 50, 150}) {
    const Tensor xt = forward_diffuse(x0, t, eps, s);
    const auto loss = [&](double m, double v) {
      const Tensor e = oracle_epsilon(xt, t, GaussianOracle{Tensor({1}, {m}), v}, s);
      return mean_of(mul(sub(e, eps), sub(e, eps)));
    };
    const double best = loss(mu, sigma2);
    for (double f : {0.9, 1.1}) {
      CHECK(best < loss(mu * f, sigma2));
      CHECK(best < loss(mu, sigma2 * f));
    }
  }
}
