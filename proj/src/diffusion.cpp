#include "stv/diffusion.hpp"

#include <cmath>
#include <string>

#include "stv/error.hpp"

namespace stv {
namespace {

void check_step(const Schedule& s, int t, const char* what) {
  if (t < 1 || t > s.T) {
    throw DomainError(std::string(what) + ": step " + std::to_string(t) + " outside [1, " + std::to_string(s.T) + "]");
  }
}

}  // namespace

double Schedule::beta_at(int t) const {
  check_step(*this, t, "beta_at");
  return beta[static_cast<std::size_t>(t - 1)];
}

double Schedule::alpha_at(int t) const {
  check_step(*this, t, "alpha_at");
  return alpha[static_cast<std::size_t>(t - 1)];
}

double Schedule::alpha_bar_at(int t) const {
  if (t == 0) return 1.0;
  check_step(*this, t, "alpha_bar_at");
  return alpha_bar[static_cast<std::size_t>(t - 1)];
}

Schedule make_schedule(int T, double beta0, double betaT) {
  if (T < 1) throw DomainError("make_schedule: T must be at least 1");
  if (!(beta0 > 0.0 && beta0 <= betaT && betaT < 1.0)) {
    throw DomainError("make_schedule: need 0 < beta0 <= betaT < 1");
  }
  Schedule s;
  s.T = T;
  s.beta.resize(static_cast<std::size_t>(T));
  s.alpha.resize(s.beta.size());
  s.alpha_bar.resize(s.beta.size());
  double prod = 1.0;
  for (int i = 0; i < T; ++i) {
    const double frac = T == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(T - 1);
    const auto k = static_cast<std::size_t>(i);
    s.beta[k] = beta0 + (betaT - beta0) * frac;
    s.alpha[k] = 1.0 - s.beta[k];
    prod *= s.alpha[k];
    s.alpha_bar[k] = prod;
  }
  return s;
}

Tensor forward_diffuse(const Tensor& x0, int t, const Tensor& eps, const Schedule& s) {
  check_step(s, t, "forward_diffuse");
  const double ab = s.alpha_bar_at(t);
  return lincomb(x0, std::sqrt(ab), eps, std::sqrt(1.0 - ab));
}

Tensor predict_x0(const Tensor& x_t, const Tensor& eps, int t, const Schedule& s) {
  check_step(s, t, "predict_x0");
  const double ab = s.alpha_bar_at(t);
  const double inv = 1.0 / std::sqrt(ab);
  return lincomb(x_t, inv, eps, -std::sqrt(1.0 - ab) * inv);
}

double ddim_sigma(int t, int t_prev, double eta, const Schedule& s) {
  const double ab = s.alpha_bar_at(t);
  const double ab_prev = s.alpha_bar_at(t_prev);
  return eta * std::sqrt((1.0 - ab_prev) / (1.0 - ab)) * std::sqrt(1.0 - ab / ab_prev);
}

DdimStep ddim_step(const Tensor& x_t, const Tensor& eps_pred, int t, int t_prev, double eta,
                   const Schedule& s, const Tensor& noise) {
  check_step(s, t, "ddim_step");
  if (t_prev < 0 || t_prev >= t) {
    throw DomainError("ddim_step: need t > t_prev >= 0, got t=" + std::to_string(t) +
                      " t_prev=" + std::to_string(t_prev));
  }
  if (x_t.dims() != eps_pred.dims()) throw ShapeError("ddim_step: eps_pred shape differs from x_t");
  const double ab = s.alpha_bar_at(t);
  const double ab_prev = s.alpha_bar_at(t_prev);
  const double sigma = ddim_sigma(t, t_prev, eta, s);
  double dir2 = 1.0 - ab_prev - sigma * sigma;
  DdimStep out;
  if (dir2 < 0.0) {
    dir2 = 0.0;
    out.sigma_clamped = true;
  }
  const double c_x0 = std::sqrt(ab_prev);
  const double c_dir = std::sqrt(dir2);
  const double inv_sqrt_ab = 1.0 / std::sqrt(ab);
  const double sqrt_one_minus_ab = std::sqrt(1.0 - ab);
  const bool stochastic = sigma != 0.0;
  if (stochastic && noise.dims() != x_t.dims()) throw ShapeError("ddim_step: noise shape differs from x_t");

  out.x_prev = Tensor(x_t.dims());
  for (std::size_t i = 0; i < x_t.size(); ++i) {
    const double x0_hat = (x_t[i] - sqrt_one_minus_ab * eps_pred[i]) * inv_sqrt_ab;
    double v = c_x0 * x0_hat + c_dir * eps_pred[i];
    if (stochastic) v += sigma * noise[i];
    out.x_prev[i] = v;
  }
  return out;
}

DdimStep ddim_step(const Tensor& x_t, const Tensor& eps_pred, int t, int t_prev, double eta,
                   const Schedule& s, RngStream& rng) {
  if (eta == 0.0) return ddim_step(x_t, eps_pred, t, t_prev, eta, s, Tensor{});
  const Tensor noise = gaussian(rng, x_t.dims());
  return ddim_step(x_t, eps_pred, t, t_prev, eta, s, noise);
}

std::vector<int> ddim_timesteps(int t_start, int steps) {
  if (steps < 1 || steps > t_start) {
    throw DomainError("ddim_timesteps: need 1 <= steps <= t_start, got steps=" + std::to_string(steps) +
                      " t_start=" + std::to_string(t_start));
  }
  std::vector<int> ts;
  ts.reserve(static_cast<std::size_t>(steps) + 1);
  const long long start = t_start, n = steps;
  for (long long i = 0; i < n; ++i) ts.push_back(static_cast<int>(start - (2 * i * start + n) / (2 * n)));
  ts.push_back(0);
  return ts;
}

Tensor cfg_epsilon(const Tensor& e_null, const Tensor& e_text, const Tensor& e_full, const GuidanceWeights& w) {
  if (e_null.dims() != e_text.dims() || e_null.dims() != e_full.dims()) {
    throw ShapeError("cfg_epsilon: branch shapes differ: " + shape_str(e_null.dims()) + ", " +
                     shape_str(e_text.dims()) + ", " + shape_str(e_full.dims()));
  }
  Tensor out(e_null.dims());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = e_null[i] + w.omega_text * (e_text[i] - e_null[i]) + w.omega_anchor * (e_full[i] - e_text[i]);
  }
  return out;
}

Tensor ddim_sample(const Tensor& x_start, int t_start, const NoisePredictor& model, const Schedule& s,
                   const SamplerOptions& opt, RngStream& rng) {
  const auto ts = ddim_timesteps(t_start, opt.steps);
  Tensor x = x_start;
  for (std::size_t i = 0; i + 1 < ts.size(); ++i) {
    const Tensor eps = model.predict(x, ts[i]);
    x = ddim_step(x, eps, ts[i], ts[i + 1], opt.eta, s, rng).x_prev;
  }
  return x;
}

Tensor sdedit_enhance(const Tensor& chunk, int t_prime, const Tensor& forward_noise, const NoisePredictor& model,
                      const Schedule& s, RngStream& rng, const SamplerOptions& opt) {
  if (t_prime < 1 || t_prime >= s.T) {
    throw DomainError("sdedit_enhance: t_prime must satisfy 1 <= t_prime < T (" + std::to_string(s.T) + "), got " +
                      std::to_string(t_prime));
  }
  const Tensor x_start = forward_diffuse(chunk, t_prime, forward_noise, s);
  return ddim_sample(x_start, t_prime, model, s, opt, rng);
}

Tensor sdedit_enhance(const Tensor& chunk, int t_prime, const NoisePredictor& model, const Schedule& s,
                      RngStream& rng, const SamplerOptions& opt) {
  if (t_prime < 1 || t_prime >= s.T) {
    throw DomainError("sdedit_enhance: t_prime must satisfy 1 <= t_prime < T (" + std::to_string(s.T) + "), got " +
                      std::to_string(t_prime));
  }
  const Tensor noise = gaussian(rng, chunk.dims());
  return sdedit_enhance(chunk, t_prime, noise, model, s, rng, opt);
}

}  // namespace stv
