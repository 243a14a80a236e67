#pragma once

#include <vector>

#include "stv/rng.hpp"
#include "stv/tensor.hpp"

namespace stv {

// Linear beta schedule with precomputed alpha and cumulative alpha_bar.
// Steps are 1-based; alpha_bar(0) is defined as 1 so that t = 0 is the
// clean terminal state of a sampling chain.
struct Schedule {
  int T = 0;
  std::vector<double> beta;       // beta[t - 1] for t = 1..T
  std::vector<double> alpha;      // 1 - beta
  std::vector<double> alpha_bar;  // running products of alpha

  double beta_at(int t) const;
  double alpha_at(int t) const;
  double alpha_bar_at(int t) const;  // t in [0, T]
};

inline constexpr int kDefaultSteps = 1000;
inline constexpr double kDefaultBetaStart = 0.0085;
inline constexpr double kDefaultBetaEnd = 0.0120;

// Betas linearly spaced over T steps, both endpoints included. T = 1
// yields the single value beta0.
Schedule make_schedule(int T = kDefaultSteps, double beta0 = kDefaultBetaStart,
                       double betaT = kDefaultBetaEnd);

struct GuidanceWeights {
  double omega_text = 7.5;
  double omega_anchor = 7.5;
};

// x_t = sqrt(alpha_bar_t) x0 + sqrt(1 - alpha_bar_t) eps.
Tensor forward_diffuse(const Tensor& x0, int t, const Tensor& eps, const Schedule& s);

// Inverse of forward_diffuse for a known noise tensor.
Tensor predict_x0(const Tensor& x_t, const Tensor& eps, int t, const Schedule& s);

struct DdimStep {
  Tensor x_prev;
  // Set when 1 - alpha_bar_prev - sigma^2 went negative and was clamped.
  bool sigma_clamped = false;
};

double ddim_sigma(int t, int t_prev, double eta, const Schedule& s);

// One DDIM update from t to t_prev < t with explicit stochastic noise.
DdimStep ddim_step(const Tensor& x_t, const Tensor& eps_pred, int t, int t_prev, double eta,
                   const Schedule& s, const Tensor& noise);
// Same, drawing the noise from `rng` (no draw when eta == 0).
DdimStep ddim_step(const Tensor& x_t, const Tensor& eps_pred, int t, int t_prev, double eta,
                   const Schedule& s, RngStream& rng);

// `steps` evenly strided timesteps from t_start downwards, largest first,
// followed by the terminal 0. Size is steps + 1.
std::vector<int> ddim_timesteps(int t_start, int steps);

// e_null + w_text (e_text - e_null) + w_anchor (e_full - e_text)
Tensor cfg_epsilon(const Tensor& e_null, const Tensor& e_text, const Tensor& e_full,
                   const GuidanceWeights& w);

// Unconditional epsilon-prediction interface.
class NoisePredictor {
 public:
  virtual ~NoisePredictor() = default;
  virtual Tensor predict(const Tensor& x_t, int t) const = 0;
};

struct SamplerOptions {
  int steps = 50;
  double eta = 1.0;
};

// Runs DDIM from x_start at t_start down to 0.
Tensor ddim_sample(const Tensor& x_start, int t_start, const NoisePredictor& model, const Schedule& s,
                   const SamplerOptions& opt, RngStream& rng);

// Partial diffusion: noise `chunk` to t_prime, then denoise back to 0.
Tensor sdedit_enhance(const Tensor& chunk, int t_prime, const NoisePredictor& model, const Schedule& s,
                      RngStream& rng, const SamplerOptions& opt = {});
// Same, with the forward-diffusion noise supplied by the caller.
Tensor sdedit_enhance(const Tensor& chunk, int t_prime, const Tensor& forward_noise,
                      const NoisePredictor& model, const Schedule& s, RngStream& rng,
                      const SamplerOptions& opt = {});

}  // namespace stv
