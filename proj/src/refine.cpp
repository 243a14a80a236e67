#include <string>

#include "stv/error.hpp"
#include "stv/streaming.hpp"

namespace stv {
namespace {

constexpr std::uint64_t kNoiseKey = 1;
constexpr std::uint64_t kBlendKey = 2;

}  // namespace

ChunkPlan split_into_chunks(std::size_t total, std::size_t F_enh, std::size_t O) {
  if (F_enh == 0 || O >= F_enh) {
    throw DomainError("split_into_chunks: need 0 <= O < F_enh, got O=" + std::to_string(O) +
                      " F_enh=" + std::to_string(F_enh));
  }
  if (total < F_enh) {
    throw DomainError("split_into_chunks: video of " + std::to_string(total) + " frames is shorter than one " +
                      std::to_string(F_enh) + "-frame chunk");
  }
  ChunkPlan plan;
  plan.F_enh = F_enh;
  plan.O = O;
  for (std::size_t s = 0; s + F_enh <= total; s += F_enh - O) plan.starts.push_back(s);
  if (plan.starts.back() + F_enh < total) plan.starts.push_back(total - F_enh);
  return plan;
}

Tensor shared_noise(const Tensor& prev, std::size_t overlap, RngStream& rng) {
  if (prev.rank() < 1 || overlap > prev.dim(0)) {
    throw ShapeError("shared_noise: overlap " + std::to_string(overlap) + " exceeds chunk " + shape_str(prev.dims()));
  }
  const std::size_t frames = prev.dim(0);
  if (overlap == frames) return prev;
  Shape fresh_dims = prev.dims();
  fresh_dims[0] = frames - overlap;
  Tensor fresh = gaussian(rng, fresh_dims);
  if (overlap == 0) return fresh;
  return concat({slice(prev, 0, frames - overlap, frames), fresh}, 0);
}

std::size_t sample_fthr(RngStream& rng, std::size_t O) { return static_cast<std::size_t>(rng.next_below(O + 1)); }

Tensor randomized_blend(const Tensor& xL, const Tensor& xR, std::size_t O, std::size_t f_thr) {
  if (f_thr > O) {
    throw DomainError("randomized_blend: f_thr " + std::to_string(f_thr) + " outside {0.." + std::to_string(O) + "}");
  }
  if (xL.rank() < 1 || xR.rank() != xL.rank() || xL.dim(0) < O || xR.dim(0) < O) {
    throw ShapeError("randomized_blend: chunks " + shape_str(xL.dims()) + " and " + shape_str(xR.dims()) +
                     " cannot share " + std::to_string(O) + " frames");
  }
  for (std::size_t a = 1; a < xL.rank(); ++a) {
    if (xL.dim(a) != xR.dim(a)) throw ShapeError("randomized_blend: frame shapes differ");
  }
  if (O == 0) return Tensor{};  // nothing overlaps
  const std::size_t from_left = O - f_thr;
  const std::size_t left_begin = xL.dim(0) - O;
  if (from_left == 0) return slice(xR, 0, 0, O);
  if (from_left == O) return slice(xL, 0, left_begin, xL.dim(0));
  return concat({slice(xL, 0, left_begin, left_begin + from_left), slice(xR, 0, from_left, O)}, 0);
}

BlendMode parse_blend_mode(std::string_view name) {
  if (name == "naive") return BlendMode::naive;
  if (name == "shared") return BlendMode::shared;
  if (name == "randomized") return BlendMode::randomized;
  throw DomainError("unknown blend mode '" + std::string(name) + "' (expected naive, shared or randomized)");
}

std::string_view blend_mode_name(BlendMode mode) {
  switch (mode) {
    case BlendMode::naive: return "naive";
    case BlendMode::shared: return "shared";
    case BlendMode::randomized: return "randomized";
  }
  return "unknown";
}

Tensor refine_video(const Tensor& video, BlendMode mode, const NoisePredictor& denoiser, const Schedule& s,
                    const RefineOptions& opt, const RngStream& rng, const NoiseObserver& observer) {
  const Tensor v = opt.upscale ? opt.upscale(video) : video;
  if (v.rank() < 2) throw ShapeError("refine_video: expected a frames-first video, got " + shape_str(v.dims()));
  if (opt.t_prime < 1 || opt.t_prime >= s.T) {
    throw DomainError("refine_video: t_prime must satisfy 1 <= t_prime < T (" + std::to_string(s.T) + "), got " +
                      std::to_string(opt.t_prime));
  }
  const ChunkPlan plan = split_into_chunks(v.dim(0), opt.F_enh, opt.O);
  const std::size_t m = plan.starts.size();
  const std::size_t F = plan.F_enh;
  Shape chunk_dims = v.dims();
  chunk_dims[0] = F;

  const RngStream noise_root = rng.split(kNoiseKey);
  const RngStream blend_root = rng.split(kBlendKey);
  const auto draw_noise = [&](int step, std::vector<Tensor>& out) {
    const RngStream step_root = noise_root.split(static_cast<std::uint64_t>(step + 1));
    for (std::size_t i = 0; i < m; ++i) {
      RngStream r = step_root.split(i);
      if (mode == BlendMode::naive || i == 0) {
        out[i] = gaussian(r, chunk_dims);
      } else {
        out[i] = shared_noise(out[i - 1], plan.overlap(i), r);
      }
      if (observer) observer(step, i, out[i]);
    }
  };

  std::vector<Tensor> noise(m), lat(m);
  draw_noise(-1, noise);
  for (std::size_t i = 0; i < m; ++i) {
    lat[i] = forward_diffuse(slice(v, 0, plan.starts[i], plan.starts[i] + F), opt.t_prime, noise[i], s);
  }

  // Global latent of the whole video, used by randomized blending. Shared
  // forward noise makes overlapping chunk latents agree at the start.
  Tensor global;
  if (mode == BlendMode::randomized) {
    global = Tensor(v.dims());
    for (std::size_t i = 0; i < m; ++i) assign_slice(global, lat[i], 0, plan.starts[i]);
  }

  const auto ts = ddim_timesteps(opt.t_prime, opt.sampler.steps);
  for (std::size_t k = 0; k + 1 < ts.size(); ++k) {
    const int t = ts[k], t_prev = ts[k + 1];
    draw_noise(static_cast<int>(k), noise);
    for (std::size_t i = 0; i < m; ++i) {
      const Tensor x = mode == BlendMode::randomized ? slice(global, 0, plan.starts[i], plan.starts[i] + F) : lat[i];
      const Tensor eps = denoiser.predict(x, t);
      lat[i] = ddim_step(x, eps, t, t_prev, opt.sampler.eta, s, noise[i]).x_prev;
    }
    if (mode != BlendMode::randomized) continue;
    RngStream blend_rng = blend_root.split(k);
    assign_slice(global, lat[0], 0, plan.starts[0]);
    for (std::size_t i = 1; i < m; ++i) {
      const std::size_t ov = plan.overlap(i), at = plan.starts[i];
      const std::size_t f_thr = sample_fthr(blend_rng, ov);
      if (ov > 0) assign_slice(global, randomized_blend(slice(global, 0, at, at + ov), lat[i], ov, f_thr), 0, at);
      assign_slice(global, slice(lat[i], 0, ov, F), 0, at + ov);
    }
  }

  if (mode == BlendMode::randomized) return global;

  Tensor out(v.dims());
  const std::size_t frame_size = v.size() / v.dim(0);
  std::vector<std::size_t> count(v.dim(0), 0);
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t base = plan.starts[i];
    for (std::size_t f = 0; f < F; ++f) {
      double* dst = out.data().data() + (base + f) * frame_size;
      const double* src = lat[i].data().data() + f * frame_size;
      const bool accumulate = mode == BlendMode::naive && count[base + f] > 0;
      for (std::size_t p = 0; p < frame_size; ++p) dst[p] = accumulate ? dst[p] + src[p] : src[p];
      count[base + f] = mode == BlendMode::naive ? count[base + f] + 1 : 1;
    }
  }
  for (std::size_t f = 0; f < count.size(); ++f) {
    if (count[f] <= 1) continue;
    const double n = static_cast<double>(count[f]);
    for (std::size_t p = 0; p < frame_size; ++p) out[f * frame_size + p] /= n;
  }
  return out;
}

}  // namespace stv
