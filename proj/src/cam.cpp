#include "stv/cam.hpp"

#include <cmath>
#include <string>

#include "stv/error.hpp"

namespace stv {
namespace {

Tensor normal(const RngStream& root, std::uint64_t key, Shape dims, double std) {
  RngStream rng = root.split(key);
  return scale(gaussian(rng, std::move(dims)), std);
}

LinearWeights random_linear(const RngStream& root, std::uint64_t key, std::size_t in, std::size_t out) {
  return {normal(root, key, {in, out}, 1.0 / std::sqrt(static_cast<double>(in))), Tensor::zeros({out})};
}

ConvWeights random_conv(const RngStream& root, std::uint64_t key, std::size_t k, std::size_t in, std::size_t out) {
  return {normal(root, key, {k, k, in, out}, 1.0 / std::sqrt(static_cast<double>(k * k * in))), Tensor::zeros({out})};
}

ConvWeights zero_conv(std::size_t in, std::size_t out) { return {Tensor::zeros({1, 1, in, out}), Tensor::zeros({out})}; }

CondEncoderWeights make_encoder(const RngStream& root, std::size_t kernel, std::size_t in, std::size_t ch) {
  CondEncoderWeights e;
  e.conv1 = random_conv(root, 1, kernel, in, ch);
  e.conv2 = random_conv(root, 2, kernel, ch, ch);
  e.conv3 = random_conv(root, 3, kernel, ch, ch);
  e.norm1 = {Tensor::full({ch}, 1.0), Tensor::zeros({ch})};
  e.norm2 = {Tensor::full({ch}, 1.0), Tensor::zeros({ch})};
  e.zero_conv = zero_conv(ch, ch);
  return e;
}

// (F, h, w, c) -> (h*w, F, c)
Tensor to_pixel_sequences(const Tensor& x) {
  return reshape(permute(x, {1, 2, 0, 3}), {x.dim(1) * x.dim(2), x.dim(0), x.dim(3)});
}

}  // namespace

void CamConfig::validate() const {
  if (cond_frames < 1 || cond_frames > frames) throw DomainError("CamConfig: need 1 <= F_cond <= F");
  if (heads == 0 || norm_groups == 0) throw DomainError("CamConfig: heads and norm_groups must be positive");
}

CamWeights make_cam_weights(const UNetWeights& unet, const CamConfig& config, std::uint64_t seed) {
  config.validate();
  const RngStream root(seed);
  CamWeights w;
  w.config = config;
  w.trunk = unet;
  w.encoder = make_encoder(root.split(1), unet.config.kernel, unet.config.input_channels(), unet.config.level_channels.front());
  const RngStream inj = root.split(2);
  for (std::size_t i = 0; i < unet.config.levels(); ++i) {
    const std::size_t c = unet.config.level_channels[i];
    const RngStream r = inj.split(i);
    SkipInjectionWeights p;
    p.p_in = random_linear(r, 1, c, c);
    p.p_q = random_linear(r, 2, c, c);
    p.p_k = random_linear(r, 3, c, c);
    p.p_v = random_linear(r, 4, c, c);
    p.p_out = {Tensor::zeros({c, c}), Tensor::zeros({c})};
    p.heads = config.heads;
    p.groups = c % config.norm_groups == 0 ? config.norm_groups : c;
    w.inject.push_back(std::move(p));
  }
  return w;
}

Tensor apply_cond_encoder(const CondEncoderWeights& e, const Tensor& frames) {
  Tensor h = apply_conv(e.conv1, frames);
  h = silu(layer_norm(h, e.norm1.gamma, e.norm1.beta));
  h = apply_conv(e.conv2, h);
  h = silu(layer_norm(h, e.norm2.gamma, e.norm2.beta));
  h = apply_conv(e.conv3, h);
  return apply_conv(e.zero_conv, h);
}

CamFeatures encode_condition(const Tensor& cond_frames, const CamWeights& w, const LayerContexts& ctx, int t) {
  if (cond_frames.rank() != 4 || cond_frames.dim(0) != w.config.cond_frames) {
    throw ShapeError("encode_condition: expected " + std::to_string(w.config.cond_frames) + " conditioning frames, got " +
                     shape_str(cond_frames.dims()));
  }
  const Tensor fused = apply_cond_encoder(w.encoder, cond_frames);
  const EncoderOutput enc = run_encoder(w.trunk, cond_frames, t, ctx, &fused);
  CamFeatures out;
  for (const auto& skip : enc.skips) out.features.push_back(to_pixel_sequences(skip));
  return out;
}

Tensor inject_skip(const Tensor& x_sc, const Tensor& x_cam, const SkipInjectionWeights& p) {
  if (x_sc.rank() != 5) throw ShapeError("inject_skip: x_SC must be b x F x h x w x c, got " + shape_str(x_sc.dims()));
  const std::size_t b = x_sc.dim(0), frames = x_sc.dim(1), h = x_sc.dim(2), w = x_sc.dim(3), c = x_sc.dim(4);
  if (x_cam.rank() != 3 || x_cam.dim(0) != b * h * w || x_cam.dim(2) != c) {
    throw ShapeError("inject_skip: x_CAM " + shape_str(x_cam.dims()) + " incompatible with x_SC " + shape_str(x_sc.dims()));
  }
  if (p.p_in.w.dims() != Shape{c, c}) throw ShapeError("inject_skip: projection width differs from skip channels");
  Tensor out(x_sc.dims());
  const std::size_t per_batch = frames * h * w * c;
  for (std::size_t bi = 0; bi < b; ++bi) {
    const Tensor xb = Tensor({frames, h, w, c}, std::vector<double>(x_sc.values().begin() + static_cast<std::ptrdiff_t>(bi * per_batch),
                                                                    x_sc.values().begin() + static_cast<std::ptrdiff_t>((bi + 1) * per_batch)));
    const Tensor xin = apply_linear(p.p_in, group_norm_st(xb, p.groups));
    const Tensor q = apply_linear(p.p_q, to_pixel_sequences(xin));
    const Tensor cam_b = slice(x_cam, 0, bi * h * w, (bi + 1) * h * w);
    const Tensor k = apply_linear(p.p_k, cam_b);
    const Tensor v = apply_linear(p.p_v, cam_b);
    const Tensor att = multi_head_attention(q, k, v, p.heads);
    const Tensor proj = apply_linear(p.p_out, att);
    const Tensor back = permute(reshape(proj, {h, w, frames, c}), {2, 0, 1, 3});
    for (std::size_t i = 0; i < per_batch; ++i) out[bi * per_batch + i] = xb[i] + back[i];
  }
  return out;
}

SkipHook cam_skip_hook(const CamFeatures& features, const CamWeights& w) {
  if (features.features.size() != w.inject.size()) throw ShapeError("cam_skip_hook: feature count differs from skip count");
  return [&features, &w](std::size_t level, const Tensor& skip) {
    Shape batched{1};
    batched.insert(batched.end(), skip.dims().begin(), skip.dims().end());
    const Tensor out = inject_skip(reshape(skip, batched), features.features.at(level), w.inject.at(level));
    return reshape(out, skip.dims());
  };
}

// ---------------------------------------------------------------------------

ConditionMask make_inference_mask(std::size_t frames, std::size_t cond_frames, std::size_t h, std::size_t w, std::size_t c) {
  if (cond_frames < 1 || cond_frames > frames) throw DomainError("make_inference_mask: need 1 <= F_cond <= F");
  ConditionMask mask{Tensor({frames, h, w, c})};
  const std::size_t per_frame = h * w * c;
  for (std::size_t f = cond_frames; f < frames; ++f)
    for (std::size_t i = 0; i < per_frame; ++i) mask.m[f * per_frame + i] = 1.0;
  return mask;
}

ConditionMask make_training_mask(std::size_t frames, std::size_t cond_frames, std::size_t h, std::size_t w, std::size_t c,
                                 RngStream& rng) {
  if (cond_frames < 1 || cond_frames > frames) throw DomainError("make_training_mask: need 1 <= F_cond <= F");
  std::vector<std::size_t> order(frames);
  for (std::size_t i = 0; i < frames; ++i) order[i] = i;
  // Partial Fisher-Yates: the first F - F_cond entries are the chosen frames.
  const std::size_t ones = frames - cond_frames;
  for (std::size_t i = 0; i < ones; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.next_below(frames - i));
    std::swap(order[i], order[j]);
  }
  ConditionMask mask{Tensor({frames, h, w, c})};
  const std::size_t per_frame = h * w * c;
  for (std::size_t i = 0; i < ones; ++i)
    for (std::size_t p = 0; p < per_frame; ++p) mask.m[order[i] * per_frame + p] = 1.0;
  return mask;
}

void validate_mask(const Tensor& m, std::size_t cond_frames) {
  if (m.rank() != 4) throw ShapeError("mask must be F x h x w x c, got " + shape_str(m.dims()));
  const std::size_t frames = m.dim(0), per_frame = m.size() / frames;
  if (cond_frames > frames) throw DomainError("mask: F_cond exceeds frame count");
  std::size_t ones = 0;
  for (std::size_t f = 0; f < frames; ++f) {
    const double v = m[f * per_frame];
    if (v != 0.0 && v != 1.0) throw DomainError("mask: values must be 0 or 1");
    for (std::size_t i = 1; i < per_frame; ++i) {
      if (m[f * per_frame + i] != v) throw DomainError("mask: frame " + std::to_string(f) + " is not constant");
    }
    if (v == 1.0) ++ones;
  }
  if (ones != frames - cond_frames) {
    throw DomainError("mask: " + std::to_string(ones) + " frames set, need exactly F - F_cond = " +
                      std::to_string(frames - cond_frames));
  }
}

AddCondWeights make_add_cond_weights(const UNetWeights& unet, const CamConfig& config, std::uint64_t seed) {
  config.validate();
  const RngStream root(seed);
  AddCondWeights w;
  w.config = config;
  w.trunk = unet;
  w.encoder = make_encoder(root.split(1), unet.config.kernel, 2 * unet.config.channels, unet.config.level_channels.front());
  for (auto c : unet.config.level_channels) w.zero_convs.push_back(zero_conv(c, c));
  return w;
}

std::vector<Tensor> add_cond_inject(const Tensor& masked_and_mask, const AddCondWeights& w, const LayerContexts& ctx, int t) {
  const std::size_t c = w.trunk.config.channels;
  if (masked_and_mask.rank() != 4 || masked_and_mask.dim(3) != 2 * c || masked_and_mask.dim(0) != w.config.frames) {
    throw ShapeError("add_cond_inject: expected " + std::to_string(w.config.frames) + " frames with " +
                     std::to_string(2 * c) + " channels, got " + shape_str(masked_and_mask.dims()));
  }
  validate_mask(slice(masked_and_mask, 3, c, 2 * c), w.config.cond_frames);
  const Tensor masked_video = slice(masked_and_mask, 3, 0, c);
  const Tensor fused = apply_cond_encoder(w.encoder, masked_and_mask);
  const EncoderOutput enc = run_encoder(w.trunk, masked_video, t, ctx, &fused);
  std::vector<Tensor> additions;
  for (std::size_t i = 0; i < enc.skips.size(); ++i) additions.push_back(apply_conv(w.zero_convs[i], enc.skips[i]));
  return additions;
}

SkipHook additive_skip_hook(std::vector<Tensor> additions) {
  return [adds = std::move(additions)](std::size_t level, const Tensor& skip) { return add(skip, adds.at(level)); };
}

Tensor conc_cond_inject(const Tensor& z_t, const Tensor& video, const ConditionMask& mask) {
  if (z_t.dims() != video.dims() || mask.m.dims() != video.dims()) {
    throw ShapeError("conc_cond_inject: z_t " + shape_str(z_t.dims()) + ", video " + shape_str(video.dims()) +
                     " and mask " + shape_str(mask.m.dims()) + " must agree");
  }
  return concat({z_t, mul(video, mask.m), mask.m}, 3);
}

}  // namespace stv
