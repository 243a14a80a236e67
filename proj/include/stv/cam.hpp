#pragma once

#include <cstdint>
#include <vector>

#include "stv/rng.hpp"
#include "stv/tensor.hpp"
#include "stv/videoldm.hpp"

namespace stv {

struct CamConfig {
  std::size_t frames = 16;      // F
  std::size_t cond_frames = 8;  // F_cond
  std::size_t heads = 2;
  std::size_t norm_groups = 4;
  void validate() const;
};

// Frame-wise condition encoder: three convolutions with layer norm and
// SiLU in between, followed by a zero-initialised 1x1 convolution.
struct CondEncoderWeights {
  ConvWeights conv1, conv2, conv3;
  NormWeights norm1, norm2;
  ConvWeights zero_conv;
};

// Projections of one skip-connection injection site. `p_out` starts at zero.
struct SkipInjectionWeights {
  LinearWeights p_in, p_q, p_k, p_v, p_out;
  std::size_t heads = 2;
  std::size_t groups = 4;
};

struct CamWeights {
  CamConfig config;
  UNetWeights trunk;  // encoder copy, initialised from the base UNet
  CondEncoderWeights encoder;
  std::vector<SkipInjectionWeights> inject;  // one per skip level
};

CamWeights make_cam_weights(const UNetWeights& unet, const CamConfig& config, std::uint64_t seed);

// Per-skip conditioning features x_CAM, each (b*h*w) x F_cond x c.
struct CamFeatures {
  std::vector<Tensor> features;
};

Tensor apply_cond_encoder(const CondEncoderWeights& e, const Tensor& frames);

// Runs the condition encoder and the trunk on the F_cond conditioning
// frames. The trunk sees the frames at timestep `t` with context `ctx`.
CamFeatures encode_condition(const Tensor& cond_frames, const CamWeights& w, const LayerContexts& ctx, int t = 0);

// Temporal cross-attention injection into a skip connection x_SC
// (b x F x h x w x c): group norm, P_in, per-pixel attention with queries
// from the skip and keys/values from x_CAM, P_out, residual add.
Tensor inject_skip(const Tensor& x_sc, const Tensor& x_cam, const SkipInjectionWeights& p);

// Skip hook that applies inject_skip at every level.
SkipHook cam_skip_hook(const CamFeatures& features, const CamWeights& w);

// ---------------------------------------------------------------------------
// Mask-based ablation baselines

// Binary F x h x w x c mask, constant within each frame, with exactly
// F - F_cond frames set to one.
struct ConditionMask {
  Tensor m;
};

// Zeros on the first F_cond frames, ones on the remaining F - F_cond.
ConditionMask make_inference_mask(std::size_t frames, std::size_t cond_frames, std::size_t h, std::size_t w, std::size_t c);
// F - F_cond frames chosen uniformly at random are set to one.
ConditionMask make_training_mask(std::size_t frames, std::size_t cond_frames, std::size_t h, std::size_t w, std::size_t c,
                                 RngStream& rng);
// Throws DomainError unless the mask is binary, frame-constant and sums
// to F - F_cond at every position.
void validate_mask(const Tensor& m, std::size_t cond_frames);

// Additive (ControlNet-style) baseline: encoder over [V * M, M], trunk,
// then a zero-initialised 1x1 convolution per skip level.
struct AddCondWeights {
  CamConfig config;
  UNetWeights trunk;
  CondEncoderWeights encoder;  // 2c input channels
  std::vector<ConvWeights> zero_convs;
};

AddCondWeights make_add_cond_weights(const UNetWeights& unet, const CamConfig& config, std::uint64_t seed);

// `masked_and_mask` is concat([V * M, M]) along channels (F x h x w x 2c).
// Returns one addition per skip level.
std::vector<Tensor> add_cond_inject(const Tensor& masked_and_mask, const AddCondWeights& w, const LayerContexts& ctx,
                                    int t = 0);
SkipHook additive_skip_hook(std::vector<Tensor> additions);

// Channel-concatenation baseline input [z_t, V * M, M] (F x h x w x 3c),
// for a UNet widened with widen_input(base, 2c).
Tensor conc_cond_inject(const Tensor& z_t, const Tensor& video, const ConditionMask& mask);

}  // namespace stv
