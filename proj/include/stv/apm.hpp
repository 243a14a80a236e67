#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stv/tensor.hpp"
#include "stv/videoldm.hpp"

namespace stv {

// Deterministic stand-ins for the CLIP text and image encoders.
struct ClipStub {
  std::uint64_t seed = 0x5eed'c11bull;
  std::size_t dim = 32;
  std::size_t text_tokens = 77;
};

// Fixed random projection of the flattened frame, layer-normalised. 1 x dim.
Tensor stub_clip_image(const Tensor& frame, const ClipStub& clip);
// BOS, one embedding per whitespace-separated word, EOS, then padding;
// text_tokens x dim. The empty prompt is the null-text condition.
Tensor stub_clip_text(const std::string& prompt, const ClipStub& clip);

struct ApmConfig {
  std::size_t expansion_tokens = 16;  // k
  std::size_t dim = 32;
  std::size_t text_tokens = 77;
  std::size_t mlp_inner = 40;
  std::size_t conv_kernel = 3;
  bool image_first = true;
  std::size_t layers = 5;  // one gate per cross-attention layer

  std::size_t mixed_input_tokens() const { return expansion_tokens + text_tokens; }
  // Full-size constants: 1024-d tokens, 1280-wide MLP.
  static ApmConfig full_scale();
  void validate() const;
};

struct ApmWeights {
  ApmConfig config;
  LinearWeights mlp_in;   // dim -> mlp_inner
  LinearWeights mlp_out;  // mlp_inner -> k * dim
  Tensor conv_kernel;     // text_tokens x (k + text_tokens) x conv_kernel
  Tensor conv_bias;       // text_tokens
  std::vector<double> gates;  // alpha_l, zero at initialisation
};

ApmWeights make_apm_weights(const ApmConfig& config, std::uint64_t seed);

// 1 x dim image token -> k x dim pseudo tokens through a one-hidden-layer MLP.
Tensor expand_anchor_tokens(const Tensor& image_token, const ApmWeights& w);
// Concatenate image and text tokens, then map k + 77 -> 77 tokens with a
// 1-D convolution that treats tokens as channels.
Tensor mix_tokens(const Tensor& image_tokens, const Tensor& text_tokens, const ApmWeights& w);
// SiLU(alpha) * x_mixed + x_text.
Tensor blend_context(const Tensor& x_mixed, const Tensor& x_text, double alpha);

// Per-layer cross-attention contexts for a (prompt tokens, anchor) pair.
LayerContexts apm_contexts(const Tensor& text_tokens, const Tensor& anchor, const ApmWeights& w, const ClipStub& clip);

}  // namespace stv
