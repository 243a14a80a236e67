#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "stv/diffusion.hpp"
#include "stv/tensor.hpp"

namespace stv {

// Toy video UNet topology. Spatial extents must be divisible by
// 2^level_channels.size() (one 2x average pool per level).
struct UNetConfig {
  std::size_t frames = 16;
  std::size_t height = 8;
  std::size_t width = 8;
  std::size_t channels = 4;
  // Input channels of the first convolution; 0 means `channels`. Widened
  // for the channel-concatenation ablation.
  std::size_t in_channels = 0;
  std::vector<std::size_t> level_channels{8, 16};
  std::size_t heads = 2;
  std::size_t text_dim = 32;
  std::size_t text_tokens = 77;
  std::size_t time_embed_dim = 16;
  std::size_t norm_groups = 4;
  // Spatial kernel of every convolution. 1 gives a convolution-free
  // variant where each pixel is processed independently.
  std::size_t kernel = 3;

  std::size_t input_channels() const { return in_channels ? in_channels : channels; }
  std::size_t levels() const { return level_channels.size(); }
  // One cross-attention layer per encoder level, the middle block, and
  // each decoder level.
  std::size_t cross_attention_layers() const { return 2 * levels() + 1; }
  void validate() const;
};

struct LinearWeights {
  Tensor w;  // in x out
  Tensor b;  // out
};

struct ConvWeights {
  Tensor k;  // kh x kw x cin x cout
  Tensor b;  // cout
};

struct NormWeights {
  Tensor gamma;
  Tensor beta;
};

struct ResBlockWeights {
  NormWeights norm1;
  ConvWeights conv1;
  LinearWeights time_proj;
  NormWeights norm2;
  ConvWeights conv2;
  std::optional<LinearWeights> shortcut;  // present when channel count changes
};

struct AttentionWeights {
  NormWeights norm;
  LinearWeights q, k, v, out;
};

struct UNetBlockWeights {
  ResBlockWeights res;
  AttentionWeights cross;     // queries from pixels, keys/values from context
  AttentionWeights temporal;  // per-pixel self-attention across frames
};

struct UNetWeights {
  UNetConfig config;
  ConvWeights conv_in;
  std::vector<UNetBlockWeights> down;
  UNetBlockWeights mid;
  std::vector<UNetBlockWeights> up;  // up[i] serves level i
  NormWeights norm_out;
  ConvWeights conv_out;
};

// Deterministic parameters drawn from `seed`; regeneration with the same
// seed is bit-identical.
UNetWeights make_unet_weights(const UNetConfig& config, std::uint64_t seed);

// Widen the first convolution to `extra` more input channels; the new
// kernel slices are zero.
UNetWeights widen_input(const UNetWeights& base, std::size_t extra);

// Cross-attention key/value sources: either a single tensor shared by all
// layers or one tensor per layer (cross_attention_layers() entries).
using LayerContexts = std::vector<Tensor>;

// Called with (level, skip features) before a skip feeds the decoder;
// returns the features to use instead.
using SkipHook = std::function<Tensor(std::size_t, const Tensor&)>;

Tensor time_embedding(int t, std::size_t dim);

// Shared pieces of the forward pass, exposed for the conditioning trunk.
Tensor apply_linear(const LinearWeights& l, const Tensor& x);
Tensor apply_conv(const ConvWeights& c, const Tensor& x);
Tensor apply_block(const UNetBlockWeights& blk, const Tensor& x, const Tensor& temb, const Tensor& context,
                   std::size_t heads, std::size_t groups, const Tensor* fuse_after_temporal = nullptr);

struct EncoderOutput {
  std::vector<Tensor> skips;  // one per level, before any injection
  Tensor hidden;              // input to the middle block
};

// Encoder half. `fuse`, when given, is added to the output of the first
// level's temporal attention.
EncoderOutput run_encoder(const UNetWeights& w, const Tensor& x, int t, const LayerContexts& ctx,
                          const Tensor* fuse = nullptr);

// Full epsilon prediction for an F x h x w x c latent.
Tensor unet_epsilon(const Tensor& x_t, int t, const LayerContexts& ctx, const UNetWeights& w,
                    const SkipHook& hook = {});

// ---------------------------------------------------------------------------
// Analytic denoisers

// Data law N(mu, sigma2 I). `mu` matches the latent shape or has a single
// element that is broadcast.
struct GaussianOracle {
  Tensor mu;
  double sigma2 = 1.0;
};

// Posterior-mean noise predictor for the oracle's data law: the exact
// minimiser of the epsilon-regression objective.
Tensor oracle_epsilon(const Tensor& x_t, int t, const GaussianOracle& o, const Schedule& s);

class OraclePredictor final : public NoisePredictor {
 public:
  OraclePredictor(GaussianOracle oracle, const Schedule& schedule);
  Tensor predict(const Tensor& x_t, int t) const override;

 private:
  GaussianOracle oracle_;
  const Schedule& schedule_;
};

// Zero-mean Gaussian video prior with separable squared-exponential
// covariance over frames, rows and columns (channels independent). Its
// posterior-mean predictor is a temporally and spatially smooth stand-in
// for a pretrained short-video refiner.
struct VideoPriorConfig {
  std::size_t frames = 24;
  std::size_t height = 16;
  std::size_t width = 16;
  std::size_t channels = 1;
  double sigma2 = 1.0;
  double temporal_length = 8.0;
  double spatial_length = 3.0;
  double jitter = 1e-6;
};

class VideoPriorPredictor final : public NoisePredictor {
 public:
  VideoPriorPredictor(const VideoPriorConfig& config, const Schedule& schedule);
  Tensor predict(const Tensor& x_t, int t) const override;
  const VideoPriorConfig& config() const { return config_; }

 private:
  struct Basis {
    std::size_t n = 0;
    std::vector<double> vectors;  // n x n, column j is eigenvector j
    std::vector<double> values;
  };
  static Basis make_basis(std::size_t n, double length, double jitter);

  VideoPriorConfig config_;
  const Schedule& schedule_;
  Basis time_, rows_, cols_;
};

}  // namespace stv
