#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "stv/apm.hpp"
#include "stv/cam.hpp"
#include "stv/diffusion.hpp"
#include "stv/rng.hpp"
#include "stv/tensor.hpp"
#include "stv/videoldm.hpp"

namespace stv {

struct GenerationPlan {
  std::size_t total_frames = 16;
  std::size_t F = 16;
  std::size_t F_cond = 8;
  std::string prompt;
  std::uint64_t seed = 0;

  // total_frames must be a positive multiple of F, F_cond <= F.
  void validate() const;
  std::size_t chunks() const { return total_frames / F; }
};

struct StreamState {
  Tensor anchor;     // h x w x c, fixed for the whole run
  Tensor prev_tail;  // last F_cond emitted frames
  std::size_t frames_emitted = 0;
};

// Everything the initialization and streaming stages need. `cam` and `apm`
// are optional so the same driver runs the plain base model.
struct StreamingModel {
  Schedule schedule = make_schedule();
  UNetWeights unet;
  std::optional<CamWeights> cam;
  std::optional<ApmWeights> apm;
  ClipStub clip;
  GuidanceWeights guidance;
  SamplerOptions sampler;
  std::size_t anchor_index = 0;  // frame of the first chunk used as anchor
};

// Toy-scale model with freshly initialised (zero-gated) CAM and APM.
StreamingModel make_streaming_model(const UNetConfig& unet, std::uint64_t seed, bool with_cam = true,
                                    bool with_apm = true);

// Classifier-free guided UNet with fixed contexts for the three branches
// (null, text, text + anchor). Without a full-branch context the anchor
// term vanishes. The skip hook, if any, applies to every branch.
class GuidedUNet final : public NoisePredictor {
 public:
  GuidedUNet(const UNetWeights& w, LayerContexts null_ctx, LayerContexts text_ctx,
             std::optional<LayerContexts> full_ctx, GuidanceWeights g, SkipHook hook = {});
  Tensor predict(const Tensor& x_t, int t) const override;

 private:
  const UNetWeights& w_;
  LayerContexts null_, text_;
  std::optional<LayerContexts> full_;
  GuidanceWeights g_;
  SkipHook hook_;
};

// DDIM generation of one F-frame chunk from pure noise with an arbitrary
// denoiser.
Tensor generate_first_chunk(const Shape& chunk_shape, const NoisePredictor& denoiser, const Schedule& s,
                            const SamplerOptions& opt, RngStream& rng);
// Initialization stage with the model's text-guided base UNet (no CAM).
Tensor generate_first_chunk(const GenerationPlan& plan, const StreamingModel& model, RngStream& rng);

// Training-style anchor choice: uniform over the first `first_frames`
// frames. Inference uses StreamingModel::anchor_index instead.
std::size_t sample_anchor_index(RngStream& rng, std::size_t first_frames = 16);

StreamState start_stream(const Tensor& first_chunk, const GenerationPlan& plan, const StreamingModel& model);

// One autoregressive step: F new frames conditioned on state.prev_tail via
// CAM and on the anchor via APM, with three-branch guidance. Advances `state`.
Tensor generate_next_chunk(StreamState& state, const GenerationPlan& plan, const StreamingModel& model, RngStream& rng);

struct GenerationResult {
  Tensor video;  // total_frames x h x w x c
  std::size_t chunks = 0;
};

// Initialization plus streaming. Chunk i draws from RngStream(seed).split(i).
// `on_chunk` is called after each chunk with its index and the state.
GenerationResult generate_video(const GenerationPlan& plan, const StreamingModel& model,
                                const std::function<void(std::size_t, const StreamState&)>& on_chunk = {});

// ---------------------------------------------------------------------------
// Refinement

struct ChunkPlan {
  std::size_t F_enh = 24;
  std::size_t O = 8;
  std::vector<std::size_t> starts;
  // Frames shared by chunk i and its predecessor (i >= 1).
  std::size_t overlap(std::size_t i) const { return starts[i - 1] + F_enh - starts[i]; }
};

ChunkPlan split_into_chunks(std::size_t total, std::size_t F_enh = 24, std::size_t O = 8);

// Noise for the next chunk: its first `overlap` frames copy the last
// `overlap` frames of `prev`; the rest is drawn from `rng`.
Tensor shared_noise(const Tensor& prev, std::size_t overlap, RngStream& rng);

// Uniform on {0, ..., O}.
std::size_t sample_fthr(RngStream& rng, std::size_t O);

// Overlap frames f = 1..O: from the last O frames of xL when
// f <= O - f_thr, otherwise from the first O frames of xR.
Tensor randomized_blend(const Tensor& xL, const Tensor& xR, std::size_t O, std::size_t f_thr);

enum class BlendMode { naive, shared, randomized };

BlendMode parse_blend_mode(std::string_view name);
std::string_view blend_mode_name(BlendMode mode);

struct RefineOptions {
  int t_prime = 600;
  SamplerOptions sampler;
  std::size_t F_enh = 24;
  std::size_t O = 8;
  // Spatial upscale applied before chunking; identity when empty.
  std::function<Tensor(const Tensor&)> upscale;
};

// Observes the stochastic noise of chunk `chunk` at denoising step `step`
// (0-based). Step -1 is the forward-diffusion noise.
using NoiseObserver = std::function<void(int step, std::size_t chunk, const Tensor& noise)>;

Tensor refine_video(const Tensor& video, BlendMode mode, const NoisePredictor& denoiser, const Schedule& s,
                    const RefineOptions& opt, const RngStream& rng, const NoiseObserver& observer = {});

}  // namespace stv
