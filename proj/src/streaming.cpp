#include "stv/streaming.hpp"

#include <string>

#include "stv/error.hpp"

namespace stv {
namespace {

constexpr std::uint64_t kCamSeedKey = 0xCA11;
constexpr std::uint64_t kApmSeedKey = 0xA9A9;

Shape chunk_shape_of(const GenerationPlan& plan, const UNetConfig& cfg) {
  return {plan.F, cfg.height, cfg.width, cfg.channels};
}

void check_plan_matches(const GenerationPlan& plan, const StreamingModel& model) {
  plan.validate();
  if (plan.F != model.unet.config.frames) {
    throw DomainError("plan chunk length " + std::to_string(plan.F) + " differs from the model's " +
                      std::to_string(model.unet.config.frames) + " frames");
  }
  if (model.cam && model.cam->config.cond_frames != plan.F_cond) {
    throw DomainError("plan F_cond " + std::to_string(plan.F_cond) + " differs from the CAM's " +
                      std::to_string(model.cam->config.cond_frames));
  }
}

}  // namespace

void GenerationPlan::validate() const {
  if (F == 0 || total_frames == 0 || total_frames % F != 0) {
    throw DomainError("frame count must be a positive multiple of " + std::to_string(F) + ", got " +
                      std::to_string(total_frames));
  }
  if (F_cond == 0 || F_cond > F) throw DomainError("need 1 <= F_cond <= F");
}

StreamingModel make_streaming_model(const UNetConfig& unet, std::uint64_t seed, bool with_cam, bool with_apm) {
  unet.validate();
  StreamingModel m;
  m.unet = make_unet_weights(unet, seed);
  m.clip.dim = unet.text_dim;
  m.clip.text_tokens = unet.text_tokens;
  if (with_cam) {
    CamConfig cc;
    cc.frames = unet.frames;
    cc.cond_frames = std::min<std::size_t>(8, unet.frames);
    cc.heads = unet.heads;
    cc.norm_groups = unet.norm_groups;
    m.cam = make_cam_weights(m.unet, cc, mix64(seed ^ kCamSeedKey));
  }
  if (with_apm) {
    ApmConfig ac;
    ac.dim = unet.text_dim;
    ac.text_tokens = unet.text_tokens;
    ac.layers = unet.cross_attention_layers();
    m.apm = make_apm_weights(ac, mix64(seed ^ kApmSeedKey));
  }
  return m;
}

GuidedUNet::GuidedUNet(const UNetWeights& w, LayerContexts null_ctx, LayerContexts text_ctx,
                       std::optional<LayerContexts> full_ctx, GuidanceWeights g, SkipHook hook)
    : w_(w), null_(std::move(null_ctx)), text_(std::move(text_ctx)), full_(std::move(full_ctx)), g_(g),
      hook_(std::move(hook)) {}

Tensor GuidedUNet::predict(const Tensor& x_t, int t) const {
  const Tensor e_null = unet_epsilon(x_t, t, null_, w_, hook_);
  const Tensor e_text = unet_epsilon(x_t, t, text_, w_, hook_);
  if (!full_) return cfg_epsilon(e_null, e_text, e_text, g_);
  const Tensor e_full = unet_epsilon(x_t, t, *full_, w_, hook_);
  return cfg_epsilon(e_null, e_text, e_full, g_);
}

Tensor generate_first_chunk(const Shape& chunk_shape, const NoisePredictor& denoiser, const Schedule& s,
                            const SamplerOptions& opt, RngStream& rng) {
  const Tensor x_T = gaussian(rng, chunk_shape);
  return ddim_sample(x_T, s.T, denoiser, s, opt, rng);
}

Tensor generate_first_chunk(const GenerationPlan& plan, const StreamingModel& model, RngStream& rng) {
  check_plan_matches(plan, model);
  const GuidedUNet guided(model.unet, {stub_clip_text("", model.clip)}, {stub_clip_text(plan.prompt, model.clip)},
                          std::nullopt, model.guidance);
  return generate_first_chunk(chunk_shape_of(plan, model.unet.config), guided, model.schedule, model.sampler, rng);
}

std::size_t sample_anchor_index(RngStream& rng, std::size_t first_frames) {
  if (first_frames == 0) throw DomainError("sample_anchor_index: need at least one candidate frame");
  return static_cast<std::size_t>(rng.next_below(first_frames));
}

StreamState start_stream(const Tensor& first_chunk, const GenerationPlan& plan, const StreamingModel& model) {
  if (first_chunk.rank() != 4 || first_chunk.dim(0) != plan.F) {
    throw ShapeError("start_stream: expected a " + std::to_string(plan.F) + "-frame chunk, got " +
                     shape_str(first_chunk.dims()));
  }
  if (model.anchor_index >= plan.F) throw DomainError("anchor index outside the first chunk");
  StreamState st;
  st.anchor = reshape(slice(first_chunk, 0, model.anchor_index, model.anchor_index + 1),
                      {first_chunk.dim(1), first_chunk.dim(2), first_chunk.dim(3)});
  st.prev_tail = slice(first_chunk, 0, plan.F - plan.F_cond, plan.F);
  st.frames_emitted = plan.F;
  return st;
}

Tensor generate_next_chunk(StreamState& state, const GenerationPlan& plan, const StreamingModel& model, RngStream& rng) {
  check_plan_matches(plan, model);
  if (state.prev_tail.rank() != 4 || state.prev_tail.dim(0) != plan.F_cond) {
    throw ShapeError("generate_next_chunk: state holds no " + std::to_string(plan.F_cond) + "-frame tail");
  }
  const Tensor text = stub_clip_text(plan.prompt, model.clip);
  const Tensor null_text = stub_clip_text("", model.clip);

  LayerContexts null_ctx{null_text}, text_ctx{text};
  std::optional<LayerContexts> full_ctx;
  if (model.apm) {
    const Tensor null_anchor(state.anchor.dims());
    null_ctx = apm_contexts(null_text, null_anchor, *model.apm, model.clip);
    text_ctx = apm_contexts(text, null_anchor, *model.apm, model.clip);
    full_ctx = apm_contexts(text, state.anchor, *model.apm, model.clip);
  }

  std::optional<CamFeatures> features;
  SkipHook hook;
  if (model.cam) {
    features = encode_condition(state.prev_tail, *model.cam, {text}, 0);
    hook = cam_skip_hook(*features, *model.cam);
  }

  const GuidedUNet guided(model.unet, std::move(null_ctx), std::move(text_ctx), std::move(full_ctx), model.guidance, hook);
  Tensor chunk = generate_first_chunk(chunk_shape_of(plan, model.unet.config), guided, model.schedule, model.sampler, rng);
  state.prev_tail = slice(chunk, 0, plan.F - plan.F_cond, plan.F);
  state.frames_emitted += plan.F;
  return chunk;
}

GenerationResult generate_video(const GenerationPlan& plan, const StreamingModel& model,
                                const std::function<void(std::size_t, const StreamState&)>& on_chunk) {
  check_plan_matches(plan, model);
  const RngStream root(plan.seed);
  const UNetConfig& cfg = model.unet.config;
  GenerationResult out;
  out.video = Tensor({plan.total_frames, cfg.height, cfg.width, cfg.channels});

  RngStream rng0 = root.split(0);
  const Tensor first = generate_first_chunk(plan, model, rng0);
  assign_slice(out.video, first, 0, 0);
  StreamState state = start_stream(first, plan, model);
  out.chunks = 1;
  if (on_chunk) on_chunk(0, state);

  for (std::size_t c = 1; c < plan.chunks(); ++c) {
    RngStream rng = root.split(c);
    const std::size_t at = state.frames_emitted;
    const Tensor chunk = generate_next_chunk(state, plan, model, rng);
    assign_slice(out.video, chunk, 0, at);
    ++out.chunks;
    if (on_chunk) on_chunk(c, state);
  }
  return out;
}

}  // namespace stv
