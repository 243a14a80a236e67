#include "stv/apm.hpp"

#include <cmath>
#include <sstream>

#include "stv/error.hpp"

namespace stv {
namespace {

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  return h;
}

enum : std::uint64_t { kImageProjection = 1, kWordTable = 2, kPosition = 3, kBos = 4, kEos = 5, kPad = 6 };

Tensor embedding_row(const RngStream& root, std::uint64_t key, std::size_t dim, double std) {
  RngStream rng = root.split(key);
  Tensor t = gaussian(rng, {1, dim});
  for (auto& v : t.data()) v *= std;
  return t;
}

}  // namespace

Tensor stub_clip_image(const Tensor& frame, const ClipStub& clip) {
  if (frame.rank() != 3) throw ShapeError("stub_clip_image: expected h x w x c frame, got " + shape_str(frame.dims()));
  const RngStream root(clip.seed);
  RngStream rng = root.split(kImageProjection).split(frame.size());
  const Tensor proj = scale(gaussian(rng, {frame.size(), clip.dim}), 1.0 / std::sqrt(static_cast<double>(frame.size())));
  return layer_norm(matmul(reshape(frame, {1, frame.size()}), proj), 1e-12);
}

Tensor stub_clip_text(const std::string& prompt, const ClipStub& clip) {
  const RngStream root(clip.seed);
  std::vector<std::string> words;
  std::istringstream is(prompt);
  for (std::string w; is >> w;) words.push_back(w);
  if (words.size() + 2 > clip.text_tokens) words.resize(clip.text_tokens - 2);

  Tensor out({clip.text_tokens, clip.dim});
  const RngStream words_root = root.split(kWordTable);
  for (std::size_t i = 0; i < clip.text_tokens; ++i) {
    Tensor row;
    if (i == 0) {
      row = embedding_row(root, kBos, clip.dim, 1.0);
    } else if (i <= words.size()) {
      row = embedding_row(words_root, fnv1a(words[i - 1]), clip.dim, 1.0);
    } else if (i == words.size() + 1) {
      row = embedding_row(root, kEos, clip.dim, 1.0);
    } else {
      row = embedding_row(root, kPad, clip.dim, 1.0);
    }
    const Tensor pos = embedding_row(root.split(kPosition), i, clip.dim, 0.1);
    for (std::size_t j = 0; j < clip.dim; ++j) out.at({i, j}) = row[j] + pos[j];
  }
  return out;
}

ApmConfig ApmConfig::full_scale() {
  ApmConfig c;
  c.dim = 1024;
  c.mlp_inner = 1280;
  return c;
}

void ApmConfig::validate() const {
  if (expansion_tokens == 0 || dim == 0 || text_tokens == 0 || mlp_inner == 0) {
    throw ShapeError("ApmConfig: sizes must be positive");
  }
  if (conv_kernel % 2 == 0) throw ShapeError("ApmConfig: conv_kernel must be odd");
}

ApmWeights make_apm_weights(const ApmConfig& config, std::uint64_t seed) {
  config.validate();
  const RngStream root(seed);
  auto normal = [&](std::uint64_t key, Shape dims, double std) {
    RngStream rng = root.split(key);
    return scale(gaussian(rng, std::move(dims)), std);
  };
  const std::size_t k = config.expansion_tokens, d = config.dim, in_tokens = config.mixed_input_tokens();
  ApmWeights w;
  w.config = config;
  w.mlp_in = {normal(1, {d, config.mlp_inner}, 1.0 / std::sqrt(static_cast<double>(d))), Tensor::zeros({config.mlp_inner})};
  w.mlp_out = {normal(2, {config.mlp_inner, k * d}, 1.0 / std::sqrt(static_cast<double>(config.mlp_inner))),
               Tensor::zeros({k * d})};
  w.conv_kernel = normal(3, {config.text_tokens, in_tokens, config.conv_kernel},
                         1.0 / std::sqrt(static_cast<double>(in_tokens * config.conv_kernel)));
  w.conv_bias = Tensor::zeros({config.text_tokens});
  w.gates.assign(config.layers, 0.0);
  return w;
}

Tensor expand_anchor_tokens(const Tensor& image_token, const ApmWeights& w) {
  const ApmConfig& c = w.config;
  if (image_token.dims() != Shape{1, c.dim}) {
    throw ShapeError("expand_anchor_tokens: expected 1 x " + std::to_string(c.dim) + ", got " + shape_str(image_token.dims()));
  }
  const Tensor hidden = silu(apply_linear(w.mlp_in, image_token));
  return reshape(apply_linear(w.mlp_out, hidden), {c.expansion_tokens, c.dim});
}

Tensor mix_tokens(const Tensor& image_tokens, const Tensor& text_tokens, const ApmWeights& w) {
  const ApmConfig& c = w.config;
  if (image_tokens.dims() != Shape{c.expansion_tokens, c.dim} || text_tokens.dims() != Shape{c.text_tokens, c.dim}) {
    throw ShapeError("mix_tokens: expected image " + shape_str({c.expansion_tokens, c.dim}) + " and text " +
                     shape_str({c.text_tokens, c.dim}) + ", got " + shape_str(image_tokens.dims()) + " and " +
                     shape_str(text_tokens.dims()));
  }
  const Tensor joined = c.image_first ? concat({image_tokens, text_tokens}, 0) : concat({text_tokens, image_tokens}, 0);
  return conv1d(joined, w.conv_kernel, w.conv_bias);
}

Tensor blend_context(const Tensor& x_mixed, const Tensor& x_text, double alpha) {
  if (x_mixed.dims() != x_text.dims()) {
    throw ShapeError("blend_context: " + shape_str(x_mixed.dims()) + " vs " + shape_str(x_text.dims()));
  }
  const double g = silu(alpha);
  Tensor out(x_text.dims());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = g * x_mixed[i] + x_text[i];
  return out;
}

LayerContexts apm_contexts(const Tensor& text_tokens, const Tensor& anchor, const ApmWeights& w, const ClipStub& clip) {
  const Tensor mixed = mix_tokens(expand_anchor_tokens(stub_clip_image(anchor, clip), w), text_tokens, w);
  LayerContexts ctx;
  ctx.reserve(w.gates.size());
  for (double alpha : w.gates) ctx.push_back(blend_context(mixed, text_tokens, alpha));
  return ctx;
}

}  // namespace stv
