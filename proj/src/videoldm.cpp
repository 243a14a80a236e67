#include "stv/videoldm.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <string>

#include "stv/error.hpp"

namespace stv {

void UNetConfig::validate() const {
  if (frames == 0 || height == 0 || width == 0 || channels == 0) throw ShapeError("UNetConfig: extents must be positive");
  if (levels() < 2) throw ShapeError("UNetConfig: at least two levels are needed for a long-range skip");
  const std::size_t div = std::size_t{1} << levels();
  if (height % div || width % div) {
    throw ShapeError("UNetConfig: spatial extents must be divisible by " + std::to_string(div));
  }
  for (auto c : level_channels) {
    if (c == 0 || c % norm_groups) throw ShapeError("UNetConfig: level channels must be divisible by norm_groups");
    if (c % heads) throw ShapeError("UNetConfig: level channels must be divisible by heads");
  }
  if (kernel % 2 == 0) throw ShapeError("UNetConfig: kernel must be odd");
  if (time_embed_dim < 2 || time_embed_dim % 2) throw ShapeError("UNetConfig: time_embed_dim must be even");
  if (in_channels != 0 && in_channels < channels) throw ShapeError("UNetConfig: in_channels below channels");
}

// ---------------------------------------------------------------------------
// Parameter generation

namespace {

class ParamSource {
 public:
  explicit ParamSource(std::uint64_t seed) : root_(seed) {}

  Tensor normal(Shape dims, double std) {
    RngStream rng = root_.split(next_++);
    Tensor t = gaussian(rng, std::move(dims));
    for (auto& v : t.data()) v *= std;
    return t;
  }

  LinearWeights linear(std::size_t in, std::size_t out) {
    return {normal({in, out}, 1.0 / std::sqrt(static_cast<double>(in))), normal({out}, 0.02)};
  }

  ConvWeights conv(std::size_t k, std::size_t in, std::size_t out) {
    const double fan_in = static_cast<double>(k * k * in);
    return {normal({k, k, in, out}, 1.0 / std::sqrt(fan_in)), normal({out}, 0.02)};
  }

 private:
  RngStream root_;
  std::uint64_t next_ = 0;
};

NormWeights unit_norm(std::size_t c) { return {Tensor::full({c}, 1.0), Tensor::zeros({c})}; }

ResBlockWeights make_res(ParamSource& p, const UNetConfig& cfg, std::size_t in, std::size_t out) {
  ResBlockWeights r;
  r.norm1 = unit_norm(in);
  r.conv1 = p.conv(cfg.kernel, in, out);
  r.time_proj = p.linear(cfg.time_embed_dim, out);
  r.norm2 = unit_norm(out);
  r.conv2 = p.conv(cfg.kernel, out, out);
  if (in != out) r.shortcut = p.linear(in, out);
  return r;
}

AttentionWeights make_attention(ParamSource& p, std::size_t c, std::size_t kv_in) {
  AttentionWeights a;
  a.norm = unit_norm(c);
  a.q = p.linear(c, c);
  a.k = p.linear(kv_in, c);
  a.v = p.linear(kv_in, c);
  a.out = p.linear(c, c);
  return a;
}

UNetBlockWeights make_block(ParamSource& p, const UNetConfig& cfg, std::size_t in, std::size_t out) {
  UNetBlockWeights b;
  b.res = make_res(p, cfg, in, out);
  b.cross = make_attention(p, out, cfg.text_dim);
  b.temporal = make_attention(p, out, out);
  return b;
}

// Normalise with the group count when it divides c, otherwise per channel.
std::size_t groups_for(std::size_t c, std::size_t groups) { return c % groups == 0 ? groups : c; }

Tensor norm_affine(const NormWeights& n, const Tensor& x, std::size_t groups) {
  return channel_affine(group_norm_st(x, groups_for(x.dims().back(), groups)), n.gamma, n.beta);
}

Tensor res_forward(const ResBlockWeights& r, const Tensor& x, const Tensor& temb, std::size_t groups) {
  Tensor h = apply_conv(r.conv1, silu(norm_affine(r.norm1, x, groups)));
  const Tensor tproj = apply_linear(r.time_proj, temb);
  const std::size_t c = h.dims().back();
  for (std::size_t i = 0; i < h.size(); ++i) h[i] += tproj[i % c];
  h = apply_conv(r.conv2, silu(norm_affine(r.norm2, h, groups)));
  const Tensor base = r.shortcut ? apply_linear(*r.shortcut, x) : x;
  return add(base, h);
}

Tensor cross_forward(const AttentionWeights& a, const Tensor& x, const Tensor& context, std::size_t heads) {
  const Shape dims = x.dims();
  const std::size_t c = dims.back();
  const Tensor n = layer_norm(x, a.norm.gamma, a.norm.beta);
  const Tensor q = reshape(apply_linear(a.q, n), {1, x.size() / c, c});
  const Tensor k = apply_linear(a.k, context);
  const Tensor v = apply_linear(a.v, context);
  const Tensor att = multi_head_attention(q, reshape(k, {1, k.dim(0), c}), reshape(v, {1, v.dim(0), c}), heads);
  return add(x, reshape(apply_linear(a.out, att), dims));
}

Tensor temporal_forward(const AttentionWeights& a, const Tensor& x, std::size_t heads) {
  const std::size_t frames = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
  const Tensor n = layer_norm(x, a.norm.gamma, a.norm.beta);
  // (F, h, w, c) -> (h*w, F, c): one sequence per pixel.
  const Tensor seq = reshape(permute(n, {1, 2, 0, 3}), {h * w, frames, c});
  const Tensor att = multi_head_attention(apply_linear(a.q, seq), apply_linear(a.k, seq), apply_linear(a.v, seq), heads);
  const Tensor o = apply_linear(a.out, att);
  return add(x, permute(reshape(o, {h, w, frames, c}), {2, 0, 1, 3}));
}

const Tensor& context_for(const LayerContexts& ctx, std::size_t layer) {
  return ctx.size() == 1 ? ctx.front() : ctx.at(layer);
}

void check_contexts(const UNetConfig& cfg, const LayerContexts& ctx) {
  if (ctx.size() != 1 && ctx.size() != cfg.cross_attention_layers()) {
    throw ShapeError("unet: expected 1 or " + std::to_string(cfg.cross_attention_layers()) +
                     " context tensors, got " + std::to_string(ctx.size()));
  }
  for (const auto& c : ctx) {
    if (c.rank() != 2 || c.dim(1) != cfg.text_dim) {
      throw ShapeError("unet: context must be tokens x " + std::to_string(cfg.text_dim) + ", got " + shape_str(c.dims()));
    }
  }
}

}  // namespace

UNetWeights make_unet_weights(const UNetConfig& config, std::uint64_t seed) {
  config.validate();
  ParamSource p(seed);
  UNetWeights w;
  w.config = config;
  const auto& lc = config.level_channels;
  w.conv_in = p.conv(config.kernel, config.input_channels(), lc.front());
  std::size_t prev = lc.front();
  for (std::size_t i = 0; i < lc.size(); ++i) {
    w.down.push_back(make_block(p, config, prev, lc[i]));
    prev = lc[i];
  }
  w.mid = make_block(p, config, prev, prev);
  w.up.resize(lc.size());
  for (std::size_t i = lc.size(); i-- > 0;) {
    w.up[i] = make_block(p, config, prev + lc[i], lc[i]);
    prev = lc[i];
  }
  w.norm_out = unit_norm(lc.front());
  w.conv_out = p.conv(config.kernel, lc.front(), config.channels);
  return w;
}

UNetWeights widen_input(const UNetWeights& base, std::size_t extra) {
  UNetWeights w = base;
  const std::size_t k = base.conv_in.k.dim(0), cin = base.conv_in.k.dim(2), cout = base.conv_in.k.dim(3);
  Tensor wide({k, k, cin + extra, cout});
  for (std::size_t ky = 0; ky < k; ++ky)
    for (std::size_t kx = 0; kx < k; ++kx)
      for (std::size_t ci = 0; ci < cin; ++ci)
        for (std::size_t co = 0; co < cout; ++co) wide.at({ky, kx, ci, co}) = base.conv_in.k.at({ky, kx, ci, co});
  w.conv_in.k = std::move(wide);
  w.config.in_channels = cin + extra;
  return w;
}

Tensor time_embedding(int t, std::size_t dim) {
  const std::size_t half = dim / 2;
  Tensor e({dim});
  for (std::size_t i = 0; i < half; ++i) {
    const double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) / static_cast<double>(half));
    e[i] = std::sin(static_cast<double>(t) * freq);
    e[half + i] = std::cos(static_cast<double>(t) * freq);
  }
  return e;
}

Tensor apply_linear(const LinearWeights& l, const Tensor& x) { return linear(x, l.w, l.b); }
Tensor apply_conv(const ConvWeights& c, const Tensor& x) { return conv2d(x, c.k, c.b); }

Tensor apply_block(const UNetBlockWeights& blk, const Tensor& x, const Tensor& temb, const Tensor& context,
                   std::size_t heads, std::size_t groups, const Tensor* fuse_after_temporal) {
  Tensor h = res_forward(blk.res, x, temb, groups);
  h = cross_forward(blk.cross, h, context, heads);
  h = temporal_forward(blk.temporal, h, heads);
  if (fuse_after_temporal) h = add(h, *fuse_after_temporal);
  return h;
}

EncoderOutput run_encoder(const UNetWeights& w, const Tensor& x, int t, const LayerContexts& ctx, const Tensor* fuse) {
  const UNetConfig& cfg = w.config;
  check_contexts(cfg, ctx);
  if (x.rank() != 4 || x.dim(1) != cfg.height || x.dim(2) != cfg.width || x.dim(3) != cfg.input_channels()) {
    throw ShapeError("unet: input " + shape_str(x.dims()) + " does not match config (frames x " +
                     std::to_string(cfg.height) + " x " + std::to_string(cfg.width) + " x " +
                     std::to_string(cfg.input_channels()) + ")");
  }
  const Tensor temb = time_embedding(t, cfg.time_embed_dim);
  EncoderOutput out;
  Tensor h = apply_conv(w.conv_in, x);
  for (std::size_t i = 0; i < cfg.levels(); ++i) {
    h = apply_block(w.down[i], h, temb, context_for(ctx, i), cfg.heads, cfg.norm_groups, i == 0 ? fuse : nullptr);
    out.skips.push_back(h);
    h = avg_pool2(h);
  }
  out.hidden = std::move(h);
  return out;
}

Tensor unet_epsilon(const Tensor& x_t, int t, const LayerContexts& ctx, const UNetWeights& w, const SkipHook& hook) {
  const UNetConfig& cfg = w.config;
  if (x_t.rank() != 4 || x_t.dim(0) != cfg.frames) {
    throw ShapeError("unet: expected " + std::to_string(cfg.frames) + " frames, got " + shape_str(x_t.dims()));
  }
  EncoderOutput enc = run_encoder(w, x_t, t, ctx);
  const Tensor temb = time_embedding(t, cfg.time_embed_dim);
  const std::size_t n = cfg.levels();
  Tensor h = apply_block(w.mid, enc.hidden, temb, context_for(ctx, n), cfg.heads, cfg.norm_groups);
  for (std::size_t i = n; i-- > 0;) {
    const Tensor skip = hook ? hook(i, enc.skips[i]) : enc.skips[i];
    if (skip.dims() != enc.skips[i].dims()) throw ShapeError("unet: skip hook changed the skip shape");
    h = concat({upsample_nearest2(h), skip}, 3);
    h = apply_block(w.up[i], h, temb, context_for(ctx, 2 * n - i), cfg.heads, cfg.norm_groups);
  }
  h = silu(norm_affine(w.norm_out, h, cfg.norm_groups));
  return apply_conv(w.conv_out, h);
}

// ---------------------------------------------------------------------------

Tensor oracle_epsilon(const Tensor& x_t, int t, const GaussianOracle& o, const Schedule& s) {
  if (!(o.sigma2 > 0.0)) throw DomainError("oracle_epsilon: sigma2 must be positive");
  if (o.mu.size() != 1 && o.mu.dims() != x_t.dims()) {
    throw ShapeError("oracle_epsilon: mu " + shape_str(o.mu.dims()) + " does not match " + shape_str(x_t.dims()));
  }
  const double ab = s.alpha_bar_at(t);
  const double sab = std::sqrt(ab);
  const double gain = std::sqrt(1.0 - ab) / (ab * o.sigma2 + 1.0 - ab);
  Tensor out(x_t.dims());
  const bool broadcast = o.mu.size() == 1;
  for (std::size_t i = 0; i < x_t.size(); ++i) {
    out[i] = gain * (x_t[i] - sab * (broadcast ? o.mu[0] : o.mu[i]));
  }
  return out;
}

OraclePredictor::OraclePredictor(GaussianOracle oracle, const Schedule& schedule)
    : oracle_(std::move(oracle)), schedule_(schedule) {
  if (!(oracle_.sigma2 > 0.0)) throw DomainError("GaussianOracle: sigma2 must be positive");
}

Tensor OraclePredictor::predict(const Tensor& x_t, int t) const { return oracle_epsilon(x_t, t, oracle_, schedule_); }

// ---------------------------------------------------------------------------

VideoPriorPredictor::Basis VideoPriorPredictor::make_basis(std::size_t n, double length, double jitter) {
  Eigen::MatrixXd k(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const double d = static_cast<double>(i) - static_cast<double>(j);
      k(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          std::exp(-d * d / (2.0 * length * length)) + (i == j ? jitter : 0.0);
    }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(k);
  Basis b;
  b.n = n;
  b.values.resize(n);
  b.vectors.resize(n * n);
  for (std::size_t j = 0; j < n; ++j) {
    b.values[j] = std::max(es.eigenvalues()(static_cast<Eigen::Index>(j)), 0.0);
    for (std::size_t i = 0; i < n; ++i)
      b.vectors[i * n + j] = es.eigenvectors()(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  }
  return b;
}

VideoPriorPredictor::VideoPriorPredictor(const VideoPriorConfig& config, const Schedule& schedule)
    : config_(config), schedule_(schedule) {
  if (config.frames == 0 || config.height == 0 || config.width == 0 || config.channels == 0) {
    throw ShapeError("VideoPriorConfig: extents must be positive");
  }
  if (!(config.sigma2 > 0.0 && config.temporal_length > 0.0 && config.spatial_length > 0.0)) {
    throw DomainError("VideoPriorConfig: variance and length scales must be positive");
  }
  time_ = make_basis(config.frames, config.temporal_length, config.jitter);
  rows_ = make_basis(config.height, config.spatial_length, config.jitter);
  cols_ = make_basis(config.width, config.spatial_length, config.jitter);
}

namespace {

// y[..., j, ...] = sum_i m(i, j) x[..., i, ...] along `axis` (or the
// transpose of m when `transposed`), m stored row-major n x n.
void apply_along(std::vector<double>& data, const Shape& dims, std::size_t axis, const std::vector<double>& m,
                 bool transposed) {
  const std::size_t n = dims[axis];
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= dims[i];
  for (std::size_t i = axis + 1; i < dims.size(); ++i) inner *= dims[i];
  std::vector<double> tmp(n * inner);
  for (std::size_t o = 0; o < outer; ++o) {
    double* block = data.data() + o * n * inner;
    std::fill(tmp.begin(), tmp.end(), 0.0);
    for (std::size_t j = 0; j < n; ++j) {
      double* dst = tmp.data() + j * inner;
      for (std::size_t i = 0; i < n; ++i) {
        const double coef = transposed ? m[j * n + i] : m[i * n + j];
        const double* src = block + i * inner;
        for (std::size_t q = 0; q < inner; ++q) dst[q] += coef * src[q];
      }
    }
    std::copy(tmp.begin(), tmp.end(), block);
  }
}

}  // namespace

Tensor VideoPriorPredictor::predict(const Tensor& x_t, int t) const {
  const Shape expect{config_.frames, config_.height, config_.width, config_.channels};
  if (x_t.dims() != expect) {
    throw ShapeError("VideoPriorPredictor: expected " + shape_str(expect) + ", got " + shape_str(x_t.dims()));
  }
  const double ab = schedule_.alpha_bar_at(t);
  std::vector<double> z(x_t.values());
  // Rotate into the joint eigenbasis (U^T along each axis).
  apply_along(z, expect, 0, time_.vectors, false);
  apply_along(z, expect, 1, rows_.vectors, false);
  apply_along(z, expect, 2, cols_.vectors, false);
  const double root = std::sqrt(1.0 - ab);
  for (std::size_t f = 0; f < config_.frames; ++f)
    for (std::size_t y = 0; y < config_.height; ++y)
      for (std::size_t x = 0; x < config_.width; ++x) {
        const double lam = config_.sigma2 * time_.values[f] * rows_.values[y] * cols_.values[x];
        const double gain = root / (ab * lam + 1.0 - ab);
        double* px = z.data() + ((f * config_.height + y) * config_.width + x) * config_.channels;
        for (std::size_t c = 0; c < config_.channels; ++c) px[c] *= gain;
      }
  apply_along(z, expect, 0, time_.vectors, true);
  apply_along(z, expect, 1, rows_.vectors, true);
  apply_along(z, expect, 2, cols_.vectors, true);
  return Tensor(expect, std::move(z));
}

}  // namespace stv
