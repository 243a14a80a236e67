#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "stv/rng.hpp"

namespace stv {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& dims);
std::size_t shape_numel(const Shape& dims);

// Dense row-major tensor of doubles. Extents are positive; the element
// count always equals the product of the extents.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape dims);
  Tensor(Shape dims, std::vector<double> values);
  Tensor(Shape dims, double fill);

  static Tensor zeros(Shape dims) { return Tensor(std::move(dims)); }
  static Tensor full(Shape dims, double value) { return Tensor(std::move(dims), value); }

  const Shape& dims() const noexcept { return dims_; }
  std::size_t rank() const noexcept { return dims_.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<const double> data() const noexcept { return data_; }
  std::span<double> data() noexcept { return data_; }
  const std::vector<double>& values() const noexcept { return data_; }

  double& operator[](std::size_t i) noexcept { return data_[i]; }
  double operator[](std::size_t i) const noexcept { return data_[i]; }

  // Bounds-checked multi-index access.
  double& at(std::initializer_list<std::size_t> index);
  double at(std::initializer_list<std::size_t> index) const;

  bool all_finite() const noexcept;

 private:
  std::size_t offset(std::initializer_list<std::size_t> index) const;

  Shape dims_;
  std::vector<double> data_;
};

// Equality of every bit, including the sign of zero.
bool bitwise_equal(const Tensor& a, const Tensor& b) noexcept;
double max_abs_diff(const Tensor& a, const Tensor& b);

// ---------------------------------------------------------------------------
// Elementwise

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
// a * sa + b * sb, evaluated elementwise in that order.
Tensor lincomb(const Tensor& a, double sa, const Tensor& b, double sb);
Tensor silu(const Tensor& x);
double silu(double x) noexcept;

// ---------------------------------------------------------------------------
// Shape manipulation

Tensor reshape(const Tensor& x, Shape dims);
Tensor permute(const Tensor& x, const std::vector<std::size_t>& order);
Tensor transpose(const Tensor& x);  // rank-2 only
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
Tensor slice(const Tensor& x, std::size_t axis, std::size_t begin, std::size_t end);
// Writes `src` into `dst` starting at `begin` along `axis`.
void assign_slice(Tensor& dst, const Tensor& src, std::size_t axis, std::size_t begin);

// ---------------------------------------------------------------------------
// Linear algebra and normalization

// Plain matrix product; inner sums accumulate left to right over k.
Tensor matmul(const Tensor& a, const Tensor& b);
// Affine map over the last axis: x[..., in] * w[in, out] + b[out].
// `bias` may be empty.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias);
Tensor softmax_rows(const Tensor& x);

// Normalization over the last axis, no affine.
Tensor layer_norm(const Tensor& x, double eps = 1e-5);
// Normalization over the last axis followed by per-channel gamma/beta.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);

// Group norm whose statistics pool every leading axis (frames and space)
// together with the group's channels. Channels are the last axis.
Tensor group_norm_st(const Tensor& x, std::size_t groups, double eps = 1e-5);
// Per-channel scale and shift over the last axis.
Tensor channel_affine(const Tensor& x, const Tensor& gamma, const Tensor& beta);

// ---------------------------------------------------------------------------
// Convolution and resampling. Frame tensors are F x h x w x c.

// Zero-padded ("same" for stride 1) convolution applied per frame.
// Kernel layout is kh x kw x cin x cout; `bias` may be empty.
Tensor conv2d(const Tensor& x, const Tensor& kernel, const Tensor& bias, std::size_t stride = 1);
// 1-D convolution along the length axis of x[cin, L]; kernel is
// cout x cin x k (k odd), zero padded to keep L. `bias` may be empty.
Tensor conv1d(const Tensor& x, const Tensor& kernel, const Tensor& bias);

Tensor avg_pool2(const Tensor& x);
Tensor upsample_nearest2(const Tensor& x);
// Half-pixel-centred bilinear interpolation per frame.
Tensor bilinear_resize(const Tensor& x, std::size_t out_h, std::size_t out_w);
Tensor zero_pad_spatial(const Tensor& x, std::size_t top, std::size_t bottom, std::size_t left,
                        std::size_t right);

// ---------------------------------------------------------------------------
// Attention over batched sequences: q is B x n x d, k is B x m x d,
// v is B x m x dv. Heads split d and dv evenly. Returns B x n x dv.
Tensor multi_head_attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads);
// The softmax weights used above, shaped B x heads x n x m.
Tensor attention_weights(const Tensor& q, const Tensor& k, std::size_t heads);

// ---------------------------------------------------------------------------
// Random tensors

Tensor gaussian(RngStream& rng, Shape dims);
Tensor uniform(RngStream& rng, Shape dims, double lo, double hi);

}  // namespace stv
