#include "stv/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <sstream>

#include "stv/error.hpp"

namespace stv {
namespace {

void require_same_dims(const Tensor& a, const Tensor& b, const char* op) {
  if (a.dims() != b.dims()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.dims()) + " vs " +
                     shape_str(b.dims()));
  }
}

void require_rank(const Tensor& x, std::size_t rank, const char* op) {
  if (x.rank() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                     shape_str(x.dims()));
  }
}

std::size_t inner_extent(const Shape& dims, std::size_t from) {
  std::size_t n = 1;
  for (std::size_t i = from; i < dims.size(); ++i) n *= dims[i];
  return n;
}

}  // namespace

std::string shape_str(const Shape& dims) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < dims.size(); ++i) os << (i ? "x" : "") << dims[i];
  os << ']';
  return os.str();
}

std::size_t shape_numel(const Shape& dims) {
  std::size_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

Tensor::Tensor(Shape dims) : Tensor(std::move(dims), 0.0) {}

Tensor::Tensor(Shape dims, double fill) : dims_(std::move(dims)) {
  for (auto d : dims_) {
    if (d == 0) throw ShapeError("tensor extents must be positive, got " + shape_str(dims_));
  }
  data_.assign(shape_numel(dims_), fill);
}

Tensor::Tensor(Shape dims, std::vector<double> values) : dims_(std::move(dims)), data_(std::move(values)) {
  for (auto d : dims_) {
    if (d == 0) throw ShapeError("tensor extents must be positive, got " + shape_str(dims_));
  }
  if (shape_numel(dims_) != data_.size()) {
    throw ShapeError("tensor " + shape_str(dims_) + " needs " + std::to_string(shape_numel(dims_)) +
                     " values, got " + std::to_string(data_.size()));
  }
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= dims_.size()) throw ShapeError("axis out of range for " + shape_str(dims_));
  return dims_[axis];
}

std::size_t Tensor::offset(std::initializer_list<std::size_t> index) const {
  if (index.size() != dims_.size()) throw ShapeError("index rank mismatch for " + shape_str(dims_));
  std::size_t off = 0;
  std::size_t axis = 0;
  for (auto i : index) {
    if (i >= dims_[axis]) throw ShapeError("index out of range for " + shape_str(dims_));
    off = off * dims_[axis] + i;
    ++axis;
  }
  return off;
}

double& Tensor::at(std::initializer_list<std::size_t> index) { return data_[offset(index)]; }
double Tensor::at(std::initializer_list<std::size_t> index) const { return data_[offset(index)]; }

bool Tensor::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

bool bitwise_equal(const Tensor& a, const Tensor& b) noexcept {
  return a.dims() == b.dims() &&
         std::memcmp(a.values().data(), b.values().data(), a.size() * sizeof(double)) == 0;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  require_same_dims(a, b, "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

// ---------------------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_dims(a, b, "add");
  Tensor out(a.dims());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_dims(a, b, "sub");
  Tensor out(a.dims());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_dims(a, b, "mul");
  Tensor out(a.dims());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
  return out;
}

Tensor scale(const Tensor& a, double s) {
  Tensor out(a.dims());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * s;
  return out;
}

Tensor lincomb(const Tensor& a, double sa, const Tensor& b, double sb) {
  require_same_dims(a, b, "lincomb");
  Tensor out(a.dims());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * sa + b[i] * sb;
  return out;
}

double silu(double x) noexcept { return x / (1.0 + std::exp(-x)); }

Tensor silu(const Tensor& x) {
  Tensor out(x.dims());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = silu(x[i]);
  return out;
}

// ---------------------------------------------------------------------------

Tensor reshape(const Tensor& x, Shape dims) {
  if (shape_numel(dims) != x.size()) {
    throw ShapeError("reshape: cannot view " + shape_str(x.dims()) + " as " + shape_str(dims));
  }
  return Tensor(std::move(dims), x.values());
}

Tensor permute(const Tensor& x, const std::vector<std::size_t>& order) {
  const std::size_t r = x.rank();
  if (order.size() != r) throw ShapeError("permute: order rank mismatch for " + shape_str(x.dims()));
  std::vector<bool> seen(r, false);
  Shape out_dims(r);
  for (std::size_t i = 0; i < r; ++i) {
    if (order[i] >= r || seen[order[i]]) throw ShapeError("permute: invalid axis order");
    seen[order[i]] = true;
    out_dims[i] = x.dims()[order[i]];
  }
  std::vector<std::size_t> in_strides(r, 1);
  for (std::size_t i = r; i-- > 1;) in_strides[i - 1] = in_strides[i] * x.dims()[i];
  std::vector<std::size_t> stride(r);
  for (std::size_t i = 0; i < r; ++i) stride[i] = in_strides[order[i]];

  Tensor out(out_dims);
  std::vector<std::size_t> idx(r, 0);
  std::size_t src = 0;
  for (std::size_t n = 0; n < out.size(); ++n) {
    out[n] = x[src];
    for (std::size_t a = r; a-- > 0;) {
      ++idx[a];
      src += stride[a];
      if (idx[a] < out_dims[a]) break;
      src -= stride[a] * out_dims[a];
      idx[a] = 0;
    }
  }
  return out;
}

Tensor transpose(const Tensor& x) {
  require_rank(x, 2, "transpose");
  return permute(x, {1, 0});
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const Shape& ref = parts.front().dims();
  if (axis >= ref.size()) throw ShapeError("concat: axis out of range for " + shape_str(ref));
  Shape out_dims = ref;
  out_dims[axis] = 0;
  for (const auto& p : parts) {
    if (p.rank() != ref.size()) throw ShapeError("concat: rank mismatch");
    for (std::size_t i = 0; i < ref.size(); ++i) {
      if (i != axis && p.dims()[i] != ref[i]) {
        throw ShapeError("concat: " + shape_str(p.dims()) + " incompatible with " + shape_str(ref));
      }
    }
    out_dims[axis] += p.dims()[axis];
  }
  Tensor out(out_dims);
  const std::size_t outer = inner_extent(Shape(ref.begin(), ref.begin() + axis), 0);
  const std::size_t inner = inner_extent(ref, axis + 1);
  const std::size_t out_row = out_dims[axis] * inner;
  std::size_t col = 0;
  for (const auto& p : parts) {
    const std::size_t row = p.dims()[axis] * inner;
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(p.values().data() + o * row, row, out.data().data() + o * out_row + col);
    }
    col += row;
  }
  return out;
}

Tensor slice(const Tensor& x, std::size_t axis, std::size_t begin, std::size_t end) {
  if (axis >= x.rank()) throw ShapeError("slice: axis out of range for " + shape_str(x.dims()));
  if (begin >= end || end > x.dims()[axis]) {
    throw ShapeError("slice: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                     ") invalid for axis " + std::to_string(axis) + " of " + shape_str(x.dims()));
  }
  Shape out_dims = x.dims();
  out_dims[axis] = end - begin;
  Tensor out(out_dims);
  const std::size_t outer = inner_extent(Shape(x.dims().begin(), x.dims().begin() + axis), 0);
  const std::size_t inner = inner_extent(x.dims(), axis + 1);
  const std::size_t in_row = x.dims()[axis] * inner;
  const std::size_t out_row = out_dims[axis] * inner;
  for (std::size_t o = 0; o < outer; ++o) {
    std::copy_n(x.values().data() + o * in_row + begin * inner, out_row, out.data().data() + o * out_row);
  }
  return out;
}

void assign_slice(Tensor& dst, const Tensor& src, std::size_t axis, std::size_t begin) {
  if (axis >= dst.rank() || src.rank() != dst.rank()) throw ShapeError("assign_slice: rank mismatch");
  for (std::size_t i = 0; i < dst.rank(); ++i) {
    const bool ok = i == axis ? begin + src.dims()[i] <= dst.dims()[i] : src.dims()[i] == dst.dims()[i];
    if (!ok) {
      throw ShapeError("assign_slice: " + shape_str(src.dims()) + " does not fit " + shape_str(dst.dims()) +
                       " at offset " + std::to_string(begin));
    }
  }
  const std::size_t outer = inner_extent(Shape(dst.dims().begin(), dst.dims().begin() + axis), 0);
  const std::size_t inner = inner_extent(dst.dims(), axis + 1);
  const std::size_t dst_row = dst.dims()[axis] * inner;
  const std::size_t src_row = src.dims()[axis] * inner;
  for (std::size_t o = 0; o < outer; ++o) {
    std::copy_n(src.values().data() + o * src_row, src_row, dst.data().data() + o * dst_row + begin * inner);
  }
}

// ---------------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw ShapeError("matmul: inner extents differ, " + shape_str(a.dims()) + " x " + shape_str(b.dims()));
  }
  Tensor out({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    double* row = out.data().data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      const double* brow = b.values().data() + p * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += av * brow[j];
    }
  }
  return out;
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias) {
  require_rank(w, 2, "linear");
  if (x.rank() == 0 || x.dims().back() != w.dim(0)) {
    throw ShapeError("linear: input " + shape_str(x.dims()) + " incompatible with weight " + shape_str(w.dims()));
  }
  const std::size_t in = w.dim(0), outc = w.dim(1);
  if (!bias.empty() && bias.size() != outc) throw ShapeError("linear: bias length mismatch");
  Shape out_dims = x.dims();
  out_dims.back() = outc;
  Tensor out(out_dims);
  const std::size_t rows = x.size() / in;
  for (std::size_t r = 0; r < rows; ++r) {
    double* o = out.data().data() + r * outc;
    if (!bias.empty()) std::copy_n(bias.values().data(), outc, o);
    const double* xi = x.values().data() + r * in;
    for (std::size_t p = 0; p < in; ++p) {
      const double xv = xi[p];
      const double* wrow = w.values().data() + p * outc;
      for (std::size_t j = 0; j < outc; ++j) o[j] += xv * wrow[j];
    }
  }
  return out;
}

Tensor softmax_rows(const Tensor& x) {
  if (x.rank() == 0) throw ShapeError("softmax_rows: scalar input");
  const std::size_t c = x.dims().back();
  const std::size_t rows = x.size() / c;
  Tensor out(x.dims());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = x.values().data() + r * c;
    double* o = out.data().data() + r * c;
    const double mx = *std::max_element(in, in + c);
    double sum = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      o[j] = std::exp(in[j] - mx);
      sum += o[j];
    }
    for (std::size_t j = 0; j < c; ++j) o[j] /= sum;
  }
  return out;
}

Tensor layer_norm(const Tensor& x, double eps) {
  if (x.rank() == 0) throw ShapeError("layer_norm: scalar input");
  const std::size_t c = x.dims().back();
  const std::size_t rows = x.size() / c;
  Tensor out(x.dims());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = x.values().data() + r * c;
    double* o = out.data().data() + r * c;
    double mean = 0.0;
    for (std::size_t j = 0; j < c; ++j) mean += in[j];
    mean /= static_cast<double>(c);
    double var = 0.0;
    for (std::size_t j = 0; j < c; ++j) var += (in[j] - mean) * (in[j] - mean);
    var /= static_cast<double>(c);
    const double inv = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < c; ++j) o[j] = (in[j] - mean) * inv;
  }
  return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  return channel_affine(layer_norm(x, eps), gamma, beta);
}

Tensor group_norm_st(const Tensor& x, std::size_t groups, double eps) {
  if (x.rank() < 2) throw ShapeError("group_norm_st: need channels plus at least one pooled axis");
  const std::size_t c = x.dims().back();
  if (groups == 0 || c % groups != 0) {
    throw ShapeError("group_norm_st: " + std::to_string(c) + " channels not divisible into " +
                     std::to_string(groups) + " groups");
  }
  const std::size_t cg = c / groups;
  const std::size_t positions = x.size() / c;
  const double count = static_cast<double>(positions * cg);
  Tensor out(x.dims());
  for (std::size_t g = 0; g < groups; ++g) {
    const std::size_t c0 = g * cg;
    double mean = 0.0;
    for (std::size_t p = 0; p < positions; ++p)
      for (std::size_t j = 0; j < cg; ++j) mean += x[p * c + c0 + j];
    mean /= count;
    double var = 0.0;
    for (std::size_t p = 0; p < positions; ++p)
      for (std::size_t j = 0; j < cg; ++j) {
        const double d = x[p * c + c0 + j] - mean;
        var += d * d;
      }
    var /= count;
    const double inv = 1.0 / std::sqrt(var + eps);
    for (std::size_t p = 0; p < positions; ++p)
      for (std::size_t j = 0; j < cg; ++j) out[p * c + c0 + j] = (x[p * c + c0 + j] - mean) * inv;
  }
  return out;
}

Tensor channel_affine(const Tensor& x, const Tensor& gamma, const Tensor& beta) {
  const std::size_t c = x.dims().back();
  if (gamma.size() != c || beta.size() != c) throw ShapeError("channel_affine: parameter length mismatch");
  Tensor out(x.dims());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * gamma[i % c] + beta[i % c];
  return out;
}

// ---------------------------------------------------------------------------

Tensor conv2d(const Tensor& x, const Tensor& kernel, const Tensor& bias, std::size_t stride) {
  require_rank(x, 4, "conv2d");
  require_rank(kernel, 4, "conv2d kernel");
  const std::size_t frames = x.dim(0), h = x.dim(1), w = x.dim(2), cin = x.dim(3);
  const std::size_t kh = kernel.dim(0), kw = kernel.dim(1), cout = kernel.dim(3);
  if (kernel.dim(2) != cin) {
    throw ShapeError("conv2d: kernel " + shape_str(kernel.dims()) + " expects " + std::to_string(kernel.dim(2)) +
                     " input channels, got " + shape_str(x.dims()));
  }
  if (kh % 2 == 0 || kw % 2 == 0) throw ShapeError("conv2d: kernel extents must be odd");
  if (stride == 0) throw ShapeError("conv2d: stride must be positive");
  if (!bias.empty() && bias.size() != cout) throw ShapeError("conv2d: bias length mismatch");
  const std::size_t ph = kh / 2, pw = kw / 2;
  const std::size_t oh = (h - 1) / stride + 1, ow = (w - 1) / stride + 1;
  Tensor out({frames, oh, ow, cout});
  const double* in = x.values().data();
  const double* k = kernel.values().data();
  for (std::size_t f = 0; f < frames; ++f) {
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        double* o = out.data().data() + ((f * oh + oy) * ow + ox) * cout;
        if (!bias.empty()) std::copy_n(bias.values().data(), cout, o);
        for (std::size_t ky = 0; ky < kh; ++ky) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + ky) - static_cast<std::ptrdiff_t>(ph);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
          for (std::size_t kx = 0; kx < kw; ++kx) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * stride + kx) - static_cast<std::ptrdiff_t>(pw);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
            const double* px = in + ((f * h + static_cast<std::size_t>(iy)) * w + static_cast<std::size_t>(ix)) * cin;
            const double* kt = k + (ky * kw + kx) * cin * cout;
            for (std::size_t ci = 0; ci < cin; ++ci) {
              const double v = px[ci];
              const double* krow = kt + ci * cout;
              for (std::size_t co = 0; co < cout; ++co) o[co] += v * krow[co];
            }
          }
        }
      }
    }
  }
  return out;
}

Tensor conv1d(const Tensor& x, const Tensor& kernel, const Tensor& bias) {
  require_rank(x, 2, "conv1d");
  require_rank(kernel, 3, "conv1d kernel");
  const std::size_t cin = x.dim(0), len = x.dim(1);
  const std::size_t cout = kernel.dim(0), ks = kernel.dim(2);
  if (kernel.dim(1) != cin) {
    throw ShapeError("conv1d: kernel " + shape_str(kernel.dims()) + " incompatible with input " + shape_str(x.dims()));
  }
  if (ks % 2 == 0) throw ShapeError("conv1d: kernel size must be odd");
  if (!bias.empty() && bias.size() != cout) throw ShapeError("conv1d: bias length mismatch");
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(ks / 2);
  Tensor out({cout, len});
  for (std::size_t co = 0; co < cout; ++co) {
    double* o = out.data().data() + co * len;
    for (std::size_t l = 0; l < len; ++l) {
      double acc = bias.empty() ? 0.0 : bias[co];
      for (std::size_t ci = 0; ci < cin; ++ci) {
        const double* xi = x.values().data() + ci * len;
        const double* kk = kernel.values().data() + (co * cin + ci) * ks;
        for (std::size_t t = 0; t < ks; ++t) {
          const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(l) + static_cast<std::ptrdiff_t>(t) - pad;
          if (src < 0 || src >= static_cast<std::ptrdiff_t>(len)) continue;
          acc += kk[t] * xi[src];
        }
      }
      o[l] = acc;
    }
  }
  return out;
}

Tensor avg_pool2(const Tensor& x) {
  require_rank(x, 4, "avg_pool2");
  const std::size_t frames = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
  if (h % 2 || w % 2) throw ShapeError("avg_pool2: odd spatial extent in " + shape_str(x.dims()));
  Tensor out({frames, h / 2, w / 2, c});
  for (std::size_t f = 0; f < frames; ++f)
    for (std::size_t y = 0; y < h / 2; ++y)
      for (std::size_t xx = 0; xx < w / 2; ++xx)
        for (std::size_t ch = 0; ch < c; ++ch) {
          const double s = x.at({f, 2 * y, 2 * xx, ch}) + x.at({f, 2 * y, 2 * xx + 1, ch}) +
                           x.at({f, 2 * y + 1, 2 * xx, ch}) + x.at({f, 2 * y + 1, 2 * xx + 1, ch});
          out.at({f, y, xx, ch}) = 0.25 * s;
        }
  return out;
}

Tensor upsample_nearest2(const Tensor& x) {
  require_rank(x, 4, "upsample_nearest2");
  const std::size_t frames = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
  Tensor out({frames, 2 * h, 2 * w, c});
  for (std::size_t f = 0; f < frames; ++f)
    for (std::size_t y = 0; y < 2 * h; ++y)
      for (std::size_t xx = 0; xx < 2 * w; ++xx)
        std::copy_n(x.values().data() + ((f * h + y / 2) * w + xx / 2) * c, c,
                    out.data().data() + ((f * 2 * h + y) * 2 * w + xx) * c);
  return out;
}

Tensor bilinear_resize(const Tensor& x, std::size_t out_h, std::size_t out_w) {
  require_rank(x, 4, "bilinear_resize");
  if (out_h == 0 || out_w == 0) throw ShapeError("bilinear_resize: zero target extent");
  const std::size_t frames = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
  if (h == out_h && w == out_w) return x;
  Tensor out({frames, out_h, out_w, c});
  const double sy = static_cast<double>(h) / static_cast<double>(out_h);
  const double sx = static_cast<double>(w) / static_cast<double>(out_w);
  for (std::size_t y = 0; y < out_h; ++y) {
    const double fy = std::clamp((static_cast<double>(y) + 0.5) * sy - 0.5, 0.0, static_cast<double>(h - 1));
    const std::size_t y0 = static_cast<std::size_t>(fy);
    const std::size_t y1 = std::min(y0 + 1, h - 1);
    const double wy = fy - static_cast<double>(y0);
    for (std::size_t xx = 0; xx < out_w; ++xx) {
      const double fx = std::clamp((static_cast<double>(xx) + 0.5) * sx - 0.5, 0.0, static_cast<double>(w - 1));
      const std::size_t x0 = static_cast<std::size_t>(fx);
      const std::size_t x1 = std::min(x0 + 1, w - 1);
      const double wx = fx - static_cast<double>(x0);
      for (std::size_t f = 0; f < frames; ++f)
        for (std::size_t ch = 0; ch < c; ++ch) {
          const double top = x.at({f, y0, x0, ch}) * (1 - wx) + x.at({f, y0, x1, ch}) * wx;
          const double bot = x.at({f, y1, x0, ch}) * (1 - wx) + x.at({f, y1, x1, ch}) * wx;
          out.at({f, y, xx, ch}) = top * (1 - wy) + bot * wy;
        }
    }
  }
  return out;
}

Tensor zero_pad_spatial(const Tensor& x, std::size_t top, std::size_t bottom, std::size_t left,
                        std::size_t right) {
  require_rank(x, 4, "zero_pad_spatial");
  const std::size_t frames = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
  const std::size_t oh = h + top + bottom, ow = w + left + right;
  Tensor out({frames, oh, ow, c});
  for (std::size_t f = 0; f < frames; ++f)
    for (std::size_t y = 0; y < h; ++y)
      std::copy_n(x.values().data() + (f * h + y) * w * c, w * c,
                  out.data().data() + ((f * oh + y + top) * ow + left) * c);
  return out;
}

// ---------------------------------------------------------------------------

namespace {

struct AttentionDims {
  std::size_t batch, n, m, d, dv, heads, dh, dvh;
};

AttentionDims check_attention(const Tensor& q, const Tensor& k, const Tensor* v, std::size_t heads) {
  require_rank(q, 3, "attention q");
  require_rank(k, 3, "attention k");
  AttentionDims a{q.dim(0), q.dim(1), k.dim(1), q.dim(2), k.dim(2), heads, 0, 0};
  if (k.dim(0) != a.batch || k.dim(2) != a.d) {
    throw ShapeError("attention: q " + shape_str(q.dims()) + " incompatible with k " + shape_str(k.dims()));
  }
  if (v) {
    require_rank(*v, 3, "attention v");
    if (v->dim(0) != a.batch || v->dim(1) != a.m) {
      throw ShapeError("attention: k " + shape_str(k.dims()) + " incompatible with v " + shape_str(v->dims()));
    }
    a.dv = v->dim(2);
  }
  if (heads == 0 || a.d % heads || a.dv % heads) {
    throw ShapeError("attention: widths " + std::to_string(a.d) + "/" + std::to_string(a.dv) +
                     " not divisible by " + std::to_string(heads) + " heads");
  }
  a.dh = a.d / heads;
  a.dvh = a.dv / heads;
  return a;
}

// Softmax weights for one (batch, head) pair into `w` (n x m).
void head_weights(const AttentionDims& a, const double* q, const double* k, std::size_t head, double* w) {
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(a.dh));
  for (std::size_t i = 0; i < a.n; ++i) {
    const double* qi = q + i * a.d + head * a.dh;
    double* wi = w + i * a.m;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < a.m; ++j) {
      const double* kj = k + j * a.d + head * a.dh;
      double s = 0.0;
      for (std::size_t t = 0; t < a.dh; ++t) s += qi[t] * kj[t];
      wi[j] = s * inv_sqrt;
      mx = std::max(mx, wi[j]);
    }
    double sum = 0.0;
    for (std::size_t j = 0; j < a.m; ++j) {
      wi[j] = std::exp(wi[j] - mx);
      sum += wi[j];
    }
    for (std::size_t j = 0; j < a.m; ++j) wi[j] /= sum;
  }
}

}  // namespace

Tensor multi_head_attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads) {
  const AttentionDims a = check_attention(q, k, &v, heads);
  Tensor out({a.batch, a.n, a.dv});
  std::vector<double> w(a.n * a.m);
  for (std::size_t b = 0; b < a.batch; ++b) {
    const double* qb = q.values().data() + b * a.n * a.d;
    const double* kb = k.values().data() + b * a.m * a.d;
    const double* vb = v.values().data() + b * a.m * a.dv;
    double* ob = out.data().data() + b * a.n * a.dv;
    for (std::size_t h = 0; h < heads; ++h) {
      head_weights(a, qb, kb, h, w.data());
      for (std::size_t i = 0; i < a.n; ++i) {
        double* oi = ob + i * a.dv + h * a.dvh;
        for (std::size_t j = 0; j < a.m; ++j) {
          const double wij = w[i * a.m + j];
          const double* vj = vb + j * a.dv + h * a.dvh;
          for (std::size_t t = 0; t < a.dvh; ++t) oi[t] += wij * vj[t];
        }
      }
    }
  }
  return out;
}

Tensor attention_weights(const Tensor& q, const Tensor& k, std::size_t heads) {
  const AttentionDims a = check_attention(q, k, nullptr, heads);
  Tensor out({a.batch, heads, a.n, a.m});
  for (std::size_t b = 0; b < a.batch; ++b)
    for (std::size_t h = 0; h < heads; ++h)
      head_weights(a, q.values().data() + b * a.n * a.d, k.values().data() + b * a.m * a.d, h,
                   out.data().data() + (b * heads + h) * a.n * a.m);
  return out;
}

// ---------------------------------------------------------------------------

Tensor gaussian(RngStream& rng, Shape dims) {
  Tensor out(std::move(dims));
  rng.fill_gaussian(out.data());
  return out;
}

Tensor uniform(RngStream& rng, Shape dims, double lo, double hi) {
  Tensor out(std::move(dims));
  for (auto& v : out.data()) v = lo + (hi - lo) * rng.next_uniform();
  return out;
}

}  // namespace stv
