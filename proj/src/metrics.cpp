#include "stv/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "stv/error.hpp"

namespace stv {
namespace {

// Single-channel image with edge-clamped access.
struct Plane {
  std::size_t h = 0, w = 0;
  std::vector<double> d;

  Plane() = default;
  Plane(std::size_t h_, std::size_t w_) : h(h_), w(w_), d(h_ * w_, 0.0) {}
  double& operator()(std::size_t y, std::size_t x) { return d[y * w + x]; }
  double operator()(std::size_t y, std::size_t x) const { return d[y * w + x]; }
  double clamped(long y, long x) const {
    y = std::clamp<long>(y, 0, static_cast<long>(h) - 1);
    x = std::clamp<long>(x, 0, static_cast<long>(w) - 1);
    return d[static_cast<std::size_t>(y) * w + static_cast<std::size_t>(x)];
  }
  double bilinear(double y, double x) const {
    y = std::clamp(y, 0.0, static_cast<double>(h - 1));
    x = std::clamp(x, 0.0, static_cast<double>(w - 1));
    const long y0 = static_cast<long>(std::floor(y)), x0 = static_cast<long>(std::floor(x));
    const double fy = y - static_cast<double>(y0), fx = x - static_cast<double>(x0);
    return (1 - fy) * ((1 - fx) * clamped(y0, x0) + fx * clamped(y0, x0 + 1)) +
           fy * ((1 - fx) * clamped(y0 + 1, x0) + fx * clamped(y0 + 1, x0 + 1));
  }
};

Plane plane_of(const Tensor& hw) {
  Plane p(hw.dim(0), hw.dim(1));
  std::copy(hw.values().begin(), hw.values().end(), p.d.begin());
  return p;
}

Tensor tensor_of(const Plane& p) { return Tensor({p.h, p.w}, p.d); }

// Half-pixel-centred resampling to (h, w).
Plane resample(const Plane& src, std::size_t h, std::size_t w) {
  Plane out(h, w);
  const double sy = static_cast<double>(src.h) / static_cast<double>(h);
  const double sx = static_cast<double>(src.w) / static_cast<double>(w);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      out(y, x) = src.bilinear((static_cast<double>(y) + 0.5) * sy - 0.5, (static_cast<double>(x) + 0.5) * sx - 0.5);
  return out;
}

Plane downsample(const Plane& src) {
  if (src.h % 2 != 0 || src.w % 2 != 0) return resample(src, (src.h + 1) / 2, (src.w + 1) / 2);
  Plane out(src.h / 2, src.w / 2);
  for (std::size_t y = 0; y < out.h; ++y)
    for (std::size_t x = 0; x < out.w; ++x)
      out(y, x) = 0.25 * (src(2 * y, 2 * x) + src(2 * y, 2 * x + 1) + src(2 * y + 1, 2 * x) + src(2 * y + 1, 2 * x + 1));
  return out;
}

Plane warp_plane(const Plane& img, const Plane& u, const Plane& v) {
  Plane out(img.h, img.w);
  for (std::size_t y = 0; y < img.h; ++y)
    for (std::size_t x = 0; x < img.w; ++x)
      out(y, x) = img.bilinear(static_cast<double>(y) + v(y, x), static_cast<double>(x) + u(y, x));
  return out;
}

double neighbour_mean(const Plane& p, std::size_t y, std::size_t x) {
  const long yl = static_cast<long>(y), xl = static_cast<long>(x);
  return 0.25 * (p.clamped(yl - 1, xl) + p.clamped(yl + 1, xl) + p.clamped(yl, xl - 1) + p.clamped(yl, xl + 1));
}

// Horn-Schunck refinement of (u, v) at one pyramid level, linearised
// around the incoming flow.
void refine_level(const Plane& a, const Plane& b, Plane& u, Plane& v, const FlowParams& p) {
  const Plane bw = warp_plane(b, u, v);
  const std::size_t h = a.h, w = a.w;
  Plane ix(h, w), iy(h, w), it(h, w);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const long yl = static_cast<long>(y), xl = static_cast<long>(x);
      ix(y, x) = 0.25 * (a.clamped(yl, xl + 1) - a.clamped(yl, xl - 1) + bw.clamped(yl, xl + 1) - bw.clamped(yl, xl - 1));
      iy(y, x) = 0.25 * (a.clamped(yl + 1, xl) - a.clamped(yl - 1, xl) + bw.clamped(yl + 1, xl) - bw.clamped(yl - 1, xl));
      it(y, x) = bw(y, x) - a(y, x);
    }
  }
  const Plane u0 = u, v0 = v;
  Plane un(h, w), vn(h, w);
  for (std::size_t iter = 0; iter < p.iterations; ++iter) {
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        const double ub = neighbour_mean(u, y, x), vb = neighbour_mean(v, y, x);
        const double gx = ix(y, x), gy = iy(y, x);
        const double r = (gx * (ub - u0(y, x)) + gy * (vb - v0(y, x)) + it(y, x)) / (p.lambda + gx * gx + gy * gy);
        un(y, x) = ub - gx * r;
        vn(y, x) = vb - gy * r;
      }
    }
    std::swap(u, un);
    std::swap(v, vn);
  }
}

void check_video(const Tensor& video, const char* what) {
  if (video.rank() != 4) throw ShapeError(std::string(what) + ": expected F x h x w x c video, got " + shape_str(video.dims()));
  if (video.dim(0) < 2) throw DomainError(std::string(what) + ": need at least 2 frames");
}

Tensor frame_at(const Tensor& video, std::size_t f) {
  return reshape(slice(video, 0, f, f + 1), {video.dim(1), video.dim(2), video.dim(3)});
}

double mean_of(const std::vector<double>& xs) {
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

}  // namespace

Tensor to_luma(const Tensor& frame) {
  if (frame.rank() != 3) throw ShapeError("to_luma: expected h x w x c frame, got " + shape_str(frame.dims()));
  const std::size_t h = frame.dim(0), w = frame.dim(1), c = frame.dim(2);
  Tensor out({h, w});
  for (std::size_t i = 0; i < h * w; ++i) {
    const double* px = frame.data().data() + i * c;
    if (c == 3) {
      out[i] = 0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2];
    } else {
      double s = 0.0;
      for (std::size_t k = 0; k < c; ++k) s += px[k];
      out[i] = s / static_cast<double>(c);
    }
  }
  return out;
}

FlowField optical_flow(const Tensor& a, const Tensor& b, const FlowParams& p) {
  if (a.dims() != b.dims()) {
    throw ShapeError("optical_flow: frame extents differ: " + shape_str(a.dims()) + " vs " + shape_str(b.dims()));
  }
  if (p.levels == 0 || !(p.lambda > 0.0)) throw DomainError("optical_flow: need levels >= 1 and lambda > 0");
  const Tensor la = a.rank() == 3 ? to_luma(a) : a;
  const Tensor lb = b.rank() == 3 ? to_luma(b) : b;
  if (la.rank() != 2) throw ShapeError("optical_flow: expected h x w or h x w x c frames");

  std::vector<Plane> pa{plane_of(la)}, pb{plane_of(lb)};
  while (pa.size() < p.levels && std::min(pa.back().h, pa.back().w) >= 8) {
    pa.push_back(downsample(pa.back()));
    pb.push_back(downsample(pb.back()));
  }
  Plane u(pa.back().h, pa.back().w), v(pa.back().h, pa.back().w);
  for (std::size_t l = pa.size(); l-- > 0;) {
    if (u.h != pa[l].h || u.w != pa[l].w) {
      const double sy = static_cast<double>(pa[l].h) / static_cast<double>(u.h);
      const double sx = static_cast<double>(pa[l].w) / static_cast<double>(u.w);
      u = resample(u, pa[l].h, pa[l].w);
      v = resample(v, pa[l].h, pa[l].w);
      for (auto& x : u.d) x *= sx;
      for (auto& y : v.d) y *= sy;
    }
    refine_level(pa[l], pb[l], u, v, p);
  }
  return {tensor_of(u), tensor_of(v)};
}

std::vector<FlowField> video_flows(const Tensor& video, const FlowParams& p) {
  check_video(video, "video_flows");
  std::vector<FlowField> flows;
  for (std::size_t f = 0; f + 1 < video.dim(0); ++f) flows.push_back(optical_flow(frame_at(video, f), frame_at(video, f + 1), p));
  return flows;
}

Tensor warp_backward(const Tensor& img, const FlowField& flow) {
  if (img.rank() != 3 || flow.u.dims() != Shape{img.dim(0), img.dim(1)} || flow.v.dims() != flow.u.dims()) {
    throw ShapeError("warp_backward: image " + shape_str(img.dims()) + " and flow " + shape_str(flow.u.dims()) +
                     " do not match");
  }
  const std::size_t h = img.dim(0), w = img.dim(1), c = img.dim(2);
  Tensor out(img.dims());
  for (std::size_t k = 0; k < c; ++k) {
    Plane ch(h, w);
    for (std::size_t i = 0; i < h * w; ++i) ch.d[i] = img[i * c + k];
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x)
        out[(y * w + x) * c + k] = ch.bilinear(static_cast<double>(y) + flow.v[y * w + x], static_cast<double>(x) + flow.u[y * w + x]);
  }
  return out;
}

double ofs(const Tensor& video, const FlowParams& p) {
  const auto flows = video_flows(video, p);
  std::vector<double> per_pair;
  for (const auto& fl : flows) {
    double s = 0.0;
    for (std::size_t i = 0; i < fl.u.size(); ++i) s += fl.u[i] * fl.u[i] + fl.v[i] * fl.v[i];
    per_pair.push_back(s / static_cast<double>(fl.u.size()));
  }
  return mean_of(per_pair);
}

double warp_error(const Tensor& video, double occlusion_thresh, const FlowParams& p) {
  check_video(video, "warp_error");
  if (!(occlusion_thresh > 0.0)) throw DomainError("warp_error: occlusion threshold must be positive");
  const std::size_t h = video.dim(1), w = video.dim(2), c = video.dim(3);
  std::vector<double> per_pair;
  for (std::size_t f = 0; f + 1 < video.dim(0); ++f) {
    const Tensor a = frame_at(video, f), b = frame_at(video, f + 1);
    const FlowField fw = optical_flow(a, b, p);
    const FlowField bw = optical_flow(b, a, p);
    const Plane bu = plane_of(bw.u), bv = plane_of(bw.v);
    const Tensor warped = warp_backward(b, fw);
    double sum = 0.0;
    std::size_t kept = 0;
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        const std::size_t i = y * w + x;
        const double py = static_cast<double>(y) + fw.v[i], px = static_cast<double>(x) + fw.u[i];
        if (py < 0.0 || px < 0.0 || py > static_cast<double>(h - 1) || px > static_cast<double>(w - 1)) continue;
        const double du = fw.u[i] + bu.bilinear(py, px), dv = fw.v[i] + bv.bilinear(py, px);
        if (du * du + dv * dv > occlusion_thresh) continue;
        for (std::size_t k = 0; k < c; ++k) {
          const double d = warped[i * c + k] - a[i * c + k];
          sum += d * d;
        }
        ++kept;
      }
    }
    if (kept > 0) per_pair.push_back(sum / static_cast<double>(kept * c));
  }
  if (per_pair.empty()) throw DomainError("warp_error: every pixel of every frame pair is occluded");
  return mean_of(per_pair);
}

double mawe(const Tensor& video, double eps_div, double occlusion_thresh, const FlowParams& p) {
  const double o = ofs(video, p);
  if (o <= eps_div) throw DomainError("undefined: static video");
  return warp_error(video, occlusion_thresh, p) / o;
}

std::vector<double> content_values(const Tensor& video) {
  check_video(video, "content_values");
  std::vector<double> out;
  Tensor prev = to_luma(frame_at(video, 0));
  for (std::size_t f = 1; f < video.dim(0); ++f) {
    Tensor cur = to_luma(frame_at(video, f));
    double s = 0.0;
    for (std::size_t i = 0; i < cur.size(); ++i) s += std::abs(cur[i] - prev[i]);
    out.push_back(s / static_cast<double>(cur.size()));
    prev = std::move(cur);
  }
  return out;
}

std::size_t scuts(const Tensor& video, const ScutsParams& p) {
  if (p.window == 0 || !(p.adaptive_ratio > 0.0) || p.min_content < 0.0) {
    throw DomainError("scuts: need window >= 1, adaptive_ratio > 0, min_content >= 0");
  }
  if (video.rank() == 4 && video.dim(0) < 2 * p.window + 2) {
    throw DomainError("scuts: need at least " + std::to_string(2 * p.window + 2) + " frames, got " +
                      std::to_string(video.dim(0)));
  }
  const auto content = content_values(video);
  const std::size_t n = content.size();
  std::size_t cuts = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    std::size_t count = 0;
    const std::size_t lo = i >= p.window ? i - p.window : 0, hi = std::min(n - 1, i + p.window);
    for (std::size_t j = lo; j <= hi; ++j) {
      if (j == i) continue;
      s += content[j];
      ++count;
    }
    const double rolling = count ? s / static_cast<double>(count) : 0.0;
    if (content[i] >= p.adaptive_ratio * rolling && content[i] >= p.min_content) ++cuts;
  }
  return cuts;
}

double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.empty()) throw ShapeError("cosine_similarity: feature lengths differ or are empty");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) throw DomainError("cosine_similarity: zero feature vector");
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

double reid_score(const Detections& detections) {
  if (detections.size() < 2) throw DomainError("reid_score: need at least 2 frames");
  double total = 0.0;
  std::size_t m = 0;
  for (std::size_t n = 0; n + 1 < detections.size(); ++n) {
    const auto& cur = detections[n];
    const auto& next = detections[n + 1];
    if (!cur.empty()) ++m;
    if (cur.empty() || next.empty()) continue;
    double best = -1.0;
    for (const auto& fi : cur)
      for (const auto& fj : next) best = std::max(best, cosine_similarity(fi, fj));
    total += best;
  }
  if (m == 0) throw DomainError("reid_score: no identities");
  return total / static_cast<double>(m);
}

double flow_std_smoothness(const Tensor& video, const FlowParams& p) {
  const auto flows = video_flows(video, p);
  std::vector<double> per_pair;
  for (const auto& fl : flows) {
    const std::size_t n = fl.u.size();
    std::vector<double> mag(n);
    for (std::size_t i = 0; i < n; ++i) mag[i] = std::hypot(fl.u[i], fl.v[i]);
    const double mu = mean_of(mag);
    double var = 0.0;
    for (double x : mag) var += (x - mu) * (x - mu);
    per_pair.push_back(std::sqrt(var / static_cast<double>(n)));
  }
  return mean_of(per_pair);
}

MetricReport evaluate_metrics(const Tensor& video, const std::vector<std::string>& names, const MetricOptions& opt,
                              const Detections* detections) {
  const Tensor v = opt.resize ? opt.resize(video) : video;
  MetricReport r;
  for (const auto& name : names) {
    if (name == "mawe") {
      r.mawe = mawe(v, opt.eps_div, opt.occlusion_thresh, opt.flow);
    } else if (name == "ofs") {
      r.ofs = ofs(v, opt.flow);
    } else if (name == "warp_error") {
      r.warp_error = warp_error(v, opt.occlusion_thresh, opt.flow);
    } else if (name == "scuts") {
      r.scuts = scuts(v, opt.cuts);
    } else if (name == "flow_std") {
      r.flow_std = flow_std_smoothness(v, opt.flow);
    } else if (name == "reid") {
      if (!detections) throw DomainError("reid needs per-frame detection embeddings");
      r.reid = reid_score(*detections);
    } else {
      throw DomainError("unknown metric '" + name + "'");
    }
  }
  return r;
}

}  // namespace stv
