#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "stv/tensor.hpp"

namespace stv {

// Multi-scale Horn-Schunck with warping between levels.
struct FlowParams {
  std::size_t levels = 3;
  std::size_t iterations = 100;  // per level
  double lambda = 0.1;           // smoothness weight
};

// Displacement in pixels per frame: a(y, x) ~ b(y + v, x + u).
struct FlowField {
  Tensor u;  // h x w
  Tensor v;  // h x w
};

// h x w x c frame to h x w luma (BT.601 for 3 channels, channel mean otherwise).
Tensor to_luma(const Tensor& frame);

FlowField optical_flow(const Tensor& a, const Tensor& b, const FlowParams& p = {});

// Flows for every consecutive pair of an F x h x w x c video.
std::vector<FlowField> video_flows(const Tensor& video, const FlowParams& p = {});

// Bilinear sample of img (h x w x c) at (y + v, x + u) with edge clamping.
Tensor warp_backward(const Tensor& img, const FlowField& flow);

double ofs(const Tensor& video, const FlowParams& p = {});

// Mean squared distance (per element) between each frame and its successor
// warped back onto it, over pixels passing the forward-backward check.
double warp_error(const Tensor& video, double occlusion_thresh = 0.5, const FlowParams& p = {});

inline constexpr double kDefaultMaweFloor = 1e-6;

// warp_error / ofs; DomainError "undefined: static video" when OFS <= eps_div.
double mawe(const Tensor& video, double eps_div = kDefaultMaweFloor, double occlusion_thresh = 0.5,
            const FlowParams& p = {});

struct ScutsParams {
  std::size_t window = 2;
  double adaptive_ratio = 3.0;
  double min_content = 15.0 / 255.0;
};

// Mean absolute luma difference per consecutive pair.
std::vector<double> content_values(const Tensor& video);
std::size_t scuts(const Tensor& video, const ScutsParams& p = {});

// detections[n] holds the feature vectors found in frame n (possibly none).
using Detections = std::vector<std::vector<std::vector<double>>>;

double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b);
// Consecutive-pair max cosine similarity (0 when either frame is empty),
// summed and divided by the number of frames n = 1..N-1 with detections.
double reid_score(const Detections& detections);

// Per pair, the standard deviation of per-pixel flow magnitudes; averaged.
double flow_std_smoothness(const Tensor& video, const FlowParams& p = {});

struct MetricReport {
  std::optional<double> mawe, ofs, warp_error, flow_std, reid;
  std::optional<std::size_t> scuts;
};

struct MetricOptions {
  FlowParams flow;
  ScutsParams cuts;
  double occlusion_thresh = 0.5;
  double eps_div = kDefaultMaweFloor;
  // Spatial resize before evaluation; identity when empty.
  std::function<Tensor(const Tensor&)> resize;
};

// Metrics computed by default, in report order.
inline const std::vector<std::string> kDefaultMetrics{"mawe", "ofs", "warp_error", "scuts", "flow_std"};

// Computes the requested metrics ("mawe", "ofs", "warp_error", "scuts",
// "flow_std", "reid"). "reid" needs `detections`.
MetricReport evaluate_metrics(const Tensor& video, const std::vector<std::string>& names, const MetricOptions& opt = {},
                              const Detections* detections = nullptr);

}  // namespace stv
