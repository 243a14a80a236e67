#pragma once

#include <cstdint>
#include <vector>

#include "stv/metrics.hpp"
#include "stv/streaming.hpp"
#include "stv/videoldm.hpp"

namespace stv {

// Smooth single-channel pattern drifting half a pixel per frame.
Tensor toy_video(std::size_t frames, std::size_t h = 16, std::size_t w = 16, std::size_t c = 1);

struct AblationOptions {
  std::size_t frames = 88;
  std::size_t seeds = 8;
  std::uint64_t base_seed = 0;
  VideoPriorConfig prior;  // frames is taken from refine.F_enh
  RefineOptions refine;
  FlowParams flow;
};

struct AblationRow {
  BlendMode mode = BlendMode::naive;
  double mean_flow_std = 0.0;
  std::vector<double> per_seed;
};

// Refines the toy video with every blend mode under seeds base_seed,
// base_seed + 1, ... and reports the flow-std smoothness per mode.
std::vector<AblationRow> run_blending_ablation(const AblationOptions& opt);

}  // namespace stv
