#include "stv/ablation.hpp"

#include <cmath>
#include <numbers>

#include "stv/error.hpp"

namespace stv {

Tensor toy_video(std::size_t frames, std::size_t h, std::size_t w, std::size_t c) {
  Tensor v({frames, h, w, c});
  const double k = 2.0 * std::numbers::pi / 16.0;
  for (std::size_t f = 0; f < frames; ++f)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x)
        for (std::size_t ch = 0; ch < c; ++ch) {
          const double xs = static_cast<double>(x) - 0.5 * static_cast<double>(f);
          v.at({f, y, x, ch}) = 0.5 * std::sin(k * xs) * std::cos(k * static_cast<double>(y));
        }
  return v;
}

std::vector<AblationRow> run_blending_ablation(const AblationOptions& opt) {
  if (opt.frames < 40) throw DomainError("blending ablation needs at least 40 frames");
  if (opt.seeds < 1) throw DomainError("blending ablation needs at least one seed");
  const Schedule s = make_schedule();
  VideoPriorConfig pc = opt.prior;
  pc.frames = opt.refine.F_enh;
  const VideoPriorPredictor denoiser(pc, s);
  const Tensor input = toy_video(opt.frames, pc.height, pc.width, pc.channels);

  std::vector<AblationRow> rows;
  for (BlendMode mode : {BlendMode::naive, BlendMode::shared, BlendMode::randomized}) {
    AblationRow row;
    row.mode = mode;
    double sum = 0.0;
    for (std::size_t i = 0; i < opt.seeds; ++i) {
      const Tensor out = refine_video(input, mode, denoiser, s, opt.refine, RngStream(opt.base_seed + i));
      row.per_seed.push_back(flow_std_smoothness(out, opt.flow));
      sum += row.per_seed.back();
    }
    row.mean_flow_std = sum / static_cast<double>(opt.seeds);
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace stv
