#include "fixtures.hpp"

#include <cmath>
#include <numbers>

#include "stv/rng.hpp"

namespace stv::fixtures {

double texture(double y, double x, std::size_t h, std::size_t w, int variant) {
  const double tau = 2.0 * std::numbers::pi;
  const double u = tau * x / static_cast<double>(w), v = tau * y / static_cast<double>(h);
  const double ph = 1.7 * variant;
  return 0.5 + 0.2 * std::sin(u + ph) * std::cos(v - 0.5 * ph) + 0.15 * std::sin(2.0 * u + v + 0.3 + ph) +
         0.1 * std::cos(3.0 * u - 2.0 * v + 2.0 * ph);
}

Tensor pan_video(std::size_t frames, std::size_t h, std::size_t w, double speed, int variant) {
  Tensor out({frames, h, w, 1});
  for (std::size_t f = 0; f < frames; ++f)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x)
        out.at({f, y, x, 0}) =
            texture(static_cast<double>(y), static_cast<double>(x) - speed * static_cast<double>(f), h, w, variant);
  return out;
}

Tensor static_video(std::size_t frames, std::size_t h, std::size_t w) { return pan_video(frames, h, w, 0.0); }

Tensor noise_video(std::size_t frames, std::size_t h, std::size_t w, std::uint64_t seed) {
  RngStream rng(seed);
  return uniform(rng, {frames, h, w, 1}, 0.0, 1.0);
}

Tensor cut_video(std::size_t frames, std::size_t h, std::size_t w, const std::vector<std::size_t>& cuts) {
  Tensor out({frames, h, w, 1});
  int variant = 0;
  std::size_t next = 0;
  for (std::size_t f = 0; f < frames; ++f) {
    if (next < cuts.size() && f == cuts[next]) {
      ++variant;
      ++next;
    }
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x)
        out.at({f, y, x, 0}) = texture(static_cast<double>(y) + 5.0 * variant,
                                       static_cast<double>(x) - 0.5 * static_cast<double>(f) + 7.0 * variant, h, w,
                                       variant);
  }
  return out;
}

Tensor half_moving_video(std::size_t frames, std::size_t h, std::size_t w, double speed) {
  Tensor out({frames, h, w, 1});
  for (std::size_t f = 0; f < frames; ++f)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        const double shift = x < w / 2 ? speed * static_cast<double>(f) : 0.0;
        out.at({f, y, x, 0}) = texture(static_cast<double>(y), static_cast<double>(x) - shift, h, w);
      }
  return out;
}

Tensor frame(const Tensor& video, std::size_t f) {
  return reshape(slice(video, 0, f, f + 1), {video.dim(1), video.dim(2), video.dim(3)});
}

}  // namespace stv::fixtures
