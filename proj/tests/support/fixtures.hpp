#pragma once

#include <cstdint>
#include <vector>

#include "stv/tensor.hpp"

namespace stv::fixtures {

// Smooth periodic texture in [0, 1] sampled at (y, x + dx); the period is
// the frame width, so integer shifts wrap exactly.
double texture(double y, double x, std::size_t h, std::size_t w, int variant = 0);

// Frame f is the texture translated right by f * speed pixels (wrapped).
Tensor pan_video(std::size_t frames, std::size_t h, std::size_t w, double speed, int variant = 0);

Tensor static_video(std::size_t frames, std::size_t h, std::size_t w);

// Independent uniform [0, 1] frames.
Tensor noise_video(std::size_t frames, std::size_t h, std::size_t w, std::uint64_t seed);

// A pan whose content switches to an unrelated texture at each listed frame.
Tensor cut_video(std::size_t frames, std::size_t h, std::size_t w, const std::vector<std::size_t>& cuts);

// Left half pans at `speed`, right half stays put.
Tensor half_moving_video(std::size_t frames, std::size_t h, std::size_t w, double speed);

Tensor frame(const Tensor& video, std::size_t f);

}  // namespace stv::fixtures
