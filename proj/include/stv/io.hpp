#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "stv/metrics.hpp"
#include "stv/tensor.hpp"

namespace stv {

// Tensor container: "STV1", u8 rank, rank x u64 LE extents, u8 dtype
// (0 = f32 LE), row-major payload.
void write_container(std::ostream& os, const Tensor& t);
void write_container(const std::filesystem::path& path, const Tensor& t);
Tensor read_container(std::istream& is);
Tensor read_container(const std::filesystem::path& path);

// Values as stored: every element rounded through 32-bit float.
Tensor round_to_f32(const Tensor& t);

struct GrayImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;  // row-major
};

// Binary PGM (P5, maxval 255).
void write_pgm(const std::filesystem::path& path, const GrayImage& img);
std::string encode_pgm(const GrayImage& img);
GrayImage decode_pgm(std::string_view bytes);
GrayImage read_pgm(const std::filesystem::path& path);

// Column f holds row `row` of frame f, averaged over channels; the whole
// image is min-max scaled to 0..255.
GrayImage xt_slice(const Tensor& video, std::size_t row);

// Six significant digits, "C" locale regardless of the process locale.
std::string format_value(double v);

// "metric,value" header plus one row per entry.
std::string metrics_csv(const std::vector<std::pair<std::string, std::string>>& rows);
std::vector<std::pair<std::string, std::string>> report_rows(const MetricReport& r);

// Per-frame detection embeddings as JSON: [[[f, ...], ...], [], ...].
Detections read_detections(const std::filesystem::path& path);
Detections parse_detections(std::string_view json);

// Flat key=value configuration with '#' comments.
struct RunConfig {
  int T = 1000;
  double beta0 = 0.0085;
  double betaT = 0.0120;
  int ddim_steps = 50;
  double eta = 1.0;
  double omega_text = 7.5;
  double omega_anchor = 7.5;
  std::size_t F = 16;
  std::size_t F_cond = 8;
  std::size_t F_enh = 24;
  std::size_t O = 8;
  int Tprime = 600;
  std::uint64_t seed = 0;
  std::size_t flow_levels = 3;
  std::size_t flow_iters = 100;
  double flow_lambda = 0.1;
  double occlusion_thresh = 0.5;
  double mawe_eps = 1e-6;
  std::size_t scuts_window = 2;
  double scuts_ratio = 3.0;
  double scuts_min_content = 15.0 / 255.0;

  // Throws DomainError on any out-of-range value.
  void validate() const;
  FlowParams flow() const { return {flow_levels, flow_iters, flow_lambda}; }
  ScutsParams cuts() const { return {scuts_window, scuts_ratio, scuts_min_content}; }
};

RunConfig parse_run_config(std::string_view text);
RunConfig load_run_config(const std::filesystem::path& path);
// Path named by STV_CONFIG, if set and non-empty.
std::optional<std::filesystem::path> config_path_from_env();

}  // namespace stv
