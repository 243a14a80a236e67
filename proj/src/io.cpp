#include "stv/io.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iterator>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "stv/error.hpp"

namespace stv {
namespace {

constexpr char kMagic[4] = {'S', 'T', 'V', '1'};
constexpr std::uint8_t kDtypeF32 = 0;

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

template <typename U>
U get_le(const unsigned char* p) {
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(p[i]) << (8 * i);
  return v;
}

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void spit(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write '" + path.string() + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("short write to '" + path.string() + "'");
}

}  // namespace

void write_container(std::ostream& os, const Tensor& t) {
  if (t.empty()) throw FormatError("container: cannot store an empty tensor");
  if (t.rank() > 255) throw FormatError("container: rank above 255");
  std::string out(kMagic, 4);
  out.push_back(static_cast<char>(t.rank()));
  for (auto d : t.dims()) put_u64(out, d);
  out.push_back(static_cast<char>(kDtypeF32));
  out.reserve(out.size() + 4 * t.size());
  for (double v : t.values()) {
    const float f = static_cast<float>(v);
    if (!std::isfinite(f)) throw FormatError("container: value not representable as finite 32-bit float");
    put_u32(out, std::bit_cast<std::uint32_t>(f));
  }
  os.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!os) throw FormatError("container: write failed");
}

void write_container(const std::filesystem::path& path, const Tensor& t) {
  std::ostringstream os(std::ios::binary);
  write_container(os, t);
  spit(path, os.str());
}

Tensor read_container(std::istream& is) {
  const std::string bytes{std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::size_t n = bytes.size();
  if (n < 6 || !std::equal(kMagic, kMagic + 4, bytes.begin())) throw FormatError("container: bad magic (expected STV1)");
  const std::size_t rank = p[4];
  if (rank == 0) throw FormatError("container: rank must be at least 1");
  const std::size_t header = 5 + 8 * rank + 1;
  if (n < header) throw FormatError("container: truncated header");
  Shape dims(rank);
  std::size_t count = 1;
  for (std::size_t i = 0; i < rank; ++i) {
    const std::uint64_t d = get_le<std::uint64_t>(p + 5 + 8 * i);
    if (d == 0) throw FormatError("container: zero extent on axis " + std::to_string(i));
    if (count > std::numeric_limits<std::size_t>::max() / 4 / d) throw FormatError("container: extents overflow");
    dims[i] = static_cast<std::size_t>(d);
    count *= dims[i];
  }
  if (p[header - 1] != kDtypeF32) throw FormatError("container: unsupported dtype " + std::to_string(p[header - 1]));
  if (n - header != 4 * count) {
    throw FormatError("container: payload is " + std::to_string(n - header) + " bytes, expected " +
                      std::to_string(4 * count));
  }
  std::vector<double> values(count);
  for (std::size_t i = 0; i < count; ++i) {
    const float f = std::bit_cast<float>(get_le<std::uint32_t>(p + header + 4 * i));
    if (!std::isfinite(f)) throw FormatError("container: non-finite value at element " + std::to_string(i));
    values[i] = f;
  }
  return Tensor(std::move(dims), std::move(values));
}

Tensor read_container(const std::filesystem::path& path) {
  std::istringstream is(slurp(path), std::ios::binary);
  return read_container(is);
}

Tensor round_to_f32(const Tensor& t) {
  Tensor out(t.dims());
  for (std::size_t i = 0; i < t.size(); ++i) out[i] = static_cast<float>(t[i]);
  return out;
}

std::string encode_pgm(const GrayImage& img) {
  if (img.width == 0 || img.height == 0 || img.pixels.size() != img.width * img.height) {
    throw FormatError("pgm: pixel count does not match extents");
  }
  std::string out = "P5\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  out.append(img.pixels.begin(), img.pixels.end());
  return out;
}

void write_pgm(const std::filesystem::path& path, const GrayImage& img) { spit(path, encode_pgm(img)); }

GrayImage decode_pgm(std::string_view bytes) {
  std::size_t pos = 0;
  const auto skip_space = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
        ++pos;
      } else {
        break;
      }
    }
  };
  const auto number = [&] {
    skip_space();
    std::size_t v = 0;
    const auto [ptr, ec] = std::from_chars(bytes.data() + pos, bytes.data() + bytes.size(), v);
    if (ec != std::errc{}) throw FormatError("pgm: malformed header");
    pos = static_cast<std::size_t>(ptr - bytes.data());
    return v;
  };
  if (bytes.substr(0, 2) != "P5") throw FormatError("pgm: expected P5 magic");
  pos = 2;
  GrayImage img;
  img.width = number();
  img.height = number();
  if (number() != 255) throw FormatError("pgm: only maxval 255 is supported");
  if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos]))) throw FormatError("pgm: malformed header");
  ++pos;
  if (bytes.size() - pos != img.width * img.height) throw FormatError("pgm: pixel data length mismatch");
  img.pixels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos), bytes.end());
  return img;
}

GrayImage read_pgm(const std::filesystem::path& path) { return decode_pgm(slurp(path)); }

GrayImage xt_slice(const Tensor& video, std::size_t row) {
  if (video.rank() != 4) throw ShapeError("xt_slice: expected F x h x w x c video, got " + shape_str(video.dims()));
  const std::size_t frames = video.dim(0), h = video.dim(1), w = video.dim(2), c = video.dim(3);
  if (row >= h) throw DomainError("xt_slice: row " + std::to_string(row) + " outside 0.." + std::to_string(h - 1));
  std::vector<double> vals(w * frames);
  for (std::size_t f = 0; f < frames; ++f) {
    for (std::size_t x = 0; x < w; ++x) {
      double s = 0.0;
      for (std::size_t k = 0; k < c; ++k) s += video[((f * h + row) * w + x) * c + k];
      vals[x * frames + f] = s / static_cast<double>(c);
    }
  }
  const auto [lo, hi] = std::minmax_element(vals.begin(), vals.end());
  const double min = *lo, range = *hi - *lo;
  GrayImage img{frames, w, std::vector<std::uint8_t>(vals.size(), 0)};
  if (range > 0.0) {
    for (std::size_t i = 0; i < vals.size(); ++i) {
      img.pixels[i] = static_cast<std::uint8_t>(std::lround(255.0 * (vals[i] - min) / range));
    }
  }
  return img;
}

std::string format_value(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 6);
  if (ec != std::errc{}) throw DomainError("format_value: conversion failed");
  return {buf, ptr};
}

std::string metrics_csv(const std::vector<std::pair<std::string, std::string>>& rows) {
  std::string out = "metric,value\n";
  for (const auto& [name, value] : rows) out += name + "," + value + "\n";
  return out;
}

std::vector<std::pair<std::string, std::string>> report_rows(const MetricReport& r) {
  std::vector<std::pair<std::string, std::string>> rows;
  if (r.mawe) rows.emplace_back("mawe", format_value(*r.mawe));
  if (r.ofs) rows.emplace_back("ofs", format_value(*r.ofs));
  if (r.warp_error) rows.emplace_back("warp_error", format_value(*r.warp_error));
  if (r.scuts) rows.emplace_back("scuts", std::to_string(*r.scuts));
  if (r.flow_std) rows.emplace_back("flow_std", format_value(*r.flow_std));
  if (r.reid) rows.emplace_back("reid", format_value(*r.reid));
  return rows;
}

Detections parse_detections(std::string_view json) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(json);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(std::string("detections: ") + e.what());
  }
  if (!doc.is_array()) throw FormatError("detections: top level must be an array of frames");
  Detections out;
  for (const auto& frame : doc) {
    if (!frame.is_array()) throw FormatError("detections: each frame must be an array of feature vectors");
    auto& dets = out.emplace_back();
    for (const auto& feat : frame) {
      if (!feat.is_array() || feat.empty()) throw FormatError("detections: feature vectors must be non-empty arrays");
      auto& v = dets.emplace_back();
      for (const auto& x : feat) {
        if (!x.is_number()) throw FormatError("detections: feature entries must be numbers");
        v.push_back(x.get<double>());
      }
    }
  }
  return out;
}

Detections read_detections(const std::filesystem::path& path) { return parse_detections(slurp(path)); }

}  // namespace stv
