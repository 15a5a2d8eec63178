#pragma once

// Test input preparation: camera-style images are scaled and center-cropped
// to the camera configuration, point clouds are voxelized into occupancy
// counts. Real dataset loading is replaced by a seeded synthetic generator.

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "thermalfuzz/model_ir.hpp"
#include "thermalfuzz/rng.hpp"
#include "thermalfuzz/tensor.hpp"

namespace thermalfuzz {

struct CameraConfig {
  std::int64_t height = 1;
  std::int64_t width = 1;
};

using Point3 = std::array<double, 3>;

struct VoxelGridConfig {
  std::array<double, 3> min{};
  std::array<double, 3> max{};
  std::array<std::int64_t, 3> resolution{1, 1, 1};

  void validate() const {
    for (int a = 0; a < 3; ++a) {
      if (!(max[a] > min[a])) throw std::invalid_argument("VoxelGridConfig: max must exceed min on every axis");
      if (resolution[a] < 1) throw std::invalid_argument("VoxelGridConfig: resolution must be >= 1");
    }
  }
};

/// Scales (H, W, 3) by max(h/H, w/W) with half-pixel bilinear sampling, then
/// center-crops to (h, w, 3). Output is fp32 and clamped to [0, 1].
inline Tensor prepare_image(const Tensor& raw, const CameraConfig& cfg) {
  if (raw.spec.rank() != 3 || raw.spec.shape[2] != 3)
    throw std::invalid_argument("prepare_image: expected (H, W, 3), got " + shape_string(raw.spec.shape));
  if (cfg.height < 1 || cfg.width < 1) throw std::invalid_argument("prepare_image: camera size must be >= 1");
  const std::int64_t H = raw.spec.shape[0], W = raw.spec.shape[1];
  const double s = std::max(static_cast<double>(cfg.height) / static_cast<double>(H),
                            static_cast<double>(cfg.width) / static_cast<double>(W));
  const std::int64_t hs = std::max(cfg.height, static_cast<std::int64_t>(std::llround(static_cast<double>(H) * s)));
  const std::int64_t ws = std::max(cfg.width, static_cast<std::int64_t>(std::llround(static_cast<double>(W) * s)));
  const std::int64_t top = (hs - cfg.height) / 2, left = (ws - cfg.width) / 2;
  const double ry = static_cast<double>(H) / static_cast<double>(hs);
  const double rx = static_cast<double>(W) / static_cast<double>(ws);

  auto at = [&](std::int64_t y, std::int64_t x, std::int64_t c) {
    return raw.data[static_cast<std::size_t>((y * W + x) * 3 + c)];
  };
  Tensor out(TensorSpec{{cfg.height, cfg.width, 3}, DType::fp32});
  for (std::int64_t i = 0; i < cfg.height; ++i) {
    const double sy = std::clamp((static_cast<double>(i + top) + 0.5) * ry - 0.5, 0.0, static_cast<double>(H - 1));
    const auto y0 = static_cast<std::int64_t>(std::floor(sy));
    const auto y1 = std::min(y0 + 1, H - 1);
    const double fy = sy - static_cast<double>(y0);
    for (std::int64_t j = 0; j < cfg.width; ++j) {
      const double sx =
          std::clamp((static_cast<double>(j + left) + 0.5) * rx - 0.5, 0.0, static_cast<double>(W - 1));
      const auto x0 = static_cast<std::int64_t>(std::floor(sx));
      const auto x1 = std::min(x0 + 1, W - 1);
      const double fx = sx - static_cast<double>(x0);
      for (std::int64_t c = 0; c < 3; ++c) {
        const double top_v = at(y0, x0, c) * (1.0 - fx) + at(y0, x1, c) * fx;
        const double bot_v = at(y1, x0, c) * (1.0 - fx) + at(y1, x1, c) * fx;
        const double v = fy == 0.0 ? top_v : top_v * (1.0 - fy) + bot_v * fy;
        out.data[static_cast<std::size_t>((i * cfg.width + j) * 3 + c)] = std::clamp(v, 0.0, 1.0);
      }
    }
  }
  return out;
}

/// Cell index of one coordinate, or -1 when outside [lo, hi]. Cells are
/// half-open [lo_i, hi_i) except the last, which also holds hi.
inline std::int64_t voxel_index(double p, double lo, double hi, std::int64_t res) {
  if (!(p >= lo && p <= hi)) return -1;
  if (p == hi) return res - 1;
  const auto idx = static_cast<std::int64_t>(std::floor((p - lo) / (hi - lo) * static_cast<double>(res)));
  return std::clamp<std::int64_t>(idx, 0, res - 1);
}

/// Occupancy counts over a regular grid of shape (rx, ry, rz).
inline Tensor voxelize(std::span<const Point3> points, const VoxelGridConfig& cfg) {
  cfg.validate();
  const auto [rx, ry, rz] = cfg.resolution;
  Tensor grid(TensorSpec{{rx, ry, rz}, DType::fp32});
  for (const auto& p : points) {
    std::array<std::int64_t, 3> idx{};
    bool inside = true;
    for (int a = 0; a < 3 && inside; ++a) {
      idx[a] = voxel_index(p[a], cfg.min[a], cfg.max[a], cfg.resolution[a]);
      inside = idx[a] >= 0;
    }
    if (inside) grid.data[static_cast<std::size_t>((idx[0] * ry + idx[1]) * rz + idx[2])] += 1.0;
  }
  return grid;
}

// --- synthetic generator ------------------------------------------------------

/// The LiDAR-style volume every synthetic cloud is sampled in.
inline VoxelGridConfig synthetic_lidar_bounds(const Shape& resolution) {
  VoxelGridConfig cfg;
  cfg.min = {-20.0, -20.0, -2.0};
  cfg.max = {20.0, 20.0, 2.0};
  cfg.resolution = {resolution.at(0), resolution.at(1), resolution.at(2)};
  return cfg;
}

/// Camera frame at sensor resolution: smooth gradients, a bright blob and
/// pixel noise, all in [0, 1].
inline Tensor synthetic_camera_frame(std::int64_t height, std::int64_t width, Rng& rng) {
  Tensor img(TensorSpec{{height, width, 3}, DType::fp32});
  const double cy = rng.uniform(0.2, 0.8) * static_cast<double>(height);
  const double cx = rng.uniform(0.2, 0.8) * static_cast<double>(width);
  const double radius = rng.uniform(0.1, 0.3) * static_cast<double>(std::max(height, width));
  std::array<double, 3> tint{rng.uniform(), rng.uniform(), rng.uniform()};
  for (std::int64_t y = 0; y < height; ++y)
    for (std::int64_t x = 0; x < width; ++x) {
      const double d = std::hypot(static_cast<double>(y) - cy, static_cast<double>(x) - cx);
      const double blob = std::exp(-(d * d) / (2.0 * radius * radius));
      const double sky = 1.0 - static_cast<double>(y) / static_cast<double>(height);
      for (int c = 0; c < 3; ++c) {
        const double v = 0.35 * sky + 0.5 * blob * tint[c] + 0.15 * rng.uniform();
        img.data[static_cast<std::size_t>((y * width + x) * 3 + c)] = std::clamp(v, 0.0, 1.0);
      }
    }
  return img;
}

/// A ground plane plus a few object clusters, some points outside the bounds.
inline std::vector<Point3> synthetic_point_cloud(std::size_t n, Rng& rng) {
  std::vector<Point3> pts;
  pts.reserve(n);
  const std::size_t clusters = 3 + rng.below(3);
  std::vector<Point3> centers;
  for (std::size_t c = 0; c < clusters; ++c)
    centers.push_back({rng.uniform(-18.0, 18.0), rng.uniform(-18.0, 18.0), rng.uniform(-1.0, 1.0)});
  for (std::size_t i = 0; i < n; ++i) {
    if (rng.uniform() < 0.4) {
      pts.push_back({rng.uniform(-24.0, 24.0), rng.uniform(-24.0, 24.0), -1.8 + 0.1 * rng.uniform()});
    } else {
      const auto& c = centers[rng.below(centers.size())];
      auto spread = [&]() { return (rng.uniform() + rng.uniform() + rng.uniform() - 1.5) * 1.5; };
      pts.push_back({c[0] + spread(), c[1] + spread(), c[2] + 0.4 * spread()});
    }
  }
  return pts;
}

/// Deterministic inputs for every graph input, matched to its spec.
inline std::vector<Tensor> gen_inputs(const ModelGraph& graph, std::uint64_t rng_seed) {
  std::vector<Tensor> out;
  for (std::size_t i = 0; i < graph.inputs.size(); ++i) {
    const auto& in = graph.inputs[i];
    const TensorSpec& spec = graph.spec(in.vertex);
    Rng rng(derive_seed({rng_seed, static_cast<std::uint64_t>(i)}));
    InputModality m = in.modality;
    if (m == InputModality::image && !(spec.rank() == 3 && spec.shape[2] == 3)) m = InputModality::generic;
    if ((m == InputModality::voxel || m == InputModality::sequence) && spec.rank() != 3) m = InputModality::generic;

    Tensor t;
    switch (m) {
      case InputModality::image: {
        const std::int64_t h = spec.shape[0], w = spec.shape[1];
        const std::int64_t sensor_h = h + 1 + static_cast<std::int64_t>(rng.below(static_cast<std::size_t>(h)));
        const std::int64_t sensor_w = w + 1 + static_cast<std::int64_t>(rng.below(static_cast<std::size_t>(w)));
        t = prepare_image(synthetic_camera_frame(sensor_h, sensor_w, rng), CameraConfig{h, w});
        break;
      }
      case InputModality::voxel: {
        const auto cloud = synthetic_point_cloud(256, rng);
        t = voxelize(cloud, synthetic_lidar_bounds(spec.shape));
        break;
      }
      case InputModality::sequence: {
        const std::int64_t T = spec.shape[0], B = spec.shape[1], F = spec.shape[2];
        t = Tensor(TensorSpec{spec.shape, spec.dtype});
        std::vector<double> phase(static_cast<std::size_t>(B * F));
        for (auto& p : phase) p = rng.uniform(0.0, 6.283185307179586);
        for (std::int64_t s = 0; s < T; ++s)
          for (std::int64_t b = 0; b < B; ++b)
            for (std::int64_t f = 0; f < F; ++f) {
              const double v = std::sin(0.6 * static_cast<double>(s) + phase[static_cast<std::size_t>(b * F + f)]);
              t.data[static_cast<std::size_t>((s * B + b) * F + f)] = 0.8 * v + 0.2 * rng.uniform(-1.0, 1.0);
            }
        break;
      }
      case InputModality::generic: {
        t = Tensor(TensorSpec{spec.shape, spec.dtype});
        for (auto& v : t.data) v = rng.uniform();
        break;
      }
    }
    t.spec.dtype = spec.dtype;
    out.push_back(std::move(t));
  }
  return out;
}

/// Mean over every element of every tensor (0 for no elements).
inline double mean_of(std::span<const Tensor> tensors) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& t : tensors) {
    for (double v : t.data) sum += v;
    n += t.data.size();
  }
  return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

// --- on-disk formats ----------------------------------------------------------

namespace detail {

inline constexpr std::string_view kB64 = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

inline std::string base64_encode(std::span<const std::uint8_t> bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 2 < bytes.size(); i += 3) {
    const std::uint32_t v = (std::uint32_t{bytes[i]} << 16) | (std::uint32_t{bytes[i + 1]} << 8) | bytes[i + 2];
    out += kB64[(v >> 18) & 63];
    out += kB64[(v >> 12) & 63];
    out += kB64[(v >> 6) & 63];
    out += kB64[v & 63];
  }
  if (i < bytes.size()) {
    std::uint32_t v = std::uint32_t{bytes[i]} << 16;
    if (i + 1 < bytes.size()) v |= std::uint32_t{bytes[i + 1]} << 8;
    out += kB64[(v >> 18) & 63];
    out += kB64[(v >> 12) & 63];
    out += i + 1 < bytes.size() ? kB64[(v >> 6) & 63] : '=';
    out += '=';
  }
  return out;
}

inline std::vector<std::uint8_t> base64_decode(std::string_view s) {
  auto val = [](char c) -> int {
    const auto p = kB64.find(c);
    return p == std::string_view::npos ? -1 : static_cast<int>(p);
  };
  std::vector<std::uint8_t> out;
  std::uint32_t buf = 0;
  int bits = 0;
  for (char c : s) {
    if (c == '=') break;
    const int v = val(c);
    if (v < 0) throw std::invalid_argument("base64: invalid character");
    buf = (buf << 6) | static_cast<std::uint32_t>(v);
    bits += 6;
    if (bits >= 8) {
      bits -= 8;
      out.push_back(static_cast<std::uint8_t>((buf >> bits) & 0xFF));
    }
  }
  return out;
}

}  // namespace detail

/// JSON header plus base64 little-endian float64 payload.
inline nlohmann::ordered_json tensor_to_json(const Tensor& t) {
  std::vector<std::uint8_t> bytes(t.data.size() * 8);
  for (std::size_t i = 0; i < t.data.size(); ++i) {
    auto bits = std::bit_cast<std::uint64_t>(t.data[i]);
    for (int b = 0; b < 8; ++b) bytes[i * 8 + static_cast<std::size_t>(b)] = static_cast<std::uint8_t>(bits >> (8 * b));
  }
  nlohmann::ordered_json j;
  j["shape"] = t.spec.shape;
  j["dtype"] = to_string(t.spec.dtype);
  j["encoding"] = "base64-f64le";
  j["data"] = detail::base64_encode(bytes);
  return j;
}

inline Tensor tensor_from_json(const nlohmann::json& j) {
  TensorSpec spec{j.at("shape").get<Shape>(), dtype_from_string(j.at("dtype").get<std::string>())};
  const auto enc = j.value("encoding", std::string("base64-f64le"));
  if (enc != "base64-f64le") throw std::invalid_argument("unsupported tensor encoding: " + enc);
  const auto bytes = detail::base64_decode(j.at("data").get<std::string>());
  if (bytes.size() % 8 != 0) throw std::invalid_argument("tensor payload is not a whole number of float64 values");
  std::vector<double> data(bytes.size() / 8);
  for (std::size_t i = 0; i < data.size(); ++i) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) bits |= std::uint64_t{bytes[i * 8 + static_cast<std::size_t>(b)]} << (8 * b);
    data[i] = std::bit_cast<double>(bits);
  }
  return Tensor(std::move(spec), std::move(data));
}

inline void save_tensor(const Tensor& t, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write tensor file: " + path.string());
  out << tensor_to_json(t).dump() << '\n';
}

inline Tensor load_tensor(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open tensor file: " + path.string());
  return tensor_from_json(nlohmann::json::parse(in));
}

/// x,y,z per line; blank lines and lines starting with '#' are skipped.
inline std::vector<Point3> read_point_cloud_csv(std::istream& in) {
  std::vector<Point3> pts;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ss(line);
    Point3 p{};
    if (!(ss >> p[0] >> p[1] >> p[2])) throw std::invalid_argument("point cloud CSV: bad line " + std::to_string(lineno));
    pts.push_back(p);
  }
  return pts;
}

inline void write_point_cloud_csv(std::ostream& out, std::span<const Point3> pts) {
  out.precision(17);
  for (const auto& p : pts) out << p[0] << ',' << p[1] << ',' << p[2] << '\n';
}

}  // namespace thermalfuzz
