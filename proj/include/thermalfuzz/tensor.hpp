#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace thermalfuzz {

enum class DType { int8, fp16, fp32 };

inline std::string_view to_string(DType d) {
  switch (d) {
    case DType::int8: return "int8";
    case DType::fp16: return "fp16";
    case DType::fp32: return "fp32";
  }
  return "?";
}

inline DType dtype_from_string(std::string_view s) {
  if (s == "int8") return DType::int8;
  if (s == "fp16") return DType::fp16;
  if (s == "fp32") return DType::fp32;
  throw std::invalid_argument("unknown dtype: " + std::string(s));
}

using Shape = std::vector<std::int64_t>;

inline constexpr std::size_t kMaxRank = 5;

inline std::int64_t element_count(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::int64_t{1}, std::multiplies<>());
}

inline std::string shape_string(const Shape& s) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ')';
  return os.str();
}

struct TensorSpec {
  Shape shape;
  DType dtype = DType::fp32;

  [[nodiscard]] std::size_t rank() const { return shape.size(); }
  [[nodiscard]] std::int64_t size() const { return element_count(shape); }

  [[nodiscard]] bool valid() const {
    if (shape.empty() || shape.size() > kMaxRank) return false;
    for (auto d : shape)
      if (d < 1) return false;
    return true;
  }

  friend bool operator==(const TensorSpec&, const TensorSpec&) = default;
};

/// Dense row-major tensor. Values are held in double regardless of dtype;
/// dtype records the storage class the value stands for.
struct Tensor {
  TensorSpec spec;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(TensorSpec s, double fill = 0.0)
      : spec(std::move(s)), data(static_cast<std::size_t>(spec.size()), fill) {}
  Tensor(TensorSpec s, std::vector<double> values) : spec(std::move(s)), data(std::move(values)) {
    if (static_cast<std::int64_t>(data.size()) != spec.size())
      throw std::invalid_argument("Tensor: data length " + std::to_string(data.size()) +
                                  " does not match shape " + shape_string(spec.shape));
  }

  [[nodiscard]] std::size_t size() const { return data.size(); }
  [[nodiscard]] std::span<const double> values() const { return data; }

  [[nodiscard]] bool has_nan() const {
    for (double v : data)
      if (std::isnan(v)) return true;
    return false;
  }

  friend bool operator==(const Tensor&, const Tensor&) = default;
};

/// Bitwise equality, so NaN payloads compare equal to themselves.
inline bool bit_identical(const Tensor& a, const Tensor& b) {
  if (!(a.spec == b.spec) || a.data.size() != b.data.size()) return false;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    if (std::bit_cast<std::uint64_t>(a.data[i]) != std::bit_cast<std::uint64_t>(b.data[i])) return false;
  }
  return true;
}

}  // namespace thermalfuzz
