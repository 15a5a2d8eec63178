#pragma once

// Numeric operator kernels shared by both executors.
//
// Values are carried in double. Operators with a precision attribute
// emulate it: int8 is symmetric per-tensor quantization, fp16/fp32 round to
// the format's mantissa, and mixed int8/fp16 quantizes operands to int8 and
// accumulates in fp16.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include "thermalfuzz/model_ir.hpp"
#include "thermalfuzz/rng.hpp"
#include "thermalfuzz/tensor.hpp"

namespace thermalfuzz::kernels {

// --- rounding ---------------------------------------------------------------

/// Round to nearest with `mantissa_bits` explicit fraction bits
/// (23 for fp32, 10 for fp16). Idempotent. NaN and infinities pass through.
inline double round_to_mantissa(double x, int mantissa_bits) {
  if (mantissa_bits >= 52 || !std::isfinite(x) || x == 0.0) return x;
  if (mantissa_bits < 0) mantissa_bits = 0;
  // Veltkamp split: the high part carries mantissa_bits + 1 significant bits.
  const double factor = std::ldexp(1.0, 52 - mantissa_bits) + 1.0;
  const double c = factor * x;
  if (!std::isfinite(c)) return x;
  return c - (c - x);
}

inline double to_fp32(double x) { return static_cast<double>(static_cast<float>(x)); }

inline double to_fp16(double x) {
  constexpr double kMax = 65504.0;
  const double r = round_to_mantissa(x, 10);
  if (r > kMax) return std::numeric_limits<double>::infinity();
  if (r < -kMax) return -std::numeric_limits<double>::infinity();
  return r;
}

/// Symmetric int8 quantize-dequantize over the whole span.
inline std::vector<double> fake_quant_int8(std::span<const double> v) {
  double max_abs = 0.0;
  for (double x : v) max_abs = std::max(max_abs, std::abs(x));
  const double scale = max_abs > 0.0 ? max_abs / 127.0 : 1.0;
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i)
    out[i] = std::clamp(std::nearbyint(v[i] / scale), -127.0, 127.0) * scale;
  return out;
}

/// Operand preparation for a precision-annotated operator.
inline std::vector<double> prepare_operand(std::span<const double> v, Precision p) {
  switch (p) {
    case Precision::int8:
    case Precision::mixed_int8_fp16: return fake_quant_int8(v);
    case Precision::fp16: {
      std::vector<double> out(v.begin(), v.end());
      for (auto& x : out) x = to_fp16(x);
      return out;
    }
    case Precision::fp32: {
      std::vector<double> out(v.begin(), v.end());
      for (auto& x : out) x = to_fp32(x);
      return out;
    }
  }
  return {v.begin(), v.end()};
}

/// Accumulator honoring the operator precision.
class Accumulator {
 public:
  explicit Accumulator(Precision p, double init = 0.0) : p_(p), sum_(init) {
    if (p_ == Precision::mixed_int8_fp16) sum_ = to_fp16(sum_);
  }
  void add(double v) {
    sum_ += v;
    if (p_ == Precision::mixed_int8_fp16) sum_ = to_fp16(sum_);
  }
  [[nodiscard]] double result() const {
    switch (p_) {
      case Precision::fp16:
      case Precision::mixed_int8_fp16: return to_fp16(sum_);
      case Precision::fp32: return to_fp32(sum_);
      case Precision::int8: return sum_;
    }
    return sum_;
  }

 private:
  Precision p_;
  double sum_;
};

// --- weights ----------------------------------------------------------------

/// Reserved weight seed: Dense and single-source MatMul use identity weights
/// and zero bias.
inline constexpr std::uint64_t kIdentityWeightSeed = 0;

/// Parameters are a pure function of (edge seed, parameter index).
class WeightStream {
 public:
  explicit WeightStream(std::uint64_t seed) : seed_(seed) {}

  /// `n` values uniform in [-bound, bound].
  std::vector<double> uniform(std::size_t n, double bound) {
    std::vector<double> w(n);
    for (auto& x : w) x = (2.0 * counter_uniform({seed_, index_++}) - 1.0) * bound;
    return w;
  }

  /// `n` values uniform in [lo, hi].
  std::vector<double> range(std::size_t n, double lo, double hi) {
    std::vector<double> w(n);
    for (auto& x : w) x = lo + (hi - lo) * counter_uniform({seed_, index_++});
    return w;
  }

  [[nodiscard]] std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
  std::uint64_t index_ = 0;
};

/// Variance-preserving uniform bound.
inline double fan_in_bound(std::int64_t fan_in) { return std::sqrt(3.0 / static_cast<double>(std::max<std::int64_t>(fan_in, 1))); }

// --- dense-style kernels ----------------------------------------------------

/// (H, W, Cin) * w[K][K][Cin][Cout] + bias, stride 1, no padding.
inline Tensor conv2d(const Tensor& x, std::span<const double> w, std::span<const double> bias, int k, int c_out,
                     Precision p) {
  if (x.spec.rank() != 3) throw std::invalid_argument("conv2d: expects rank-3 input");
  const auto h = x.spec.shape[0], wd = x.spec.shape[1], c_in = x.spec.shape[2];
  const auto ho = h - k + 1, wo = wd - k + 1;
  if (ho < 1 || wo < 1) throw std::invalid_argument("conv2d: kernel larger than input");
  if (static_cast<std::int64_t>(w.size()) != k * k * c_in * c_out || static_cast<std::int64_t>(bias.size()) != c_out)
    throw std::invalid_argument("conv2d: weight size mismatch");
  const auto xi = prepare_operand(x.data, p);
  const auto wi = prepare_operand(w, p);
  Tensor out(TensorSpec{{ho, wo, c_out}, x.spec.dtype});
  for (std::int64_t y = 0; y < ho; ++y)
    for (std::int64_t xo = 0; xo < wo; ++xo)
      for (std::int64_t co = 0; co < c_out; ++co) {
        Accumulator acc(p, bias[static_cast<std::size_t>(co)]);
        for (std::int64_t ky = 0; ky < k; ++ky)
          for (std::int64_t kx = 0; kx < k; ++kx)
            for (std::int64_t ci = 0; ci < c_in; ++ci)
              acc.add(xi[static_cast<std::size_t>(((y + ky) * wd + (xo + kx)) * c_in + ci)] *
                      wi[static_cast<std::size_t>(((ky * k + kx) * c_in + ci) * c_out + co)]);
        out.data[static_cast<std::size_t>((y * wo + xo) * c_out + co)] = acc.result();
      }
  return out;
}

/// Per-channel (H, W, C) * w[K][K][C] + bias.
inline Tensor depthwise_conv2d(const Tensor& x, std::span<const double> w, std::span<const double> bias, int k,
                               Precision p) {
  if (x.spec.rank() != 3) throw std::invalid_argument("depthwise_conv2d: expects rank-3 input");
  const auto h = x.spec.shape[0], wd = x.spec.shape[1], c = x.spec.shape[2];
  const auto ho = h - k + 1, wo = wd - k + 1;
  if (ho < 1 || wo < 1) throw std::invalid_argument("depthwise_conv2d: kernel larger than input");
  if (static_cast<std::int64_t>(w.size()) != k * k * c || static_cast<std::int64_t>(bias.size()) != c)
    throw std::invalid_argument("depthwise_conv2d: weight size mismatch");
  const auto xi = prepare_operand(x.data, p);
  const auto wi = prepare_operand(w, p);
  Tensor out(TensorSpec{{ho, wo, c}, x.spec.dtype});
  for (std::int64_t y = 0; y < ho; ++y)
    for (std::int64_t xo = 0; xo < wo; ++xo)
      for (std::int64_t ch = 0; ch < c; ++ch) {
        Accumulator acc(p, bias[static_cast<std::size_t>(ch)]);
        for (std::int64_t ky = 0; ky < k; ++ky)
          for (std::int64_t kx = 0; kx < k; ++kx)
            acc.add(xi[static_cast<std::size_t>(((y + ky) * wd + (xo + kx)) * c + ch)] *
                    wi[static_cast<std::size_t>((ky * k + kx) * c + ch)]);
        out.data[static_cast<std::size_t>((y * wo + xo) * c + ch)] = acc.result();
      }
  return out;
}

/// (..., M, K) x w[K][N]: a shared right operand over all leading rows.
inline Tensor matmul(const Tensor& x, std::span<const double> w, std::int64_t n, Precision p) {
  if (x.spec.rank() < 2) throw std::invalid_argument("matmul: expects rank >= 2");
  const auto kdim = x.spec.shape.back();
  if (static_cast<std::int64_t>(w.size()) != kdim * n) throw std::invalid_argument("matmul: weight size mismatch");
  const auto rows = x.spec.size() / kdim;
  const auto xi = prepare_operand(x.data, p);
  const auto wi = prepare_operand(w, p);
  Shape s = x.spec.shape;
  s.back() = n;
  Tensor out(TensorSpec{s, x.spec.dtype});
  for (std::int64_t r = 0; r < rows; ++r)
    for (std::int64_t j = 0; j < n; ++j) {
      Accumulator acc(p);
      for (std::int64_t i = 0; i < kdim; ++i)
        acc.add(xi[static_cast<std::size_t>(r * kdim + i)] * wi[static_cast<std::size_t>(i * n + j)]);
      out.data[static_cast<std::size_t>(r * n + j)] = acc.result();
    }
  return out;
}

/// A(M, K) x B(K, N).
inline Tensor matmul(const Tensor& a, const Tensor& b, Precision p) {
  if (a.spec.rank() != 2 || b.spec.rank() != 2 || a.spec.shape[1] != b.spec.shape[0])
    throw std::invalid_argument("matmul: operand shapes disagree");
  return matmul(a, b.data, b.spec.shape[1], p);
}

/// Last-axis linear map x * w[Fin][Fout] + bias, full precision.
inline Tensor dense(const Tensor& x, std::span<const double> w, std::span<const double> bias, std::int64_t f_out) {
  const auto f_in = x.spec.shape.back();
  if (static_cast<std::int64_t>(w.size()) != f_in * f_out || static_cast<std::int64_t>(bias.size()) != f_out)
    throw std::invalid_argument("dense: weight size mismatch");
  const auto rows = x.spec.size() / f_in;
  Shape s = x.spec.shape;
  s.back() = f_out;
  Tensor out(TensorSpec{s, x.spec.dtype});
  for (std::int64_t r = 0; r < rows; ++r)
    for (std::int64_t j = 0; j < f_out; ++j) {
      double acc = bias[static_cast<std::size_t>(j)];
      for (std::int64_t i = 0; i < f_in; ++i)
        acc += x.data[static_cast<std::size_t>(r * f_in + i)] * w[static_cast<std::size_t>(i * f_out + j)];
      out.data[static_cast<std::size_t>(r * f_out + j)] = acc;
    }
  return out;
}

inline std::vector<double> identity_matrix(std::int64_t rows, std::int64_t cols) {
  std::vector<double> w(static_cast<std::size_t>(rows * cols), 0.0);
  for (std::int64_t i = 0; i < std::min(rows, cols); ++i) w[static_cast<std::size_t>(i * cols + i)] = 1.0;
  return w;
}

// --- elementwise, pooling, normalization ------------------------------------

inline Tensor relu(Tensor x) {
  for (auto& v : x.data) v = v > 0.0 ? v : 0.0;
  return x;
}

/// Binary elementwise over equal shapes.
inline Tensor elementwise(const Tensor& a, const Tensor& b, ElementwiseOp op) {
  if (a.spec.shape != b.spec.shape) throw std::invalid_argument("elementwise: shapes differ");
  Tensor out = a;
  for (std::size_t i = 0; i < out.data.size(); ++i)
    out.data[i] = op == ElementwiseOp::mul ? a.data[i] * b.data[i] : a.data[i] + b.data[i];
  return out;
}

/// Unary add/mul against a per-feature (last axis) parameter vector.
inline Tensor elementwise(const Tensor& a, std::span<const double> per_feature, ElementwiseOp op) {
  const auto f = a.spec.shape.back();
  if (static_cast<std::int64_t>(per_feature.size()) != f) throw std::invalid_argument("elementwise: parameter size");
  Tensor out = a;
  for (std::size_t i = 0; i < out.data.size(); ++i) {
    const double q = per_feature[i % static_cast<std::size_t>(f)];
    out.data[i] = op == ElementwiseOp::mul ? a.data[i] * q : a.data[i] + q;
  }
  return out;
}

/// 3-wide, stride-1, same-padded pooling over the leading spatial axes
/// (axes 0 and 1 for rank >= 3, axis 0 for rank 2, the only axis for rank 1).
/// Average pooling divides by the number of in-bounds elements.
inline Tensor pool(const Tensor& x, PoolMode mode) {
  const auto& s = x.spec.shape;
  const std::size_t rank = s.size();
  const std::int64_t a0 = s[0];
  const std::int64_t a1 = rank >= 3 ? s[1] : 1;
  const std::int64_t inner = x.spec.size() / (a0 * a1);
  const bool two_axes = rank >= 3;
  Tensor out(x.spec);
  for (std::int64_t i = 0; i < a0; ++i)
    for (std::int64_t j = 0; j < a1; ++j)
      for (std::int64_t c = 0; c < inner; ++c) {
        double best = -std::numeric_limits<double>::infinity();
        double sum = 0.0;
        int count = 0;
        for (std::int64_t di = -1; di <= 1; ++di) {
          const std::int64_t ii = i + di;
          if (ii < 0 || ii >= a0) continue;
          for (std::int64_t dj = two_axes ? -1 : 0; dj <= (two_axes ? 1 : 0); ++dj) {
            const std::int64_t jj = j + dj;
            if (jj < 0 || jj >= a1) continue;
            const double v = x.data[static_cast<std::size_t>((ii * a1 + jj) * inner + c)];
            best = std::max(best, v);
            if (std::isnan(v)) best = v;
            sum += v;
            ++count;
          }
        }
        out.data[static_cast<std::size_t>((i * a1 + j) * inner + c)] =
            mode == PoolMode::max ? best : sum / static_cast<double>(count);
      }
  return out;
}

/// Inference-mode batch normalization over the last axis.
inline Tensor batch_norm(const Tensor& x, std::span<const double> gamma, std::span<const double> beta,
                         std::span<const double> mean, std::span<const double> var) {
  constexpr double kEps = 1e-5;
  const auto f = static_cast<std::size_t>(x.spec.shape.back());
  Tensor out = x;
  for (std::size_t i = 0; i < out.data.size(); ++i) {
    const std::size_t c = i % f;
    out.data[i] = gamma[c] * (x.data[i] - mean[c]) / std::sqrt(var[c] + kEps) + beta[c];
  }
  return out;
}

/// Nearest-index resampling of the flattened input onto `target`.
inline Tensor adapt(const Tensor& x, const TensorSpec& target) {
  Tensor out(target);
  const auto n_in = static_cast<std::int64_t>(x.data.size());
  const auto n_out = static_cast<std::int64_t>(out.data.size());
  for (std::int64_t i = 0; i < n_out; ++i) out.data[static_cast<std::size_t>(i)] = x.data[static_cast<std::size_t>(i * n_in / n_out)];
  return out;
}

// --- recurrent --------------------------------------------------------------

enum class Cell { rnn, lstm, gru };

inline int gate_count(Cell c) {
  switch (c) {
    case Cell::rnn: return 1;
    case Cell::lstm: return 4;
    case Cell::gru: return 3;
  }
  return 1;
}

/// Weights of one direction of one layer; gates are stacked along rows.
struct RecurrentWeights {
  std::vector<double> w_in;   ///< [gates*H][F]
  std::vector<double> w_rec;  ///< [gates*H][H]
  std::vector<double> b_in;   ///< [gates*H]
  std::vector<double> b_rec;  ///< [gates*H]
};

/// Recurrent weight bound relative to the default 1/sqrt(H).
inline constexpr double kRecurrentGain = 2.0;

inline RecurrentWeights recurrent_weights(WeightStream& ws, Cell cell, std::int64_t features, std::int64_t hidden) {
  const auto g = static_cast<std::size_t>(gate_count(cell));
  const auto h = static_cast<std::size_t>(hidden);
  const double bound = kRecurrentGain / std::sqrt(static_cast<double>(hidden));
  RecurrentWeights rw;
  rw.w_in = ws.uniform(g * h * static_cast<std::size_t>(features), bound);
  rw.w_rec = ws.uniform(g * h * h, bound);
  rw.b_in = ws.uniform(g * h, bound);
  rw.b_rec = ws.uniform(g * h, bound);
  return rw;
}

/// Decides whether the state update at (pass, step) is skipped.
using SkipFn = std::function<bool(int pass, std::int64_t step)>;

inline double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

/// One direction of one layer over a (T, B, F) sequence; returns (T, B, H).
/// A skipped step keeps the previous state and emits it unchanged.
inline std::vector<double> recurrent_pass(std::span<const double> seq, std::int64_t t_len, std::int64_t batch,
                                          std::int64_t features, std::int64_t hidden, Cell cell,
                                          const RecurrentWeights& rw, bool reverse, int pass, const SkipFn& skip) {
  const auto H = static_cast<std::size_t>(hidden);
  const auto F = static_cast<std::size_t>(features);
  const auto G = static_cast<std::size_t>(gate_count(cell));
  std::vector<double> out(static_cast<std::size_t>(t_len * batch) * H, 0.0);
  std::vector<double> h(static_cast<std::size_t>(batch) * H, 0.0), c(h.size(), 0.0);
  std::vector<double> gx(G * H), gh(G * H);

  for (std::int64_t step = 0; step < t_len; ++step) {
    const std::int64_t t = reverse ? t_len - 1 - step : step;
    const bool skipped = skip && skip(pass, step);
    for (std::int64_t b = 0; b < batch; ++b) {
      double* hb = &h[static_cast<std::size_t>(b) * H];
      double* cb = &c[static_cast<std::size_t>(b) * H];
      if (!skipped) {
        const double* xt = &seq[static_cast<std::size_t>(t * batch + b) * F];
        for (std::size_t r = 0; r < G * H; ++r) {
          double ax = rw.b_in[r], ah = rw.b_rec[r];
          for (std::size_t i = 0; i < F; ++i) ax += rw.w_in[r * F + i] * xt[i];
          for (std::size_t i = 0; i < H; ++i) ah += rw.w_rec[r * H + i] * hb[i];
          gx[r] = ax;
          gh[r] = ah;
        }
        for (std::size_t j = 0; j < H; ++j) {
          switch (cell) {
            case Cell::rnn: hb[j] = std::tanh(gx[j] + gh[j]); break;
            case Cell::lstm: {
              const double ig = sigmoid(gx[j] + gh[j]);
              const double fg = sigmoid(gx[H + j] + gh[H + j]);
              const double gg = std::tanh(gx[2 * H + j] + gh[2 * H + j]);
              const double og = sigmoid(gx[3 * H + j] + gh[3 * H + j]);
              cb[j] = fg * cb[j] + ig * gg;
              hb[j] = og * std::tanh(cb[j]);
              break;
            }
            case Cell::gru: {
              const double rg = sigmoid(gx[j] + gh[j]);
              const double zg = sigmoid(gx[H + j] + gh[H + j]);
              const double ng = std::tanh(gx[2 * H + j] + rg * gh[2 * H + j]);
              hb[j] = (1.0 - zg) * ng + zg * hb[j];
              break;
            }
          }
        }
      }
      std::copy(hb, hb + H, &out[static_cast<std::size_t>(t * batch + b) * H]);
    }
  }
  return out;
}

/// Full recurrent operator: stacked layers, optional reverse direction with
/// features concatenated [forward, backward]. Passes are numbered
/// layer * 2 + direction.
inline Tensor recurrent(const Tensor& x, Cell cell, std::int64_t hidden, int layers, bool bidirectional,
                        WeightStream& ws, const SkipFn& skip) {
  if (x.spec.rank() != 3) throw std::invalid_argument("recurrent: expects (time, batch, feature)");
  const auto T = x.spec.shape[0], B = x.spec.shape[1];
  std::int64_t features = x.spec.shape[2];
  std::vector<double> seq = x.data;
  const int dirs = bidirectional ? 2 : 1;
  for (int layer = 0; layer < layers; ++layer) {
    std::vector<std::vector<double>> outs;
    for (int d = 0; d < dirs; ++d) {
      const auto rw = recurrent_weights(ws, cell, features, hidden);
      outs.push_back(recurrent_pass(seq, T, B, features, hidden, cell, rw, d == 1, layer * 2 + d, skip));
    }
    const std::int64_t out_f = hidden * dirs;
    std::vector<double> next(static_cast<std::size_t>(T * B * out_f));
    for (std::int64_t r = 0; r < T * B; ++r)
      for (int d = 0; d < dirs; ++d)
        std::copy_n(&outs[static_cast<std::size_t>(d)][static_cast<std::size_t>(r * hidden)], hidden,
                    &next[static_cast<std::size_t>(r * out_f + d * hidden)]);
    seq = std::move(next);
    features = out_f;
  }
  return Tensor(TensorSpec{{T, B, features}, x.spec.dtype}, std::move(seq));
}

}  // namespace thermalfuzz::kernels
