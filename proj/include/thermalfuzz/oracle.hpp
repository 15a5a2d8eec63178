#pragma once

// Differential oracle: compares a reference trace with a degraded trace and
// classifies the case. Crashes are deduplicated by the cosine similarity of
// their normalized execution logs.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "thermalfuzz/executors.hpp"
#include "thermalfuzz/tensor.hpp"

namespace thermalfuzz {

/// Outputs differing by more than this (strictly) are a heavy inconsistency.
inline constexpr double kHeavyInconsistencyThreshold = 0.15;

/// Two logs are the same crash when their cosine similarity reaches this.
inline constexpr double kDuplicateSimilarity = 1.0 - 1e-9;

enum class VerdictKind { pass, crash, nan, heavy_inconsistency, invalid };

inline std::string_view to_string(VerdictKind v) {
  switch (v) {
    case VerdictKind::pass: return "pass";
    case VerdictKind::crash: return "crash";
    case VerdictKind::nan: return "nan";
    case VerdictKind::heavy_inconsistency: return "heavy_inconsistency";
    case VerdictKind::invalid: return "invalid";
  }
  return "?";
}

inline VerdictKind verdict_from_string(std::string_view s) {
  for (auto v : {VerdictKind::pass, VerdictKind::crash, VerdictKind::nan, VerdictKind::heavy_inconsistency,
                 VerdictKind::invalid})
    if (to_string(v) == s) return v;
  throw std::invalid_argument("unknown verdict: " + std::string(s));
}

/// Crash, NaN and heavy inconsistency are the bug classes.
inline constexpr bool is_fault(VerdictKind v) {
  return v == VerdictKind::crash || v == VerdictKind::nan || v == VerdictKind::heavy_inconsistency;
}

struct Verdict {
  VerdictKind kind = VerdictKind::pass;
  double mae = 0.0;                         ///< meaningful for pass and heavy_inconsistency
  std::vector<std::string> normalized_log;  ///< crash only
  bool duplicate = false;                   ///< crash only
};

inline double mae(const Tensor& x, const Tensor& y) {
  if (x.spec.shape != y.spec.shape)
    throw std::invalid_argument("mae: shape mismatch " + shape_string(x.spec.shape) + " vs " +
                                shape_string(y.spec.shape));
  if (x.data.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < x.data.size(); ++i) sum += std::abs(x.data[i] - y.data[i]);
  return sum / static_cast<double>(x.data.size());
}

/// MAE over the concatenation of paired output tensors.
inline double mae(std::span<const Tensor> xs, std::span<const Tensor> ys) {
  if (xs.size() != ys.size()) throw std::invalid_argument("mae: output count mismatch");
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t t = 0; t < xs.size(); ++t) {
    if (xs[t].spec.shape != ys[t].spec.shape) throw std::invalid_argument("mae: shape mismatch");
    for (std::size_t i = 0; i < xs[t].data.size(); ++i) sum += std::abs(xs[t].data[i] - ys[t].data[i]);
    n += xs[t].data.size();
  }
  return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

/// Keeps "kind:event" per line, in order. Case ids, temperatures, ratios,
/// sim times and free-form detail are dropped.
inline std::vector<std::string> normalize_log(std::span<const LogLine> lines) {
  std::vector<std::string> tokens;
  tokens.reserve(lines.size());
  for (const auto& l : lines) tokens.push_back(l.kind + ":" + l.event);
  return tokens;
}

/// Cosine similarity of token-frequency vectors. Two empty logs are
/// identical; an empty log against a nonempty one shares nothing.
inline double log_cosine(std::span<const std::string> a, std::span<const std::string> b) {
  if (a.empty() && b.empty()) return 1.0;
  if (a.empty() || b.empty()) return 0.0;
  std::map<std::string_view, std::pair<double, double>> freq;
  for (const auto& t : a) freq[t].first += 1.0;
  for (const auto& t : b) freq[t].second += 1.0;
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (const auto& [tok, c] : freq) {
    dot += c.first * c.second;
    na += c.first * c.first;
    nb += c.second * c.second;
  }
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

struct ArchivedCrash {
  std::vector<std::string> tokens;
  nlohmann::json first_seen;  ///< free-form metadata of the first occurrence
};

class CrashArchive {
 public:
  [[nodiscard]] const std::vector<ArchivedCrash>& entries() const { return entries_; }
  [[nodiscard]] std::size_t size() const { return entries_.size(); }

  [[nodiscard]] bool contains_similar(std::span<const std::string> tokens) const {
    return std::any_of(entries_.begin(), entries_.end(), [&](const ArchivedCrash& e) {
      return log_cosine(tokens, e.tokens) >= kDuplicateSimilarity;
    });
  }

  void append(std::vector<std::string> tokens, nlohmann::json first_seen = nlohmann::json::object()) {
    entries_.push_back(ArchivedCrash{std::move(tokens), std::move(first_seen)});
  }

  void save(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write crash archive: " + path.string());
    for (const auto& e : entries_) {
      nlohmann::ordered_json j;
      j["tokens"] = e.tokens;
      j["first_seen"] = e.first_seen;
      out << j.dump() << '\n';
    }
  }

  static CrashArchive load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open crash archive: " + path.string());
    CrashArchive a;
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto j = nlohmann::json::parse(line);
      a.append(j.at("tokens").get<std::vector<std::string>>(), j.value("first_seen", nlohmann::json::object()));
    }
    return a;
  }

 private:
  std::vector<ArchivedCrash> entries_;
};

/// True when `tokens` repeats an archived crash; otherwise archives it.
inline bool dedup_crash(std::span<const std::string> tokens, CrashArchive& archive,
                        const nlohmann::json& first_seen = nlohmann::json::object()) {
  if (archive.contains_similar(tokens)) return true;
  archive.append({tokens.begin(), tokens.end()}, first_seen);
  return false;
}

inline bool any_nan(std::span<const Tensor> ts) {
  return std::any_of(ts.begin(), ts.end(), [](const Tensor& t) { return t.has_nan(); });
}

/// Classifies one case. Precedence: invalid reference, degraded crash or
/// timeout, degraded-only NaN, heavy inconsistency, pass. A reference whose
/// outputs hold NaN cannot anchor a comparison and is also invalid.
inline Verdict detect(const ExecutionTrace& ref, const ExecutionTrace& deg, CrashArchive& archive,
                      const nlohmann::json& case_meta = nlohmann::json::object()) {
  Verdict v;
  if (!ref.ok() || any_nan(ref.outputs)) {
    v.kind = VerdictKind::invalid;
    return v;
  }
  if (!deg.ok()) {
    v.kind = VerdictKind::crash;
    v.normalized_log = normalize_log(deg.log);
    v.duplicate = dedup_crash(v.normalized_log, archive, case_meta);
    return v;
  }
  if (any_nan(deg.outputs)) {
    v.kind = VerdictKind::nan;
    return v;
  }
  v.mae = mae(ref.outputs, deg.outputs);
  v.kind = v.mae > kHeavyInconsistencyThreshold ? VerdictKind::heavy_inconsistency : VerdictKind::pass;
  return v;
}

}  // namespace thermalfuzz
