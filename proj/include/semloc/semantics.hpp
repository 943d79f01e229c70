#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "semloc/errors.hpp"
#include "semloc/geom.hpp"
#include "semloc/image.hpp"

namespace semloc {

inline constexpr int kMaxClasses = 256;

class ClassTable
{
public:
  ClassTable() = default;
  explicit ClassTable(std::vector<std::string> names, int background_id = 0)
    : names_(std::move(names)), background_id_(background_id)
  {
    if (names_.size() < 2) throw InvalidArgument("class table needs at least two classes");
    if (names_.size() > static_cast<size_t>(kMaxClasses)) throw InvalidArgument("too many classes");
    if (background_id_ < 0 || background_id_ >= size()) throw InvalidArgument("background id out of range");
    for (size_t i = 0; i < names_.size(); ++i)
      for (size_t j = i + 1; j < names_.size(); ++j)
        if (names_[i] == names_[j]) throw InvalidArgument("duplicate class name " + names_[i]);
  }

  int size() const { return static_cast<int>(names_.size()); }
  int background_id() const { return background_id_; }
  const std::string& name(int id) const { return names_.at(static_cast<size_t>(id)); }
  const std::vector<std::string>& names() const { return names_; }

  std::optional<int> find(const std::string& name) const
  {
    auto it = std::find(names_.begin(), names_.end(), name);
    if (it == names_.end()) return std::nullopt;
    return static_cast<int>(it - names_.begin());
  }

  int id(const std::string& name) const
  {
    auto i = find(name);
    if (!i) throw InvalidArgument("unknown class '" + name + "'");
    return *i;
  }

  bool operator==(const ClassTable&) const = default;

private:
  std::vector<std::string> names_;
  int background_id_ = 0;
};

using LabelImage = Image<std::uint8_t>;

/// H x W x N logits, class index fastest.
using LogitsImage = Image<double>;

struct LogitsPyramid
{
  std::vector<LogitsImage> levels;  // level 0 finest

  int size() const { return static_cast<int>(levels.size()); }
  const LogitsImage& level(int l) const
  {
    const auto& img = levels.at(static_cast<size_t>(l));
    if (img.empty()) throw InvalidArgument("pyramid level " + std::to_string(l) + " was released");
    return img;
  }

  /// Frees the images of all levels finer than `level`.
  void release_below(int level)
  {
    for (int l = 0; l < std::min(level, size()); ++l) levels[static_cast<size_t>(l)] = LogitsImage();
  }
};

inline void validate_labels(const LabelImage& img, const ClassTable& table)
{
  for (auto v : img.data())
    if (v >= table.size()) throw InvalidLabel("label " + std::to_string(int(v)) + " >= class count");
}

/// Fixed-confidence logits: the labeled class gets probability p_pred and
/// every other class (1 - p_pred) / (N - 1).
inline LogitsImage labels_to_logits(const LabelImage& img, const ClassTable& table, double p_pred)
{
  const int n = table.size();
  if (!(p_pred >= 1.0 / n) || !(p_pred < 1.0)) {
    throw InvalidArgument("p_pred must satisfy 1/N <= p_pred < 1");
  }
  const double hit = std::log(p_pred);
  const double miss = std::log((1.0 - p_pred) / (n - 1));
  LogitsImage out(img.width(), img.height(), n, miss);
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      const int c = img(x, y);
      if (c >= n) throw InvalidLabel("label " + std::to_string(c) + " >= class count");
      out(x, y, c) = hit;
    }
  }
  return out;
}

inline double log_sum_exp(std::span<const double> x)
{
  const double m = *std::max_element(x.begin(), x.end());
  double s = 0.0;
  for (double v : x) s += std::exp(v - m);
  return m + std::log(s);
}

inline double softmax_prob(std::span<const double> logits, int c)
{
  if (c < 0 || static_cast<size_t>(c) >= logits.size()) throw InvalidLabel("class id out of range");
  return std::exp(logits[static_cast<size_t>(c)] - log_sum_exp(logits));
}

inline std::vector<double> softmax(std::span<const double> logits)
{
  const double lse = log_sum_exp(logits);
  std::vector<double> out(logits.size());
  for (size_t i = 0; i < logits.size(); ++i) out[i] = std::exp(logits[i] - lse);
  return out;
}

/// Per-class mean over each 2x2 cell.
inline LogitsImage downscale_logits(const LogitsImage& img)
{
  if (img.width() % 2 != 0 || img.height() % 2 != 0) {
    throw DimensionError("downscale needs even dimensions, got " + std::to_string(img.width()) + "x" +
                         std::to_string(img.height()));
  }
  const int n = img.channels();
  LogitsImage out(img.width() / 2, img.height() / 2, n);
  for (int y = 0; y < out.height(); ++y) {
    for (int x = 0; x < out.width(); ++x) {
      auto a = img.pixel(2 * x, 2 * y);
      auto b = img.pixel(2 * x + 1, 2 * y);
      auto c = img.pixel(2 * x, 2 * y + 1);
      auto d = img.pixel(2 * x + 1, 2 * y + 1);
      auto o = out.pixel(x, y);
      for (int k = 0; k < n; ++k) o[k] = (a[k] + b[k] + c[k] + d[k]) / 4.0;
    }
  }
  return out;
}

inline LogitsPyramid build_pyramid(const LogitsImage& img, int levels)
{
  if (levels < 1) throw InvalidArgument("pyramid needs at least one level");
  const int div = 1 << (levels - 1);
  if (img.width() % div != 0 || img.height() % div != 0) {
    throw DimensionError("image " + std::to_string(img.width()) + "x" + std::to_string(img.height()) +
                         " not divisible by " + std::to_string(div));
  }
  LogitsPyramid pyr;
  pyr.levels.reserve(static_cast<size_t>(levels));
  pyr.levels.push_back(img);
  for (int l = 1; l < levels; ++l) pyr.levels.push_back(downscale_logits(pyr.levels.back()));
  return pyr;
}

struct LogProbSample
{
  double logprob = 0.0;
  Vector2d gradient = Vector2d::Zero();  // d logprob / d (u, v)
};

/// Bilinearly interpolated logits at a continuous pixel position followed
/// by log-softmax. Valid on [0, W-1] x [0, H-1]; nullopt outside.
inline std::optional<LogProbSample> try_sample_logprob(const LogitsImage& img, const Vector2d& uv, int c)
{
  const double u = uv.x(), v = uv.y();
  const int w = img.width(), h = img.height();
  if (!(u >= 0.0) || !(v >= 0.0) || u > w - 1 || v > h - 1 || w < 2 || h < 2) return std::nullopt;

  const int x0 = std::min(static_cast<int>(u), w - 2);
  const int y0 = std::min(static_cast<int>(v), h - 2);
  const double ax = u - x0, ay = v - y0;
  const double w00 = (1 - ax) * (1 - ay), w10 = ax * (1 - ay), w01 = (1 - ax) * ay, w11 = ax * ay;

  const int n = img.channels();
  const double* p00 = &img(x0, y0);
  const double* p10 = p00 + n;
  const double* p01 = &img(x0, y0 + 1);
  const double* p11 = p01 + n;

  std::array<double, kMaxClasses> l;
  std::array<double, kMaxClasses> du;
  std::array<double, kMaxClasses> dv;
  double m = -std::numeric_limits<double>::infinity();
  for (int k = 0; k < n; ++k) {
    l[k] = w00 * p00[k] + w10 * p10[k] + w01 * p01[k] + w11 * p11[k];
    du[k] = (1 - ay) * (p10[k] - p00[k]) + ay * (p11[k] - p01[k]);
    dv[k] = (1 - ax) * (p01[k] - p00[k]) + ax * (p11[k] - p10[k]);
    m = std::max(m, l[k]);
  }
  double s = 0.0, su = 0.0, sv = 0.0;
  for (int k = 0; k < n; ++k) {
    const double e = std::exp(l[k] - m);
    s += e;
    su += e * du[k];
    sv += e * dv[k];
  }
  LogProbSample out;
  out.logprob = l[c] - m - std::log(s);
  out.gradient = Vector2d(du[c] - su / s, dv[c] - sv / s);
  return out;
}

inline LogProbSample sample_logprob(const LogitsImage& img, const Vector2d& uv, int c)
{
  if (c < 0 || c >= img.channels()) throw InvalidLabel("class id out of range");
  auto s = try_sample_logprob(img, uv, c);
  if (!s) throw OutOfBounds("sample position outside image");
  return *s;
}

}  // namespace semloc
