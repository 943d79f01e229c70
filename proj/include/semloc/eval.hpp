#pragma once

// Absolute pose error against ground truth. Poses are camera frames
// (x right, y down, z forward); errors are reported in the ground-truth
// body frame with x forward (longitudinal), y left (lateral), z up.

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "semloc/errors.hpp"
#include "semloc/geom.hpp"
#include "semloc/io.hpp"

namespace semloc {

struct FrameError
{
  int frame_id = 0;
  double lat = 0.0;
  double lon = 0.0;
  double vert = 0.0;
  double trans = 0.0;
  double rot_deg = 0.0;
};

inline FrameError pose_error(const Pose& gt, const Pose& est, int frame_id = 0)
{
  const Pose d = inverse(gt) * est;
  FrameError e;
  e.frame_id = frame_id;
  e.lon = d.translation.z();
  e.lat = -d.translation.x();
  e.vert = -d.translation.y();
  e.trans = d.translation.norm();
  e.rot_deg = rad2deg(rotation_angle(d.rotation));
  return e;
}

/// Pairs frames by exact frame_id. Every estimate must have a ground-truth
/// entry; ground-truth frames without an estimate are skipped.
inline std::vector<FrameError> trajectory_errors(const std::vector<io::PoseRecord>& gt,
                                                 const std::vector<io::PoseRecord>& est)
{
  std::map<int, Pose> by_id;
  for (const auto& r : gt)
    if (!by_id.emplace(r.frame_id, r.pose).second)
      throw InvalidArgument("duplicate ground-truth frame " + std::to_string(r.frame_id));
  std::vector<FrameError> out;
  out.reserve(est.size());
  for (const auto& r : est) {
    auto it = by_id.find(r.frame_id);
    if (it == by_id.end()) throw InvalidArgument("frame " + std::to_string(r.frame_id) + " has no ground truth");
    out.push_back(pose_error(it->second, r.pose, r.frame_id));
  }
  return out;
}

struct CdfPoint
{
  double threshold = 0.0;
  double fraction = 0.0;
};

/// Fraction of values <= threshold.
inline double cdf_at(const std::vector<double>& values, double threshold)
{
  if (values.empty()) throw EmptyInput("no values");
  const auto n = std::count_if(values.begin(), values.end(), [&](double v) { return v <= threshold; });
  return static_cast<double>(n) / static_cast<double>(values.size());
}

/// Empirical CDF sampled at 0, step, 2*step, ... up to the first grid point
/// at or beyond the maximum, so the last fraction is 1.
inline std::vector<CdfPoint> cumulative_distribution(std::vector<double> values, double step)
{
  if (values.empty()) throw EmptyInput("no values");
  if (!(step > 0.0)) throw InvalidArgument("grid step must be positive");
  std::sort(values.begin(), values.end());
  const double vmax = values.back();
  const auto steps = static_cast<long long>(std::ceil(std::max(0.0, vmax) / step));
  std::vector<CdfPoint> out;
  out.reserve(static_cast<std::size_t>(steps + 1));
  std::size_t below = 0;
  for (long long i = 0; i <= steps; ++i) {
    const double t = static_cast<double>(i) * step;
    while (below < values.size() && values[below] <= t) ++below;
    out.push_back({t, static_cast<double>(below) / static_cast<double>(values.size())});
  }
  if (out.back().fraction < 1.0) out.push_back({vmax, 1.0});  // rounding at the last step
  return out;
}

struct Summary
{
  double median = 0.0;  // lower-middle element for even counts
  double mean = 0.0;
  double p90 = 0.0;  // nearest rank
  double max = 0.0;
  std::size_t count = 0;
};

inline Summary summarize(std::vector<double> values)
{
  if (values.empty()) throw EmptyInput("no values");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  Summary s;
  s.count = n;
  s.median = values[(n - 1) / 2];
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / static_cast<double>(n);
  const auto rank = static_cast<std::size_t>(std::ceil(0.9 * static_cast<double>(n) - 1e-9));
  s.p90 = values[std::max<std::size_t>(rank, 1) - 1];
  s.max = values.back();
  return s;
}

inline std::vector<double> translational(const std::vector<FrameError>& errs)
{
  std::vector<double> v;
  for (const auto& e : errs) v.push_back(e.trans);
  return v;
}

inline std::vector<double> rotational(const std::vector<FrameError>& errs)
{
  std::vector<double> v;
  for (const auto& e : errs) v.push_back(e.rot_deg);
  return v;
}

inline void write_errors_csv(std::ostream& os, const std::vector<FrameError>& errs)
{
  os << "frame_id,lat,lon,vert,trans,rot_deg\n" << std::setprecision(9);
  for (const auto& e : errs)
    os << e.frame_id << ',' << e.lat << ',' << e.lon << ',' << e.vert << ',' << e.trans << ',' << e.rot_deg << '\n';
}

inline void write_cdf_csv(std::ostream& os, const std::vector<CdfPoint>& cdf)
{
  os << "threshold,fraction\n" << std::setprecision(9);
  for (const auto& p : cdf) os << p.threshold << ',' << p.fraction << '\n';
}

}  // namespace semloc
