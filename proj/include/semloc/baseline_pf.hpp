#pragma once

// Particle filter baseline: particles are propagated with odometry plus
// process noise and weighted by how well a low-resolution semantic render
// at the particle pose agrees with the frame segmentation.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <vector>

#include "semloc/errors.hpp"
#include "semloc/geom.hpp"
#include "semloc/mesh.hpp"
#include "semloc/parallel.hpp"
#include "semloc/renderer.hpp"
#include "semloc/semantics.hpp"

namespace semloc {

struct Particle
{
  Pose pose;
  double weight = 0.0;
};

inline Vector6d default_process_sigma()
{
  Vector6d s;
  const double r = deg2rad(0.2);
  s << 0.05, 0.02, 0.05, r, r, r;
  return s;
}

inline Vector6d default_init_sigma()
{
  Vector6d s;
  const double r = deg2rad(1.0);
  s << 0.3, 0.1, 0.3, r, r, r;
  return s;
}

struct PfConfig
{
  int particle_count = 500;
  double best_fraction = 0.10;
  Vector6d process_sigma = default_process_sigma();  // per frame, body frame
  Vector6d init_sigma = default_init_sigma();
  int score_downscale = 2;  // halvings; 2 means quarter resolution
  double score_exponent = 10.0;
  int keyframe_stride = 5;
  std::uint64_t seed = 1;
  RenderConfig render;
  int threads = 1;

  void validate() const
  {
    if (particle_count < 1) throw InvalidArgument("particle_count must be positive");
    if (!(best_fraction > 0.0 && best_fraction <= 1.0)) throw InvalidArgument("best_fraction must lie in (0, 1]");
    if ((process_sigma.array() < 0.0).any() || (init_sigma.array() < 0.0).any())
      throw InvalidArgument("negative noise sigma");
    if (score_downscale < 0) throw InvalidArgument("score_downscale must be non-negative");
    if (!(score_exponent > 0.0)) throw InvalidArgument("score_exponent must be positive");
    if (keyframe_stride < 1) throw InvalidArgument("keyframe_stride must be positive");
    if (threads < 1) throw InvalidArgument("threads must be positive");
  }
};

/// Frame labels subsampled to the scoring resolution.
inline LabelImage score_frame(const LabelImage& frame, int downscale)
{
  LabelImage out = frame;
  for (int i = 0; i < downscale; ++i) out = downscale_labels(out);
  return out;
}

/// Fraction of non-background rendered pixels whose label matches the
/// frame. `frame` must already be at the resolution of `k`.
inline double score_particle(const SemanticMesh& mesh, const CameraIntrinsics& k, const Pose& pose,
                             const LabelImage& frame, const RenderConfig& rc = {})
{
  if (frame.width() != k.width || frame.height() != k.height)
    throw DimensionError("frame does not match the scoring intrinsics");
  const RenderedView view = render(mesh, k, pose, rc);
  long long drawn = 0, agree = 0;
  for (int y = 0; y < k.height; ++y)
    for (int x = 0; x < k.width; ++x) {
      const int c = view.labels(x, y);
      if (c == rc.background_id) continue;
      ++drawn;
      if (frame(x, y) == c) ++agree;
    }
  return drawn == 0 ? 0.0 : static_cast<double>(agree) / static_cast<double>(drawn);
}

inline double effective_sample_size(const std::vector<Particle>& ps)
{
  double s = 0.0;
  for (const auto& p : ps) s += p.weight * p.weight;
  return s > 0.0 ? 1.0 / s : 0.0;
}

/// Rescales weights to sum to one; uniform if they all vanished.
inline void normalize_weights(std::vector<Particle>& ps)
{
  if (ps.empty()) throw EmptyInput("no particles");
  double sum = 0.0;
  for (const auto& p : ps) sum += p.weight;
  if (!(sum > 0.0) || !std::isfinite(sum)) {
    for (auto& p : ps) p.weight = 1.0 / static_cast<double>(ps.size());
    return;
  }
  for (auto& p : ps) p.weight /= sum;
}

/// Systematic resampling with a single uniform offset; output weights are
/// uniform. Expects normalized weights.
template <typename Rng>
std::vector<Particle> systematic_resample(const std::vector<Particle>& ps, Rng& rng)
{
  if (ps.empty()) throw EmptyInput("no particles");
  const std::size_t n = ps.size();
  const double step = 1.0 / static_cast<double>(n);
  const double u0 = std::uniform_real_distribution<double>(0.0, step)(rng);
  std::vector<Particle> out;
  out.reserve(n);
  double cum = ps[0].weight;
  std::size_t j = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double u = u0 + static_cast<double>(i) * step;
    while (u > cum && j + 1 < n) cum += ps[++j].weight;
    out.push_back({ps[j].pose, step});
  }
  return out;
}

template <typename Rng>
Pose perturb(const Pose& p, const Vector6d& sigma, Rng& rng)
{
  std::normal_distribution<double> gauss(0.0, 1.0);
  Vector6d n;
  for (int i = 0; i < 6; ++i) n[i] = sigma[i] * gauss(rng);
  return p * exp_map(Twist(n));
}

/// Translation: arithmetic mean; rotation: sign-aligned quaternion mean;
/// both over the best_fraction highest-weight particles (ties by index).
inline Pose pf_estimate(const std::vector<Particle>& ps, double best_fraction)
{
  if (ps.empty()) throw EmptyInput("no particles");
  if (!(best_fraction > 0.0 && best_fraction <= 1.0)) throw InvalidArgument("best_fraction must lie in (0, 1]");
  std::vector<std::size_t> idx(ps.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return ps[a].weight > ps[b].weight; });
  const auto m = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::ceil(best_fraction * static_cast<double>(ps.size()) - 1e-9)), 1, ps.size());

  Vector3d t = Vector3d::Zero();
  Eigen::Vector4d q_sum = Eigen::Vector4d::Zero();
  const Eigen::Vector4d ref = ps[idx[0]].pose.quaternion().coeffs();
  for (std::size_t i = 0; i < m; ++i) {
    const Pose& p = ps[idx[i]].pose;
    t += p.translation;
    Eigen::Vector4d q = p.quaternion().coeffs();
    if (q.dot(ref) < 0.0) q = -q;
    q_sum += q;
  }
  t /= static_cast<double>(m);
  Eigen::Quaterniond q;
  q.coeffs() = q_sum.normalized();
  return Pose::from_quaternion(q, t);
}

/// Stateful filter. Every frame propagates the particles; every
/// keyframe_stride-th frame is also scored and possibly resampled.
class ParticleFilterLocalizer
{
 public:
  ParticleFilterLocalizer(SemanticMesh map, CameraIntrinsics k, PfConfig cfg = {})
      : map_(std::move(map)), k_(k), cfg_(std::move(cfg)), rng_(cfg_.seed)
  {
    k_.validate();
    cfg_.validate();
    const int scale = 1 << cfg_.score_downscale;
    if (k_.width % scale != 0 || k_.height % scale != 0)
      throw DimensionError("image size must be divisible by 2^score_downscale");
    k_low_ = k_.top_left_level(cfg_.score_downscale);
  }

  void initialize(const Pose& pose)
  {
    if (!pose.is_finite()) throw InvalidArgument("initial pose is not finite");
    rng_.seed(cfg_.seed);
    particles_.assign(static_cast<std::size_t>(cfg_.particle_count), {});
    const double w = 1.0 / cfg_.particle_count;
    for (auto& p : particles_) p = {perturb(pose, cfg_.init_sigma, rng_), w};
    frame_index_ = 0;
    initialized_ = true;
  }

  /// Moves every particle by odom_step followed by seeded process noise.
  void propagate(const Pose& odom_step)
  {
    for (auto& p : particles_) p.pose = perturb(p.pose * odom_step, cfg_.process_sigma, rng_);
  }

  /// w <- w * score^exponent, normalized; systematic resampling when the
  /// effective sample size drops below half the particle count.
  void update(const LabelImage& frame)
  {
    const LabelImage low = score_frame(frame, cfg_.score_downscale);
    std::vector<double> scores(particles_.size());
    parallel_for(particles_.size(), cfg_.threads, [&](std::size_t i) {
      scores[i] = score_particle(map_, k_low_, particles_[i].pose, low, cfg_.render);
    });
    for (std::size_t i = 0; i < particles_.size(); ++i)
      particles_[i].weight *= std::pow(scores[i], cfg_.score_exponent);
    normalize_weights(particles_);
    if (effective_sample_size(particles_) < 0.5 * static_cast<double>(particles_.size())) {
      particles_ = systematic_resample(particles_, rng_);
      ++resample_count_;
    }
  }

  Pose process_frame(const LabelImage& frame, const Pose& odom_step)
  {
    if (!initialized_) throw NotInitialized("call initialize() before process_frame()");
    if (frame.width() != k_.width || frame.height() != k_.height)
      throw DimensionError("frame does not match the camera");
    const int index = frame_index_++;
    if (index > 0) propagate(odom_step);
    if (index % cfg_.keyframe_stride == 0) update(frame);
    return estimate();
  }

  Pose estimate() const { return pf_estimate(particles_, cfg_.best_fraction); }
  const std::vector<Particle>& particles() const { return particles_; }
  const PfConfig& config() const { return cfg_; }
  int resample_count() const { return resample_count_; }

 private:
  SemanticMesh map_;
  CameraIntrinsics k_;
  CameraIntrinsics k_low_;
  PfConfig cfg_;
  std::mt19937_64 rng_;
  std::vector<Particle> particles_;
  int frame_index_ = 0;
  int resample_count_ = 0;
  bool initialized_ = false;
};

}  // namespace semloc
