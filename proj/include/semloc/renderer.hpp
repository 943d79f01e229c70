#pragma once

// Software z-buffer rasterizer producing semantic label + metric depth views
// of a SemanticMesh, plus semantic edge-pixel selection.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <vector>

#include "semloc/errors.hpp"
#include "semloc/geom.hpp"
#include "semloc/image.hpp"
#include "semloc/mesh.hpp"
#include "semloc/semantics.hpp"

namespace semloc {

struct RenderConfig
{
  double near_plane = kDefaultZMin;
  double far_plane = 200.0;
  int background_id = 0;
};

/// Label and depth images; depth is +inf exactly where the label is background.
struct RenderedView
{
  LabelImage labels;
  Image<double> depth;

  int width() const { return labels.width(); }
  int height() const { return labels.height(); }

  bool operator==(const RenderedView&) const = default;
};

struct EdgePixel
{
  int x = 0;
  int y = 0;
  int class_id = 0;
  double depth = 0.0;

  bool operator==(const EdgePixel&) const = default;
};

namespace detail {

inline double edge_fn(const Vector2d& a, const Vector2d& b, double px, double py)
{
  return (b.x() - a.x()) * (py - a.y()) - (b.y() - a.y()) * (px - a.x());
}

inline void rasterize_triangle(const std::array<Vector3d, 3>& cam, const CameraIntrinsics& k,
                               const RenderConfig& cfg, int class_id, RenderedView& view)
{
  std::array<Vector2d, 3> s;
  std::array<double, 3> inv_z;
  for (int i = 0; i < 3; ++i) {
    inv_z[i] = 1.0 / cam[i].z();
    s[i] = Vector2d(k.fx * cam[i].x() * inv_z[i] + k.cx, k.fy * cam[i].y() * inv_z[i] + k.cy);
  }
  const double area = edge_fn(s[0], s[1], s[2].x(), s[2].y());
  if (!(std::abs(area) > 1e-12)) return;

  const double umin = std::min({s[0].x(), s[1].x(), s[2].x()});
  const double umax = std::max({s[0].x(), s[1].x(), s[2].x()});
  const double vmin = std::min({s[0].y(), s[1].y(), s[2].y()});
  const double vmax = std::max({s[0].y(), s[1].y(), s[2].y()});
  const int x0 = std::max(0, static_cast<int>(std::ceil(umin)));
  const int x1 = std::min(view.width() - 1, static_cast<int>(std::floor(umax)));
  const int y0 = std::max(0, static_cast<int>(std::ceil(vmin)));
  const int y1 = std::min(view.height() - 1, static_cast<int>(std::floor(vmax)));
  if (x0 > x1 || y0 > y1) return;

  const double inv_area = 1.0 / area;
  // Edge functions are affine in (x, y): e = e0 + ex * x + ey * y.
  std::array<double, 3> ex, ey, e0;
  for (int i = 0; i < 3; ++i) {
    const Vector2d& a = s[(i + 1) % 3];
    const Vector2d& b = s[(i + 2) % 3];
    ex[i] = -(b.y() - a.y());
    ey[i] = (b.x() - a.x());
    e0[i] = -(ex[i] * a.x() + ey[i] * a.y());
  }

  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      const double w0 = (e0[0] + ex[0] * x + ey[0] * y) * inv_area;
      const double w1 = (e0[1] + ex[1] * x + ey[1] * y) * inv_area;
      const double w2 = (e0[2] + ex[2] * x + ey[2] * y) * inv_area;
      if (w0 < 0.0 || w1 < 0.0 || w2 < 0.0) continue;
      const double iz = w0 * inv_z[0] + w1 * inv_z[1] + w2 * inv_z[2];
      const double z = 1.0 / iz;
      if (z > cfg.far_plane || z < cfg.near_plane - 1e-9) continue;
      double& zb = view.depth(x, y);
      if (z < zb - 1e-9) {
        zb = z;
        view.labels(x, y) = static_cast<std::uint8_t>(class_id);
      }
    }
  }
}

}  // namespace detail

/// Renders the mesh seen from a camera at `pose` (map_from_camera).
inline RenderedView render(const SemanticMesh& mesh, const CameraIntrinsics& k, const Pose& pose,
                           const RenderConfig& cfg = {})
{
  RenderedView view;
  view.labels = LabelImage(k.width, k.height, 1, static_cast<std::uint8_t>(cfg.background_id));
  view.depth = Image<double>(k.width, k.height, 1, std::numeric_limits<double>::infinity());

  const Pose cam_from_map = inverse(pose);
  std::vector<Vector3d> cam(mesh.vertices.size());
  for (size_t i = 0; i < mesh.vertices.size(); ++i) cam[i] = cam_from_map * mesh.vertices[i];

  const double near = cfg.near_plane;
  for (const auto& tri : mesh.triangles) {
    const std::array<Vector3d, 3> p{cam[tri.v[0]], cam[tri.v[1]], cam[tri.v[2]]};
    const int behind = (p[0].z() < near) + (p[1].z() < near) + (p[2].z() < near);
    if (behind == 3) continue;
    if (p[0].z() > cfg.far_plane && p[1].z() > cfg.far_plane && p[2].z() > cfg.far_plane) continue;
    if (behind == 0) {
      detail::rasterize_triangle(p, k, cfg, tri.class_id, view);
      continue;
    }
    // Clip against the near plane; result is a triangle or a quad.
    std::array<Vector3d, 4> poly;
    int n = 0;
    for (int i = 0; i < 3; ++i) {
      const Vector3d& a = p[i];
      const Vector3d& b = p[(i + 1) % 3];
      const bool a_in = a.z() >= near, b_in = b.z() >= near;
      if (a_in) poly[n++] = a;
      if (a_in != b_in) {
        const double t = (near - a.z()) / (b.z() - a.z());
        Vector3d q = a + t * (b - a);
        q.z() = near;
        poly[n++] = q;
      }
    }
    for (int i = 1; i + 1 < n; ++i) {
      detail::rasterize_triangle({poly[0], poly[i], poly[i + 1]}, k, cfg, tri.class_id, view);
    }
  }
  return view;
}

/// Non-background pixels with a differently labeled 4-neighbor, row-major.
inline std::vector<EdgePixel> extract_edge_pixels(const RenderedView& view, int background_id = 0)
{
  std::vector<EdgePixel> out;
  const auto& L = view.labels;
  const int w = L.width(), h = L.height();
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const int c = L(x, y);
      if (c == background_id) continue;
      const bool edge = (x > 0 && L(x - 1, y) != c) || (x + 1 < w && L(x + 1, y) != c) ||
                        (y > 0 && L(x, y - 1) != c) || (y + 1 < h && L(x, y + 1) != c);
      if (edge) out.push_back({x, y, c, view.depth(x, y)});
    }
  }
  return out;
}

/// Half-size view keeping the top-left pixel of every 2x2 cell.
inline RenderedView downscale_view(const RenderedView& view)
{
  if (view.width() % 2 != 0 || view.height() % 2 != 0) {
    throw DimensionError("view downscale needs even dimensions");
  }
  RenderedView out;
  out.labels = LabelImage(view.width() / 2, view.height() / 2);
  out.depth = Image<double>(view.width() / 2, view.height() / 2);
  for (int y = 0; y < out.height(); ++y) {
    for (int x = 0; x < out.width(); ++x) {
      out.labels(x, y) = view.labels(2 * x, 2 * y);
      out.depth(x, y) = view.depth(2 * x, 2 * y);
    }
  }
  return out;
}

/// Label-only nearest-neighbor downscale (top-left), used for frames.
inline LabelImage downscale_labels(const LabelImage& img)
{
  if (img.width() % 2 != 0 || img.height() % 2 != 0) throw DimensionError("label downscale needs even dimensions");
  LabelImage out(img.width() / 2, img.height() / 2);
  for (int y = 0; y < out.height(); ++y)
    for (int x = 0; x < out.width(); ++x) out(x, y) = img(2 * x, 2 * y);
  return out;
}

/// Rendered view pyramid with top-left downscaling; level 0 is the input.
inline std::vector<RenderedView> build_view_pyramid(const RenderedView& view, int levels)
{
  if (levels < 1) throw InvalidArgument("pyramid needs at least one level");
  std::vector<RenderedView> out;
  out.reserve(static_cast<size_t>(levels));
  out.push_back(view);
  for (int l = 1; l < levels; ++l) out.push_back(downscale_view(out.back()));
  return out;
}

}  // namespace semloc
