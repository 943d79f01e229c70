#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "semloc/errors.hpp"
#include "semloc/geom.hpp"

namespace semloc {

struct Triangle
{
  std::array<std::uint32_t, 3> v{};
  int class_id = 0;

  bool operator==(const Triangle&) const = default;
};

/// Triangle mesh in map coordinates with one class label per face.
struct SemanticMesh
{
  std::vector<Vector3d> vertices;
  std::vector<Triangle> triangles;

  std::uint32_t add_vertex(const Vector3d& p)
  {
    vertices.push_back(p);
    return static_cast<std::uint32_t>(vertices.size() - 1);
  }

  void add_triangle(std::uint32_t a, std::uint32_t b, std::uint32_t c, int class_id)
  {
    triangles.push_back({{a, b, c}, class_id});
  }

  /// Two triangles over the quad a-b-c-d (in order around the boundary).
  void add_quad(const Vector3d& a, const Vector3d& b, const Vector3d& c, const Vector3d& d, int class_id)
  {
    const auto ia = add_vertex(a), ib = add_vertex(b), ic = add_vertex(c), id = add_vertex(d);
    add_triangle(ia, ib, ic, class_id);
    add_triangle(ia, ic, id, class_id);
  }

  double triangle_area(const Triangle& t) const
  {
    const Vector3d& a = vertices[t.v[0]];
    return 0.5 * (vertices[t.v[1]] - a).cross(vertices[t.v[2]] - a).norm();
  }

  std::map<int, size_t> class_counts() const
  {
    std::map<int, size_t> counts;
    for (const auto& t : triangles) ++counts[t.class_id];
    return counts;
  }

  bool operator==(const SemanticMesh& o) const
  {
    return triangles == o.triangles && vertices.size() == o.vertices.size() &&
           std::equal(vertices.begin(), vertices.end(), o.vertices.begin(),
                      [](const Vector3d& a, const Vector3d& b) { return (a.array() == b.array()).all(); });
  }
};

/// Throws InvalidArgument when indices, class ids, or areas are invalid.
inline void validate_mesh(const SemanticMesh& mesh, int num_classes)
{
  for (size_t i = 0; i < mesh.triangles.size(); ++i) {
    const auto& t = mesh.triangles[i];
    for (auto v : t.v)
      if (v >= mesh.vertices.size())
        throw InvalidArgument("triangle " + std::to_string(i) + " references missing vertex " + std::to_string(v));
    if (t.class_id < 0 || t.class_id >= num_classes)
      throw InvalidLabel("triangle " + std::to_string(i) + " has class " + std::to_string(t.class_id));
    if (!(mesh.triangle_area(t) > 1e-12))
      throw InvalidArgument("triangle " + std::to_string(i) + " is degenerate");
  }
  for (const auto& v : mesh.vertices)
    if (!v.allFinite()) throw InvalidArgument("non-finite vertex");
}

/// Drops every triangle whose class is not in `keep`. Vertices are kept.
inline SemanticMesh filter_classes(const SemanticMesh& mesh, const std::set<int>& keep)
{
  SemanticMesh out;
  out.vertices = mesh.vertices;
  for (const auto& t : mesh.triangles)
    if (keep.contains(t.class_id)) out.triangles.push_back(t);
  return out;
}

/// Rigidly transformed copy of the mesh.
inline SemanticMesh transformed(const SemanticMesh& mesh, const Pose& T)
{
  SemanticMesh out = mesh;
  for (auto& v : out.vertices) v = T * v;
  return out;
}

}  // namespace semloc
