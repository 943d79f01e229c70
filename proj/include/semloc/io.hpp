#pragma once

// File formats:
//   .smesh      text; "# class <id> <name>", "v x y z", "f i j k c" lines
//   SLOG        "SLOG" + u32 width, height, num_classes (LE) + H*W*N float32
//   PGM (P5)    8-bit labels, class id as gray value
//   trajectory  CSV frame_id,tx,ty,tz,qx,qy,qz,qw (9 significant digits)

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "semloc/errors.hpp"
#include "semloc/geom.hpp"
#include "semloc/mesh.hpp"
#include "semloc/semantics.hpp"

namespace semloc::io {

namespace fs = std::filesystem;

inline std::ifstream open_in(const fs::path& p, bool binary = false)
{
  std::ifstream f(p, binary ? std::ios::binary : std::ios::in);
  if (!f) throw ParseError("cannot open " + p.string());
  return f;
}

inline std::ofstream open_out(const fs::path& p, bool binary = false)
{
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream f(p, binary ? std::ios::binary : std::ios::out);
  if (!f) throw ParseError("cannot write " + p.string());
  return f;
}

// ---------------------------------------------------------------- .smesh

struct MeshFile
{
  SemanticMesh mesh;
  ClassTable classes;
};

inline void write_smesh(std::ostream& os, const SemanticMesh& mesh, const ClassTable& classes)
{
  for (int i = 0; i < classes.size(); ++i) os << "# class " << i << ' ' << classes.name(i) << '\n';
  os << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (const auto& v : mesh.vertices) os << "v " << v.x() << ' ' << v.y() << ' ' << v.z() << '\n';
  for (const auto& t : mesh.triangles)
    os << "f " << t.v[0] << ' ' << t.v[1] << ' ' << t.v[2] << ' ' << t.class_id << '\n';
}

inline void write_smesh(const fs::path& p, const SemanticMesh& mesh, const ClassTable& classes)
{
  auto f = open_out(p);
  write_smesh(f, mesh, classes);
}

inline MeshFile read_smesh(std::istream& is)
{
  MeshFile out;
  std::map<int, std::string> names;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    std::istringstream ls(line);
    std::string tag;
    if (!(ls >> tag)) continue;
    auto fail = [&](const std::string& why) {
      throw ParseError("smesh line " + std::to_string(lineno) + ": " + why);
    };
    if (tag == "#") {
      std::string kw;
      if (ls >> kw && kw == "class") {
        int id;
        std::string name;
        if (!(ls >> id >> name) || id < 0) fail("bad class declaration");
        if (names.contains(id)) fail("duplicate class id");
        names[id] = name;
      }
    } else if (tag == "v") {
      double x, y, z;
      if (!(ls >> x >> y >> z)) fail("bad vertex");
      out.mesh.vertices.emplace_back(x, y, z);
    } else if (tag == "f") {
      long long a, b, c;
      int cid;
      if (!(ls >> a >> b >> c >> cid)) fail("bad face");
      if (a < 0 || b < 0 || c < 0) fail("negative vertex index");
      out.mesh.triangles.push_back({{static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(b),
                                     static_cast<std::uint32_t>(c)},
                                    cid});
    } else {
      fail("unknown record '" + tag + "'");
    }
  }
  std::vector<std::string> table;
  for (const auto& [id, name] : names) {
    if (id != static_cast<int>(table.size())) throw ParseError("class ids are not dense");
    table.push_back(name);
  }
  out.classes = ClassTable(table, 0);
  for (size_t i = 0; i < out.mesh.triangles.size(); ++i)
    for (auto v : out.mesh.triangles[i].v)
      if (v >= out.mesh.vertices.size())
        throw ParseError("face " + std::to_string(i) + " index " + std::to_string(v) + " out of range");
  validate_mesh(out.mesh, out.classes.size());
  return out;
}

inline MeshFile read_smesh(const fs::path& p)
{
  auto f = open_in(p);
  return read_smesh(f);
}

// ---------------------------------------------------------------- SLOG

namespace detail {

inline void put_u32(std::ostream& os, std::uint32_t v)
{
  const std::array<char, 4> b{static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                              static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  os.write(b.data(), 4);
}

inline std::uint32_t get_u32(std::istream& is)
{
  std::array<unsigned char, 4> b{};
  if (!is.read(reinterpret_cast<char*>(b.data()), 4)) throw ParseError("truncated header");
  return std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) | (std::uint32_t(b[2]) << 16) |
         (std::uint32_t(b[3]) << 24);
}

}  // namespace detail

inline void write_slog(std::ostream& os, const LogitsImage& img)
{
  os.write("SLOG", 4);
  detail::put_u32(os, static_cast<std::uint32_t>(img.width()));
  detail::put_u32(os, static_cast<std::uint32_t>(img.height()));
  detail::put_u32(os, static_cast<std::uint32_t>(img.channels()));
  for (double v : img.data()) {
    const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
    detail::put_u32(os, bits);
  }
}

inline void write_slog(const fs::path& p, const LogitsImage& img)
{
  auto f = open_out(p, true);
  write_slog(f, img);
}

inline LogitsImage read_slog(std::istream& is)
{
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, "SLOG", 4) != 0) throw ParseError("missing SLOG magic");
  const auto w = detail::get_u32(is), h = detail::get_u32(is), n = detail::get_u32(is);
  if (w == 0 || h == 0 || n < 2 || n > static_cast<std::uint32_t>(kMaxClasses) || w > 1u << 15 || h > 1u << 15)
    throw ParseError("implausible SLOG dimensions");
  LogitsImage img(static_cast<int>(w), static_cast<int>(h), static_cast<int>(n));
  std::vector<unsigned char> buf(static_cast<size_t>(w) * h * n * 4);
  if (!is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size())))
    throw ParseError("truncated SLOG payload");
  auto& d = img.data();
  for (size_t i = 0; i < d.size(); ++i) {
    const unsigned char* b = &buf[4 * i];
    const std::uint32_t bits = std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) | (std::uint32_t(b[2]) << 16) |
                               (std::uint32_t(b[3]) << 24);
    const float f = std::bit_cast<float>(bits);
    if (!std::isfinite(f)) throw ParseError("non-finite logit");
    d[i] = f;
  }
  return img;
}

inline LogitsImage read_slog(const fs::path& p)
{
  auto f = open_in(p, true);
  return read_slog(f);
}

// ---------------------------------------------------------------- PGM

inline void write_pgm(std::ostream& os, const LabelImage& img)
{
  os << "P5\n" << img.width() << ' ' << img.height() << "\n255\n";
  os.write(reinterpret_cast<const char*>(img.data().data()), static_cast<std::streamsize>(img.data().size()));
}

inline void write_pgm(const fs::path& p, const LabelImage& img)
{
  auto f = open_out(p, true);
  write_pgm(f, img);
}

inline LabelImage read_pgm(std::istream& is)
{
  auto token = [&]() {
    std::string t;
    while (true) {
      int c = is.peek();
      if (c == '#') {
        std::string skip;
        std::getline(is, skip);
      } else if (std::isspace(c)) {
        is.get();
      } else {
        break;
      }
    }
    if (!(is >> t)) throw ParseError("truncated PGM header");
    return t;
  };
  if (token() != "P5") throw ParseError("only binary PGM (P5) is supported");
  const int w = std::stoi(token()), h = std::stoi(token()), maxval = std::stoi(token());
  if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 255) throw ParseError("unsupported PGM dimensions");
  is.get();  // single whitespace before the raster
  LabelImage img(w, h);
  if (!is.read(reinterpret_cast<char*>(img.data().data()), static_cast<std::streamsize>(img.data().size())))
    throw ParseError("truncated PGM raster");
  return img;
}

inline LabelImage read_pgm(const fs::path& p)
{
  auto f = open_in(p, true);
  return read_pgm(f);
}

// ---------------------------------------------------------------- CSV poses

struct PoseRecord
{
  int frame_id = 0;
  Pose pose;
};

inline void write_pose_csv(std::ostream& os, const std::vector<PoseRecord>& rows)
{
  os << "frame_id,tx,ty,tz,qx,qy,qz,qw\n";
  os << std::setprecision(9);
  for (const auto& r : rows) {
    const auto q = r.pose.quaternion();
    const auto& t = r.pose.translation;
    os << r.frame_id << ',' << t.x() << ',' << t.y() << ',' << t.z() << ',' << q.x() << ',' << q.y() << ','
       << q.z() << ',' << q.w() << '\n';
  }
}

inline void write_pose_csv(const fs::path& p, const std::vector<PoseRecord>& rows)
{
  auto f = open_out(p);
  write_pose_csv(f, rows);
}

/// Parses "tx ty tz qx qy qz qw" (any whitespace or comma separation).
inline Pose parse_pose(const std::string& text)
{
  std::string s = text;
  for (auto& ch : s)
    if (ch == ',') ch = ' ';
  std::istringstream is(s);
  double v[7];
  for (double& x : v)
    if (!(is >> x)) throw ParseError("pose needs 7 numbers: tx ty tz qx qy qz qw");
  std::string extra;
  if (is >> extra) throw ParseError("trailing data after pose");
  Eigen::Quaterniond q(v[6], v[3], v[4], v[5]);
  if (!(q.norm() > 1e-12)) throw ParseError("zero quaternion");
  return Pose::from_quaternion(q, Vector3d(v[0], v[1], v[2]));
}

inline std::vector<PoseRecord> read_pose_csv(std::istream& is)
{
  std::vector<PoseRecord> out;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    if (!std::isdigit(static_cast<unsigned char>(line[0])) && line[0] != '-') continue;  // header
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw ParseError("pose CSV line " + std::to_string(lineno) + " malformed");
    PoseRecord r;
    try {
      r.frame_id = std::stoi(line.substr(0, comma));
      r.pose = parse_pose(line.substr(comma + 1));
    } catch (const std::exception& e) {
      throw ParseError("pose CSV line " + std::to_string(lineno) + ": " + e.what());
    }
    out.push_back(r);
  }
  return out;
}

inline std::vector<PoseRecord> read_pose_csv(const fs::path& p)
{
  auto f = open_in(p);
  return read_pose_csv(f);
}

}  // namespace semloc::io
