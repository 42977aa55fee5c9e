#include "ply.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>

#include "error.hpp"

namespace vfpp {
namespace {

static_assert(std::endian::native == std::endian::little, "PLY binary IO assumes a little-endian host");

struct Property {
  std::string name;
  std::string type;
  bool is_list = false;
  std::string count_type;
};

struct Element {
  std::string name;
  std::size_t count = 0;
  std::vector<Property> props;
};

struct PlyData {
  std::vector<Element> elements;
  bool binary = false;
  std::vector<std::vector<double>> vertex_rows;  // per vertex, one value per scalar property
  std::vector<std::vector<int>> faces;
  std::vector<std::string> vertex_names;
};

int type_size(const std::string& t) {
  if (t == "char" || t == "uchar" || t == "int8" || t == "uint8") return 1;
  if (t == "short" || t == "ushort" || t == "int16" || t == "uint16") return 2;
  if (t == "int" || t == "uint" || t == "int32" || t == "uint32" || t == "float" || t == "float32") return 4;
  if (t == "double" || t == "float64") return 8;
  throw Error(ErrorCode::IoError, "unsupported PLY type '" + t + "'");
}

double read_binary(std::istream& in, const std::string& t) {
  unsigned char b[8];
  const int n = type_size(t);
  if (!in.read(reinterpret_cast<char*>(b), n)) throw Error(ErrorCode::IoError, "truncated PLY body");
  if (t == "char" || t == "int8") return static_cast<std::int8_t>(b[0]);
  if (t == "uchar" || t == "uint8") return b[0];
  if (t == "short" || t == "int16") return std::bit_cast<std::int16_t>(std::array<unsigned char, 2>{b[0], b[1]});
  if (t == "ushort" || t == "uint16") return std::bit_cast<std::uint16_t>(std::array<unsigned char, 2>{b[0], b[1]});
  if (t == "int" || t == "int32") return std::bit_cast<std::int32_t>(std::array<unsigned char, 4>{b[0], b[1], b[2], b[3]});
  if (t == "uint" || t == "uint32")
    return std::bit_cast<std::uint32_t>(std::array<unsigned char, 4>{b[0], b[1], b[2], b[3]});
  if (t == "float" || t == "float32") return std::bit_cast<float>(std::array<unsigned char, 4>{b[0], b[1], b[2], b[3]});
  double d;
  std::memcpy(&d, b, 8);
  return d;
}

PlyData parse_ply(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + p.string());
  std::string line;
  std::getline(in, line);
  if (line.rfind("ply", 0) != 0) throw Error(ErrorCode::IoError, p.string() + " is not a PLY file");
  PlyData d;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ls(line);
    std::string kw;
    ls >> kw;
    if (kw == "format") {
      std::string f;
      ls >> f;
      if (f == "ascii")
        d.binary = false;
      else if (f == "binary_little_endian")
        d.binary = true;
      else
        throw Error(ErrorCode::IoError, "unsupported PLY format '" + f + "'");
    } else if (kw == "element") {
      Element e;
      ls >> e.name >> e.count;
      d.elements.push_back(e);
    } else if (kw == "property") {
      if (d.elements.empty()) throw Error(ErrorCode::IoError, "PLY property before element");
      Property pr;
      std::string t;
      ls >> t;
      if (t == "list") {
        pr.is_list = true;
        ls >> pr.count_type >> pr.type >> pr.name;
      } else {
        pr.type = t;
        ls >> pr.name;
      }
      d.elements.back().props.push_back(pr);
    } else if (kw == "end_header") {
      break;
    }
  }
  for (const auto& e : d.elements) {
    const bool is_vertex = e.name == "vertex";
    const bool is_face = e.name == "face";
    if (is_vertex)
      for (const auto& pr : e.props) d.vertex_names.push_back(pr.name);
    for (std::size_t i = 0; i < e.count; ++i) {
      std::vector<double> row;
      std::istringstream ls;
      if (!d.binary) {
        if (!std::getline(in, line)) throw Error(ErrorCode::IoError, "truncated PLY body");
        ls.str(line);
      }
      auto next = [&](const std::string& t) -> double {
        if (d.binary) return read_binary(in, t);
        double v;
        if (!(ls >> v)) throw Error(ErrorCode::IoError, "malformed PLY row");
        return v;
      };
      for (const auto& pr : e.props) {
        if (pr.is_list) {
          const int n = static_cast<int>(next(pr.count_type));
          std::vector<int> idx(n);
          for (int k = 0; k < n; ++k) idx[k] = static_cast<int>(next(pr.type));
          if (is_face && (pr.name == "vertex_indices" || pr.name == "vertex_index")) d.faces.push_back(idx);
        } else {
          row.push_back(next(pr.type));
        }
      }
      if (is_vertex) d.vertex_rows.push_back(std::move(row));
    }
  }
  return d;
}

int column(const PlyData& d, const std::string& name) {
  for (std::size_t i = 0; i < d.vertex_names.size(); ++i)
    if (d.vertex_names[i] == name) return static_cast<int>(i);
  return -1;
}

std::vector<Vec3> vertices_of(const PlyData& d) {
  const int cx = column(d, "x"), cy = column(d, "y"), cz = column(d, "z");
  if (cx < 0 || cy < 0 || cz < 0) throw Error(ErrorCode::IoError, "PLY vertex lacks x/y/z");
  std::vector<Vec3> v;
  v.reserve(d.vertex_rows.size());
  for (const auto& r : d.vertex_rows) v.emplace_back(r[cx], r[cy], r[cz]);
  return v;
}

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

std::ofstream open_out(const std::filesystem::path& p) {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + p.string());
  out.precision(17);
  return out;
}

}  // namespace

void write_ply(const std::filesystem::path& p, const PointCloud& cloud, PlyEncoding enc) {
  auto out = open_out(p);
  const bool uv = cloud.has_pixels();
  const bool bin = enc == PlyEncoding::BinaryLittleEndian;
  out << "ply\nformat " << (bin ? "binary_little_endian" : "ascii") << " 1.0\n";
  out << "element vertex " << cloud.size() << "\n";
  out << "property double x\nproperty double y\nproperty double z\n";
  if (uv) out << "property double u\nproperty double v\n";
  out << "end_header\n";
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto& q = cloud.points[i];
    if (bin) {
      put(out, q.x());
      put(out, q.y());
      put(out, q.z());
      if (uv) {
        put(out, cloud.pixels[i].x());
        put(out, cloud.pixels[i].y());
      }
    } else {
      out << q.x() << ' ' << q.y() << ' ' << q.z();
      if (uv) out << ' ' << cloud.pixels[i].x() << ' ' << cloud.pixels[i].y();
      out << '\n';
    }
  }
  if (!out) throw Error(ErrorCode::IoError, "write failed for " + p.string());
}

void write_ply_mesh(const std::filesystem::path& p, const TriangleMesh& mesh, PlyEncoding enc) {
  auto out = open_out(p);
  const bool bin = enc == PlyEncoding::BinaryLittleEndian;
  out << "ply\nformat " << (bin ? "binary_little_endian" : "ascii") << " 1.0\n";
  out << "element vertex " << mesh.vertices.size() << "\n";
  out << "property double x\nproperty double y\nproperty double z\n";
  out << "element face " << mesh.faces.size() << "\n";
  out << "property list uchar int vertex_indices\nend_header\n";
  for (const auto& v : mesh.vertices) {
    if (bin) {
      put(out, v.x());
      put(out, v.y());
      put(out, v.z());
    } else {
      out << v.x() << ' ' << v.y() << ' ' << v.z() << '\n';
    }
  }
  for (const auto& f : mesh.faces) {
    if (bin) {
      put<std::uint8_t>(out, 3);
      for (int i : f) put<std::int32_t>(out, i);
    } else {
      out << "3 " << f[0] << ' ' << f[1] << ' ' << f[2] << '\n';
    }
  }
  if (!out) throw Error(ErrorCode::IoError, "write failed for " + p.string());
}

PointCloud read_ply_cloud(const std::filesystem::path& p) {
  const auto d = parse_ply(p);
  PointCloud c;
  c.points = vertices_of(d);
  const int cu = column(d, "u"), cv = column(d, "v");
  if (cu >= 0 && cv >= 0)
    for (const auto& r : d.vertex_rows) c.pixels.emplace_back(r[cu], r[cv]);
  return c;
}

TriangleMesh read_ply_mesh(const std::filesystem::path& p) {
  const auto d = parse_ply(p);
  TriangleMesh m;
  m.vertices = vertices_of(d);
  for (const auto& f : d.faces)
    for (std::size_t k = 1; k + 1 < f.size(); ++k) m.faces.push_back({f[0], f[k], f[k + 1]});
  return m;
}

}  // namespace vfpp
