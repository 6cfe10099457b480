#include <spinefuse/error.hpp>
#include <spinefuse/mesh_io.hpp>

#include <algorithm>
#include <bit>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

static_assert(std::endian::native == std::endian::little, "PLY I/O assumes a little-endian host");

namespace spinefuse {

namespace {

[[noreturn]] void parse_fail(const std::filesystem::path& path, std::size_t offset, const std::string& msg) {
  throw Error(ErrorKind::Parse, path.string() + ": byte " + std::to_string(offset) + ": " + msg);
}

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Parse, path.string() + ": cannot open file");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_all(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::Parse, path.string() + ": cannot open file for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorKind::Parse, path.string() + ": write failed");
}

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

TriMesh assemble(std::vector<Eigen::Vector3d> verts, std::vector<Eigen::Vector3i> faces) {
  TriMesh mesh;
  mesh.vertices.resize(static_cast<Eigen::Index>(verts.size()), 3);
  for (std::size_t i = 0; i < verts.size(); ++i) mesh.vertices.row(i) = verts[i].transpose();
  mesh.faces.resize(static_cast<Eigen::Index>(faces.size()), 3);
  for (std::size_t i = 0; i < faces.size(); ++i) mesh.faces.row(i) = faces[i].transpose();
  return mesh;
}

// --- PLY scalar types ---

enum class PlyType { Int8, UInt8, Int16, UInt16, Int32, UInt32, Float32, Float64 };

bool ply_type_from(std::string_view name, PlyType& out) {
  static const std::pair<std::string_view, PlyType> table[] = {
      {"char", PlyType::Int8},     {"int8", PlyType::Int8},     {"uchar", PlyType::UInt8},
      {"uint8", PlyType::UInt8},   {"short", PlyType::Int16},   {"int16", PlyType::Int16},
      {"ushort", PlyType::UInt16}, {"uint16", PlyType::UInt16}, {"int", PlyType::Int32},
      {"int32", PlyType::Int32},   {"uint", PlyType::UInt32},   {"uint32", PlyType::UInt32},
      {"float", PlyType::Float32}, {"float32", PlyType::Float32}, {"double", PlyType::Float64},
      {"float64", PlyType::Float64}};
  for (const auto& [n, t] : table) {
    if (n == name) {
      out = t;
      return true;
    }
  }
  return false;
}

std::size_t ply_size(PlyType t) {
  switch (t) {
    case PlyType::Int8:
    case PlyType::UInt8: return 1;
    case PlyType::Int16:
    case PlyType::UInt16: return 2;
    case PlyType::Int32:
    case PlyType::UInt32:
    case PlyType::Float32: return 4;
    case PlyType::Float64: return 8;
  }
  return 0;
}

template <typename T>
T load(const char* p) {
  T v;
  std::memcpy(&v, p, sizeof(T));
  return v;
}

double ply_read(PlyType t, const char* p) {
  switch (t) {
    case PlyType::Int8: return load<std::int8_t>(p);
    case PlyType::UInt8: return load<std::uint8_t>(p);
    case PlyType::Int16: return load<std::int16_t>(p);
    case PlyType::UInt16: return load<std::uint16_t>(p);
    case PlyType::Int32: return load<std::int32_t>(p);
    case PlyType::UInt32: return load<std::uint32_t>(p);
    case PlyType::Float32: return load<float>(p);
    case PlyType::Float64: return load<double>(p);
  }
  return 0.0;
}

struct PlyProperty {
  std::string name;
  PlyType type = PlyType::Float32;
  bool is_list = false;
  PlyType count_type = PlyType::UInt8;
};

struct PlyElement {
  std::string name;
  std::size_t count = 0;
  std::vector<PlyProperty> properties;
};

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

}  // namespace

TriMesh read_obj(const std::filesystem::path& path) {
  const std::string text = slurp(path);
  std::vector<Eigen::Vector3d> verts;
  std::vector<Eigen::Vector3i> faces;

  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    const std::string_view line(text.data() + pos, end - pos);
    const auto tokens = split_ws(line);
    if (!tokens.empty() && tokens[0] == "v") {
      if (tokens.size() < 4) parse_fail(path, pos, "vertex record needs three coordinates");
      Eigen::Vector3d v;
      for (int k = 0; k < 3; ++k) {
        const auto tok = tokens[k + 1];
        auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v[k]);
        if (res.ec != std::errc() || res.ptr != tok.data() + tok.size())
          parse_fail(path, pos + (tok.data() - line.data()), "bad coordinate '" + std::string(tok) + "'");
      }
      verts.push_back(v);
    } else if (!tokens.empty() && tokens[0] == "f") {
      if (tokens.size() < 4) parse_fail(path, pos, "face record needs at least three indices");
      std::vector<int> idx;
      for (std::size_t k = 1; k < tokens.size(); ++k) {
        auto tok = tokens[k];
        tok = tok.substr(0, tok.find('/'));
        long value = 0;
        auto res = std::from_chars(tok.data(), tok.data() + tok.size(), value);
        if (res.ec != std::errc() || res.ptr != tok.data() + tok.size() || value < 1)
          parse_fail(path, pos + (tokens[k].data() - line.data()), "bad face index '" + std::string(tokens[k]) + "'");
        idx.push_back(static_cast<int>(value - 1));
      }
      for (std::size_t k = 1; k + 1 < idx.size(); ++k) faces.emplace_back(idx[0], idx[k], idx[k + 1]);
    }
    pos = end + 1;
  }
  TriMesh mesh = assemble(std::move(verts), std::move(faces));
  validate(mesh);
  return mesh;
}

void write_obj(const std::filesystem::path& path, const TriMesh& mesh) {
  std::string out;
  for (Eigen::Index i = 0; i < mesh.vertex_count(); ++i) {
    out += "v " + format_double(mesh.vertices(i, 0)) + ' ' + format_double(mesh.vertices(i, 1)) + ' ' +
           format_double(mesh.vertices(i, 2)) + '\n';
  }
  for (Eigen::Index f = 0; f < mesh.face_count(); ++f) {
    out += "f " + std::to_string(mesh.faces(f, 0) + 1) + ' ' + std::to_string(mesh.faces(f, 1) + 1) + ' ' +
           std::to_string(mesh.faces(f, 2) + 1) + '\n';
  }
  write_all(path, out);
}

TriMesh read_ply(const std::filesystem::path& path) {
  const std::string data = slurp(path);
  std::size_t pos = 0;
  auto next_line = [&]() -> std::string_view {
    const std::size_t end = data.find('\n', pos);
    if (end == std::string::npos) parse_fail(path, pos, "unterminated header");
    std::string_view line(data.data() + pos, end - pos);
    pos = end + 1;
    return line;
  };

  if (split_ws(next_line()) != std::vector<std::string_view>{"ply"}) parse_fail(path, 0, "missing 'ply' magic");
  std::vector<PlyElement> elements;
  bool format_ok = false;
  for (;;) {
    const std::size_t line_start = pos;
    const auto tok = split_ws(next_line());
    if (tok.empty() || tok[0] == "comment" || tok[0] == "obj_info") continue;
    if (tok[0] == "end_header") break;
    if (tok[0] == "format") {
      if (tok.size() < 2 || tok[1] != "binary_little_endian")
        parse_fail(path, line_start, "only binary_little_endian PLY is supported");
      format_ok = true;
    } else if (tok[0] == "element") {
      if (tok.size() != 3) parse_fail(path, line_start, "malformed element line");
      PlyElement el;
      el.name = std::string(tok[1]);
      auto res = std::from_chars(tok[2].data(), tok[2].data() + tok[2].size(), el.count);
      if (res.ec != std::errc()) parse_fail(path, line_start, "bad element count");
      elements.push_back(std::move(el));
    } else if (tok[0] == "property") {
      if (elements.empty()) parse_fail(path, line_start, "property before element");
      PlyProperty prop;
      if (tok.size() == 5 && tok[1] == "list") {
        prop.is_list = true;
        if (!ply_type_from(tok[2], prop.count_type) || !ply_type_from(tok[3], prop.type))
          parse_fail(path, line_start, "unknown list property type");
        prop.name = std::string(tok[4]);
      } else if (tok.size() == 3) {
        if (!ply_type_from(tok[1], prop.type)) parse_fail(path, line_start, "unknown property type");
        prop.name = std::string(tok[2]);
      } else {
        parse_fail(path, line_start, "malformed property line");
      }
      elements.back().properties.push_back(std::move(prop));
    } else {
      parse_fail(path, line_start, "unexpected header keyword '" + std::string(tok[0]) + "'");
    }
  }
  if (!format_ok) parse_fail(path, 0, "missing format line");

  std::vector<Eigen::Vector3d> verts;
  std::vector<Eigen::Vector3i> faces;
  auto need = [&](std::size_t bytes) {
    if (pos + bytes > data.size()) parse_fail(path, pos, "unexpected end of file");
  };

  for (const auto& el : elements) {
    const bool is_vertex = el.name == "vertex";
    const bool is_face = el.name == "face";
    int coord_slot[3] = {-1, -1, -1};
    int index_slot = -1;
    for (std::size_t p = 0; p < el.properties.size(); ++p) {
      const auto& prop = el.properties[p];
      if (is_vertex && !prop.is_list) {
        if (prop.name == "x") coord_slot[0] = static_cast<int>(p);
        if (prop.name == "y") coord_slot[1] = static_cast<int>(p);
        if (prop.name == "z") coord_slot[2] = static_cast<int>(p);
      }
      if (is_face && prop.is_list && (prop.name == "vertex_indices" || prop.name == "vertex_index"))
        index_slot = static_cast<int>(p);
    }
    if (is_vertex && (coord_slot[0] < 0 || coord_slot[1] < 0 || coord_slot[2] < 0))
      parse_fail(path, 0, "vertex element lacks x/y/z");
    if (is_face && index_slot < 0) parse_fail(path, 0, "face element lacks vertex_indices");

    for (std::size_t row = 0; row < el.count; ++row) {
      Eigen::Vector3d v = Eigen::Vector3d::Zero();
      for (std::size_t p = 0; p < el.properties.size(); ++p) {
        const auto& prop = el.properties[p];
        if (!prop.is_list) {
          need(ply_size(prop.type));
          const double value = ply_read(prop.type, data.data() + pos);
          for (int k = 0; k < 3; ++k) {
            if (is_vertex && coord_slot[k] == static_cast<int>(p)) v[k] = value;
          }
          pos += ply_size(prop.type);
          continue;
        }
        need(ply_size(prop.count_type));
        const std::size_t count_at = pos;
        const double count_value = ply_read(prop.count_type, data.data() + pos);
        pos += ply_size(prop.count_type);
        if (count_value < 0) parse_fail(path, count_at, "negative list length");
        const auto count = static_cast<std::size_t>(count_value);
        need(count * ply_size(prop.type));
        if (is_face && index_slot == static_cast<int>(p)) {
          if (count < 3) parse_fail(path, count_at, "face with fewer than three indices");
          std::vector<int> idx(count);
          for (std::size_t k = 0; k < count; ++k) {
            idx[k] = static_cast<int>(ply_read(prop.type, data.data() + pos + k * ply_size(prop.type)));
          }
          for (std::size_t k = 1; k + 1 < count; ++k) faces.emplace_back(idx[0], idx[k], idx[k + 1]);
        }
        pos += count * ply_size(prop.type);
      }
      if (is_vertex) verts.push_back(v);
    }
  }
  TriMesh mesh = assemble(std::move(verts), std::move(faces));
  validate(mesh);
  return mesh;
}

void write_ply(const std::filesystem::path& path, const TriMesh& mesh) {
  std::string out = "ply\nformat binary_little_endian 1.0\nelement vertex " + std::to_string(mesh.vertex_count()) +
                    "\nproperty double x\nproperty double y\nproperty double z\nelement face " +
                    std::to_string(mesh.face_count()) + "\nproperty list uchar int vertex_indices\nend_header\n";
  out.reserve(out.size() + mesh.vertex_count() * 24 + mesh.face_count() * 13);
  for (Eigen::Index i = 0; i < mesh.vertex_count(); ++i) {
    for (int k = 0; k < 3; ++k) {
      const double v = mesh.vertices(i, k);
      out.append(reinterpret_cast<const char*>(&v), sizeof v);
    }
  }
  for (Eigen::Index f = 0; f < mesh.face_count(); ++f) {
    out.push_back(static_cast<char>(3));
    for (int k = 0; k < 3; ++k) {
      const std::int32_t idx = mesh.faces(f, k);
      out.append(reinterpret_cast<const char*>(&idx), sizeof idx);
    }
  }
  write_all(path, out);
}

TriMesh read_mesh(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  if (ext == ".obj") return read_obj(path);
  if (ext == ".ply") return read_ply(path);
  throw Error(ErrorKind::Parse, path.string() + ": unsupported mesh extension '" + ext + "'");
}

void write_mesh(const std::filesystem::path& path, const TriMesh& mesh) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  if (ext == ".obj") return write_obj(path, mesh);
  if (ext == ".ply") return write_ply(path, mesh);
  throw Error(ErrorKind::Parse, path.string() + ": unsupported mesh extension '" + ext + "'");
}

}  // namespace spinefuse
