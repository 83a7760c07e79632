#include "kpdet/mesh.hpp"

#include "kpdet/error.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>

namespace kpdet {

namespace {

std::string at_line(std::size_t line) { return " (line " + std::to_string(line) + ")"; }

// Line reader that skips blank lines and '#' comments and remembers the line
// number for error messages.
class LineReader {
 public:
  explicit LineReader(std::istream& in) : in_(in) {}

  bool next(std::string& line, bool skip_comments = true) {
    while (std::getline(in_, line)) {
      ++number_;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (skip_comments) {
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      }
      if (line.find_first_not_of(" \t") != std::string::npos) return true;
    }
    return false;
  }

  std::string require(const char* what) {
    std::string line;
    if (!next(line)) throw input_error(std::string("unexpected end of file while reading ") + what + at_line(number_ + 1));
    return line;
  }

  std::size_t number() const noexcept { return number_; }

 private:
  std::istream& in_;
  std::size_t number_ = 0;
};

template <typename T>
T parse_token(std::istringstream& tokens, const char* what, std::size_t line) {
  T value{};
  if (!(tokens >> value)) throw input_error(std::string("cannot parse ") + what + at_line(line));
  return value;
}

void read_triangle(std::istringstream& tokens, std::size_t line, Triangles& triangles, int row) {
  const auto arity = parse_token<long>(tokens, "face vertex count", line);
  if (arity != 3) throw input_error("non-triangular face with " + std::to_string(arity) + " vertices" + at_line(line));
  for (int c = 0; c < 3; ++c) triangles(row, c) = parse_token<int>(tokens, "face index", line);
}

Mesh read_off(std::istream& in) {
  LineReader reader(in);
  std::istringstream header(reader.require("OFF header"));
  std::string magic;
  header >> magic;
  if (magic != "OFF") throw input_error("missing OFF header" + at_line(reader.number()));

  long nv = 0, nf = 0;
  // Counts are normally on their own line; some writers append them to the header.
  std::string rest;
  std::getline(header, rest);
  std::istringstream counts(rest.find_first_not_of(" \t") == std::string::npos ? reader.require("OFF counts") : rest);
  nv = parse_token<long>(counts, "vertex count", reader.number());
  nf = parse_token<long>(counts, "face count", reader.number());
  if (nv <= 0 || nf <= 0) throw input_error("empty mesh" + at_line(reader.number()));

  Positions positions(nv, 3);
  for (long i = 0; i < nv; ++i) {
    std::istringstream tokens(reader.require("vertex"));
    for (int c = 0; c < 3; ++c) positions(i, c) = parse_token<double>(tokens, "vertex coordinate", reader.number());
  }
  Triangles triangles(nf, 3);
  for (long f = 0; f < nf; ++f) {
    std::istringstream tokens(reader.require("face"));
    read_triangle(tokens, reader.number(), triangles, static_cast<int>(f));
  }
  return Mesh(std::move(positions), std::move(triangles));
}

struct PlyElement {
  std::string name;
  long count = 0;
  std::vector<std::string> properties;
  bool has_list = false;
};

Mesh read_ply(std::istream& in) {
  LineReader reader(in);
  if (reader.require("PLY magic") != "ply") throw input_error("missing ply magic" + at_line(reader.number()));

  std::vector<PlyElement> elements;
  bool ascii = false;
  for (;;) {
    std::string line;
    if (!reader.next(line, false)) throw input_error("unterminated PLY header" + at_line(reader.number()));
    std::istringstream tokens(line);
    std::string keyword;
    tokens >> keyword;
    if (keyword == "end_header") break;
    if (keyword == "comment" || keyword == "obj_info") continue;
    if (keyword == "format") {
      std::string kind;
      tokens >> kind;
      ascii = kind == "ascii";
      if (!ascii) throw input_error("only ASCII PLY is supported, got format " + kind + at_line(reader.number()));
    } else if (keyword == "element") {
      PlyElement element;
      tokens >> element.name;
      element.count = parse_token<long>(tokens, "element count", reader.number());
      elements.push_back(element);
    } else if (keyword == "property") {
      if (elements.empty()) throw input_error("property before element" + at_line(reader.number()));
      std::string type, name;
      tokens >> type;
      if (type == "list") {
        std::string count_type, item_type;
        tokens >> count_type >> item_type >> name;
        elements.back().has_list = true;
      } else {
        tokens >> name;
      }
      elements.back().properties.push_back(name);
    } else {
      throw input_error("unknown PLY header keyword '" + keyword + "'" + at_line(reader.number()));
    }
  }
  if (!ascii) throw input_error("PLY header without format line");

  Positions positions;
  Triangles triangles;
  bool seen_vertices = false, seen_faces = false;
  for (const auto& element : elements) {
    if (element.name == "vertex") {
      std::array<int, 3> axis{-1, -1, -1};
      for (std::size_t p = 0; p < element.properties.size(); ++p) {
        const auto& name = element.properties[p];
        if (name == "x") axis[0] = static_cast<int>(p);
        if (name == "y") axis[1] = static_cast<int>(p);
        if (name == "z") axis[2] = static_cast<int>(p);
      }
      if (*std::min_element(axis.begin(), axis.end()) < 0) throw input_error("PLY vertex element lacks x/y/z");
      if (element.count <= 0) throw input_error("empty mesh");
      positions.resize(element.count, 3);
      std::vector<double> values(element.properties.size());
      for (long i = 0; i < element.count; ++i) {
        std::istringstream tokens(reader.require("PLY vertex"));
        for (auto& value : values) value = parse_token<double>(tokens, "vertex property", reader.number());
        for (int c = 0; c < 3; ++c) positions(i, c) = values[axis[c]];
      }
      seen_vertices = true;
    } else if (element.name == "face") {
      if (element.count <= 0) throw input_error("empty mesh");
      triangles.resize(element.count, 3);
      for (long f = 0; f < element.count; ++f) {
        std::istringstream tokens(reader.require("PLY face"));
        read_triangle(tokens, reader.number(), triangles, static_cast<int>(f));
      }
      seen_faces = true;
    } else {
      for (long i = 0; i < element.count; ++i) reader.require(element.name.c_str());
    }
  }
  if (!seen_vertices || !seen_faces) throw input_error("empty mesh: PLY needs vertex and face elements");
  return Mesh(std::move(positions), std::move(triangles));
}

}  // namespace

Mesh::Mesh(Positions positions, Triangles triangles)
    : positions_(std::move(positions)), triangles_(std::move(triangles)) {
  const int n = vertex_count();
  if (n == 0 || triangles_.rows() == 0) throw input_error("empty mesh");
  if (!positions_.allFinite()) throw input_error("non-finite vertex coordinate");

  adjacency_.assign(n, {});
  for (int f = 0; f < triangle_count(); ++f) {
    const auto t = triangles_.row(f);
    for (int c = 0; c < 3; ++c) {
      if (t(c) < 0 || t(c) >= n) {
        throw input_error("triangle " + std::to_string(f) + " references vertex " + std::to_string(t(c)) +
                          " outside [0, " + std::to_string(n) + ")");
      }
    }
    if (t(0) == t(1) || t(1) == t(2) || t(0) == t(2)) {
      throw input_error("degenerate triangle " + std::to_string(f) + " repeats a vertex index");
    }
    for (int c = 0; c < 3; ++c) {
      const int a = t(c), b = t((c + 1) % 3);
      adjacency_[a].push_back(b);
      adjacency_[b].push_back(a);
    }
  }
  for (int v = 0; v < n; ++v) {
    auto& nbrs = adjacency_[v];
    std::sort(nbrs.begin(), nbrs.end());
    nbrs.erase(std::unique(nbrs.begin(), nbrs.end()), nbrs.end());
    for (int u : nbrs) {
      if (v < u) edges_.emplace_back(v, u);
    }
  }

  diagonal_ = bounding_box_diagonal(positions_);
  if (!(diagonal_ > 0.0)) throw input_error("mesh bounding box has zero diagonal");
}

double bounding_box_diagonal(const Positions& positions) {
  if (positions.rows() == 0) return 0.0;
  return (positions.colwise().maxCoeff() - positions.colwise().minCoeff()).norm();
}

double diameter(const Positions& positions) {
  double best = 0.0;
  for (Eigen::Index i = 0; i < positions.rows(); ++i) {
    for (Eigen::Index j = i + 1; j < positions.rows(); ++j) {
      best = std::max(best, (positions.row(i) - positions.row(j)).squaredNorm());
    }
  }
  return std::sqrt(best);
}

double mean_edge_length(const Mesh& mesh, const Positions& positions) {
  const auto& edges = mesh.edges();
  if (edges.empty()) return 0.0;
  double total = 0.0;
  for (const auto& [a, b] : edges) total += (positions.row(a) - positions.row(b)).norm();
  return total / static_cast<double>(edges.size());
}

Mesh load_mesh(std::istream& in, MeshFormat format) {
  return format == MeshFormat::Off ? read_off(in) : read_ply(in);
}

Mesh load_mesh(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw input_error("cannot open mesh file " + path.string());
  auto ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  MeshFormat format;
  if (ext == ".off") {
    format = MeshFormat::Off;
  } else if (ext == ".ply") {
    format = MeshFormat::PlyAscii;
  } else {
    throw input_error("unrecognised mesh extension '" + ext + "' for " + path.string());
  }
  try {
    return load_mesh(in, format);
  } catch (const Error& e) {
    throw Error(e.kind(), path.string() + ": " + e.what());
  }
}

void write_ply(std::ostream& out, const Mesh& mesh, std::span<const Rgb> colors) {
  const bool with_color = !colors.empty();
  if (with_color && colors.size() != static_cast<std::size_t>(mesh.vertex_count())) {
    throw internal_error("color count does not match vertex count");
  }
  out << "ply\nformat ascii 1.0\n";
  out << "element vertex " << mesh.vertex_count() << "\n";
  out << "property double x\nproperty double y\nproperty double z\n";
  if (with_color) out << "property uchar red\nproperty uchar green\nproperty uchar blue\n";
  out << "element face " << mesh.triangle_count() << "\n";
  out << "property list uchar int vertex_indices\nend_header\n";
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  const auto& p = mesh.positions();
  for (int v = 0; v < mesh.vertex_count(); ++v) {
    out << p(v, 0) << ' ' << p(v, 1) << ' ' << p(v, 2);
    if (with_color) out << ' ' << int(colors[v][0]) << ' ' << int(colors[v][1]) << ' ' << int(colors[v][2]);
    out << '\n';
  }
  const auto& t = mesh.triangles();
  for (int f = 0; f < mesh.triangle_count(); ++f) out << "3 " << t(f, 0) << ' ' << t(f, 1) << ' ' << t(f, 2) << '\n';
}

void write_off(std::ostream& out, const Mesh& mesh) {
  out << "OFF\n" << mesh.vertex_count() << ' ' << mesh.triangle_count() << " 0\n";
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  const auto& p = mesh.positions();
  for (int v = 0; v < mesh.vertex_count(); ++v) out << p(v, 0) << ' ' << p(v, 1) << ' ' << p(v, 2) << '\n';
  const auto& t = mesh.triangles();
  for (int f = 0; f < mesh.triangle_count(); ++f) out << "3 " << t(f, 0) << ' ' << t(f, 1) << ' ' << t(f, 2) << '\n';
}

}  // namespace kpdet
