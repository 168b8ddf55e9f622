#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "physgnn/error.hpp"
#include "physgnn/mesh.hpp"

namespace physgnn::mesh {

namespace {

struct Line {
  std::size_t number;
  std::vector<std::string> tokens;
};

// Non-empty lines with '#' comments stripped, tokenised on whitespace.
std::vector<Line> tokenise(const std::string& text) {
  std::vector<Line> out;
  std::istringstream in(text);
  std::string raw;
  std::size_t number = 0;
  while (std::getline(in, raw)) {
    ++number;
    if (auto hash = raw.find('#'); hash != std::string::npos) raw.erase(hash);
    std::istringstream ls(raw);
    Line line{number, {}};
    for (std::string tok; ls >> tok;) line.tokens.push_back(tok);
    if (!line.tokens.empty()) out.push_back(std::move(line));
  }
  return out;
}

long long to_int(const std::string& tok, const std::string& file, std::size_t line) {
  try {
    std::size_t pos = 0;
    const long long v = std::stoll(tok, &pos);
    if (pos != tok.size()) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    throw ParseError(file, line, "expected integer, got '" + tok + "'");
  }
}

double to_double(const std::string& tok, const std::string& file, std::size_t line) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(tok, &pos);
    if (pos != tok.size() || !std::isfinite(v)) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    throw ParseError(file, line, "expected number, got '" + tok + "'");
  }
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TetMesh parse_tetgen(const std::string& node_text, const std::string& ele_text, const std::string& node_name,
                     const std::string& ele_name) {
  const auto node_lines = tokenise(node_text);
  if (node_lines.empty()) throw ParseError(node_name, 1, "missing .node header");
  const auto& nh = node_lines.front();
  if (nh.tokens.size() < 2) throw ParseError(node_name, nh.number, "header needs <count> <dimension> ...");
  const long long n_nodes = to_int(nh.tokens[0], node_name, nh.number);
  const long long dim = to_int(nh.tokens[1], node_name, nh.number);
  const long long n_attr = nh.tokens.size() > 2 ? to_int(nh.tokens[2], node_name, nh.number) : 0;
  const long long n_marker = nh.tokens.size() > 3 ? to_int(nh.tokens[3], node_name, nh.number) : 0;
  if (dim != 3) throw ParseError(node_name, nh.number, "dimension must be 3");
  if (n_nodes < 0 || n_attr < 0 || n_marker < 0) throw ParseError(node_name, nh.number, "negative count in header");
  if (static_cast<long long>(node_lines.size()) - 1 != n_nodes)
    throw ParseError(node_name, node_lines.back().number,
                     "header declares " + std::to_string(n_nodes) + " nodes but file has " +
                         std::to_string(node_lines.size() - 1));

  long long base = 0;
  std::vector<Vec3> nodes(static_cast<std::size_t>(n_nodes));
  for (long long i = 0; i < n_nodes; ++i) {
    const auto& l = node_lines[i + 1];
    if (static_cast<long long>(l.tokens.size()) < 4 + n_attr + n_marker)
      throw ParseError(node_name, l.number, "too few columns for node record");
    const long long idx = to_int(l.tokens[0], node_name, l.number);
    if (i == 0) {
      if (idx != 0 && idx != 1) throw ParseError(node_name, l.number, "first node index must be 0 or 1");
      base = idx;
    }
    if (idx != base + i)
      throw ParseError(node_name, l.number, "node index " + std::to_string(idx) + " out of sequence");
    for (int d = 0; d < 3; ++d) nodes[i][d] = to_double(l.tokens[1 + d], node_name, l.number);
  }

  const auto ele_lines = tokenise(ele_text);
  if (ele_lines.empty()) throw ParseError(ele_name, 1, "missing .ele header");
  const auto& eh = ele_lines.front();
  if (eh.tokens.size() < 2) throw ParseError(ele_name, eh.number, "header needs <count> <nodes per tet> ...");
  const long long n_tets = to_int(eh.tokens[0], ele_name, eh.number);
  const long long per_tet = to_int(eh.tokens[1], ele_name, eh.number);
  const long long ele_attr = eh.tokens.size() > 2 ? to_int(eh.tokens[2], ele_name, eh.number) : 0;
  if (per_tet != 4) throw ParseError(ele_name, eh.number, "only linear (4-node) tetrahedra are supported");
  if (n_tets < 0 || ele_attr < 0) throw ParseError(ele_name, eh.number, "negative count in header");
  if (static_cast<long long>(ele_lines.size()) - 1 != n_tets)
    throw ParseError(ele_name, ele_lines.back().number,
                     "header declares " + std::to_string(n_tets) + " tetrahedra but file has " +
                         std::to_string(ele_lines.size() - 1));

  double edge_sum = 0.0;
  std::vector<Tet> tets(static_cast<std::size_t>(n_tets));
  std::vector<Region> regions(tets.size(), Region::healthy);
  for (long long t = 0; t < n_tets; ++t) {
    const auto& l = ele_lines[t + 1];
    if (static_cast<long long>(l.tokens.size()) < 5 + ele_attr)
      throw ParseError(ele_name, l.number, "too few columns for tetrahedron record");
    for (int a = 0; a < 4; ++a) {
      const long long raw = to_int(l.tokens[1 + a], ele_name, l.number);
      const long long idx = raw - base;
      if (idx < 0 || idx >= n_nodes)
        throw ParseError(ele_name, l.number,
                         "node index " + std::to_string(raw) + " out of range for " + std::to_string(n_nodes) +
                             "-node mesh");
      tets[t][a] = static_cast<std::int32_t>(idx);
    }
    for (int a = 0; a < 4; ++a)
      for (int b = 0; b < a; ++b)
        if (tets[t][a] == tets[t][b]) throw ParseError(ele_name, l.number, "tetrahedron repeats a node");
    if (ele_attr > 0 && to_double(l.tokens[5], ele_name, l.number) != 0.0) regions[t] = Region::tumour;
    for (int a = 0; a < 4; ++a)
      for (int b = a + 1; b < 4; ++b) {
        const auto& p = nodes[tets[t][a]];
        const auto& q = nodes[tets[t][b]];
        edge_sum += std::sqrt((p[0] - q[0]) * (p[0] - q[0]) + (p[1] - q[1]) * (p[1] - q[1]) +
                              (p[2] - q[2]) * (p[2] - q[2]));
      }
  }

  // Degeneracy is checked here too so the error can name the offending line.
  const double mean_edge = n_tets ? edge_sum / (6.0 * static_cast<double>(n_tets)) : 0.0;
  const double tol = 1e-12 * mean_edge * mean_edge * mean_edge;
  for (long long t = 0; t < n_tets; ++t) {
    const auto& tet = tets[t];
    const auto& p0 = nodes[tet[0]];
    Vec3 a{}, b{}, c{};
    for (int d = 0; d < 3; ++d) {
      a[d] = nodes[tet[1]][d] - p0[d];
      b[d] = nodes[tet[2]][d] - p0[d];
      c[d] = nodes[tet[3]][d] - p0[d];
    }
    const double vol = (a[0] * (b[1] * c[2] - b[2] * c[1]) - a[1] * (b[0] * c[2] - b[2] * c[0]) +
                        a[2] * (b[0] * c[1] - b[1] * c[0])) / 6.0;
    if (std::abs(vol) <= tol) throw ParseError(ele_name, ele_lines[t + 1].number, "degenerate (zero-volume) tetrahedron");
  }

  try {
    return TetMesh::create(std::move(nodes), std::move(tets), std::move(regions));
  } catch (const MeshError& e) {
    throw ParseError(node_name, nh.number, e.what());
  }
}

TetMesh read_tetgen(const std::string& node_path, const std::string& ele_path) {
  return parse_tetgen(slurp(node_path), slurp(ele_path), node_path, ele_path);
}

std::string format_tetgen_node(const TetMesh& mesh) {
  std::ostringstream out;
  out << "# TetGen node file\n" << mesh.node_count() << " 3 0 0\n" << std::setprecision(17);
  for (std::size_t i = 0; i < mesh.node_count(); ++i) {
    const auto& p = mesh.nodes()[i];
    out << i << ' ' << p[0] << ' ' << p[1] << ' ' << p[2] << '\n';
  }
  return out.str();
}

std::string format_tetgen_ele(const TetMesh& mesh) {
  std::ostringstream out;
  out << "# TetGen element file; attribute 1 = tumour\n" << mesh.tet_count() << " 4 1\n";
  for (std::size_t t = 0; t < mesh.tet_count(); ++t) {
    const auto& tet = mesh.tets()[t];
    out << t << ' ' << tet[0] << ' ' << tet[1] << ' ' << tet[2] << ' ' << tet[3] << ' '
        << (mesh.regions()[t] == Region::tumour ? 1 : 0) << '\n';
  }
  return out.str();
}

void write_tetgen(const TetMesh& mesh, const std::string& path_prefix) {
  for (const auto& [ext, text] : {std::pair{".node", format_tetgen_node(mesh)}, std::pair{".ele", format_tetgen_ele(mesh)}}) {
    std::ofstream out(path_prefix + ext, std::ios::binary);
    if (!out) throw InputError("cannot write " + path_prefix + ext);
    out << text;
  }
}

}  // namespace physgnn::mesh
