#include "physgnn/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>
#include <tuple>

#include "physgnn/error.hpp"

namespace physgnn::mesh {

namespace {

Vec3 sub(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }

Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}

double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }

double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }

double signed_volume(const std::vector<Vec3>& p, const Tet& t) {
  return dot(cross(sub(p[t[1]], p[t[0]]), sub(p[t[2]], p[t[0]])), sub(p[t[3]], p[t[0]])) / 6.0;
}

// Outward faces of a positively oriented tet.
constexpr std::array<std::array<int, 3>, 4> kOutwardFaces{{{1, 2, 3}, {0, 3, 2}, {0, 1, 3}, {0, 2, 1}}};

}  // namespace

TetMesh TetMesh::create(std::vector<Vec3> nodes, std::vector<Tet> tets, std::vector<Region> regions) {
  if (regions.empty()) regions.assign(tets.size(), Region::healthy);
  if (regions.size() != tets.size())
    throw MeshError("region tag count " + std::to_string(regions.size()) + " != tet count " +
                    std::to_string(tets.size()));

  const auto n = static_cast<std::int64_t>(nodes.size());
  double edge_sum = 0.0;
  std::size_t edge_count = 0;
  for (std::size_t t = 0; t < tets.size(); ++t) {
    auto& tet = tets[t];
    for (int a = 0; a < 4; ++a) {
      if (tet[a] < 0 || tet[a] >= n)
        throw MeshError("tet " + std::to_string(t) + " references node " + std::to_string(tet[a]) +
                        " outside [0, " + std::to_string(n) + ")");
      for (int b = 0; b < a; ++b)
        if (tet[a] == tet[b]) throw MeshError("tet " + std::to_string(t) + " repeats node " + std::to_string(tet[a]));
    }
    for (int a = 0; a < 4; ++a)
      for (int b = a + 1; b < 4; ++b) {
        edge_sum += norm(sub(nodes[tet[a]], nodes[tet[b]]));
        ++edge_count;
      }
  }
  const double mean_edge = edge_count ? edge_sum / static_cast<double>(edge_count) : 0.0;
  const double degenerate_tol = 1e-12 * mean_edge * mean_edge * mean_edge;
  for (std::size_t t = 0; t < tets.size(); ++t) {
    const double v = signed_volume(nodes, tets[t]);
    if (std::abs(v) <= degenerate_tol) throw MeshError("tet " + std::to_string(t) + " is degenerate (zero volume)");
    if (v < 0) std::swap(tets[t][2], tets[t][3]);
  }

  std::vector<std::size_t> order(nodes.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return nodes[a] < nodes[b]; });
  for (std::size_t i = 1; i < order.size(); ++i)
    if (nodes[order[i]] == nodes[order[i - 1]])
      throw MeshError("nodes " + std::to_string(order[i - 1]) + " and " + std::to_string(order[i]) +
                      " share identical coordinates");

  TetMesh m;
  m.nodes_ = std::move(nodes);
  m.tets_ = std::move(tets);
  m.regions_ = std::move(regions);

  // Faces keyed by sorted node triple; a face seen once is on the boundary.
  struct FaceRec {
    std::array<std::int32_t, 3> key;
    std::array<std::int32_t, 3> oriented;
  };
  std::vector<FaceRec> faces;
  faces.reserve(m.tets_.size() * 4);
  for (const auto& tet : m.tets_)
    for (const auto& f : kOutwardFaces) {
      FaceRec r{{tet[f[0]], tet[f[1]], tet[f[2]]}, {tet[f[0]], tet[f[1]], tet[f[2]]}};
      std::sort(r.key.begin(), r.key.end());
      faces.push_back(r);
    }
  std::sort(faces.begin(), faces.end(), [](const FaceRec& a, const FaceRec& b) { return a.key < b.key; });
  for (std::size_t i = 0; i < faces.size();) {
    std::size_t j = i;
    while (j < faces.size() && faces[j].key == faces[i].key) ++j;
    if (j - i == 1) m.boundary_faces_.push_back(faces[i].oriented);
    i = j;
  }
  return m;
}

double TetMesh::volume(std::size_t t) const { return signed_volume(nodes_, tets_[t]); }

double TetMesh::total_volume() const {
  double v = 0.0;
  for (std::size_t t = 0; t < tets_.size(); ++t) v += volume(t);
  return v;
}

std::vector<bool> TetMesh::boundary_node_mask() const {
  std::vector<bool> mask(nodes_.size(), false);
  for (const auto& f : boundary_faces_)
    for (auto n : f) mask[n] = true;
  return mask;
}

std::vector<bool> TetMesh::tumour_node_mask() const {
  std::vector<bool> mask(nodes_.size(), false);
  for (std::size_t t = 0; t < tets_.size(); ++t)
    if (regions_[t] == Region::tumour)
      for (auto n : tets_[t]) mask[n] = true;
  return mask;
}

std::pair<Vec3, Vec3> TetMesh::bounds() const {
  Vec3 lo{HUGE_VAL, HUGE_VAL, HUGE_VAL};
  Vec3 hi{-HUGE_VAL, -HUGE_VAL, -HUGE_VAL};
  for (const auto& p : nodes_)
    for (int d = 0; d < 3; ++d) {
      lo[d] = std::min(lo[d], p[d]);
      hi[d] = std::max(hi[d], p[d]);
    }
  return {lo, hi};
}

std::optional<double> MeshGraph::weight(std::int32_t u, std::int32_t v) const {
  const auto first = arc_src.begin() + in_offsets[v];
  const auto last = arc_src.begin() + in_offsets[v + 1];
  const auto it = std::lower_bound(first, last, u);
  if (it == last || *it != u) return std::nullopt;
  return arc_weight[static_cast<std::size_t>(it - arc_src.begin())];
}

MeshGraph graph_from_edges(std::size_t node_count, std::vector<std::array<std::int32_t, 2>> edges,
                           std::vector<double> weights) {
  if (weights.size() != edges.size()) throw MeshError("edge weight count does not match edge count");
  MeshGraph g;
  g.edges = std::move(edges);
  g.edge_weight = std::move(weights);

  struct Arc {
    std::int64_t dst, src;
    double w;
  };
  std::vector<Arc> arcs;
  arcs.reserve(2 * g.edges.size());
  for (std::size_t e = 0; e < g.edges.size(); ++e) {
    const auto [u, v] = g.edges[e];
    if (u == v) throw MeshError("self loop on node " + std::to_string(u));
    if (!(g.edge_weight[e] > 0.0) || !std::isfinite(g.edge_weight[e]))
      throw MeshError("edge weight must be positive and finite");
    arcs.push_back({v, u, g.edge_weight[e]});
    arcs.push_back({u, v, g.edge_weight[e]});
  }
  std::sort(arcs.begin(), arcs.end(),
            [](const Arc& a, const Arc& b) { return std::tie(a.dst, a.src) < std::tie(b.dst, b.src); });
  g.in_offsets.assign(node_count + 1, 0);
  g.arc_src.reserve(arcs.size());
  g.arc_dst.reserve(arcs.size());
  g.arc_weight.reserve(arcs.size());
  for (const auto& a : arcs) {
    ++g.in_offsets[a.dst + 1];
    g.arc_src.push_back(a.src);
    g.arc_dst.push_back(a.dst);
    g.arc_weight.push_back(a.w);
  }
  for (std::size_t i = 0; i < node_count; ++i) g.in_offsets[i + 1] += g.in_offsets[i];
  return g;
}

MeshGraph build_graph(const TetMesh& mesh) {
  std::vector<std::array<std::int32_t, 2>> edges;
  edges.reserve(mesh.tet_count() * 6);
  for (const auto& t : mesh.tets())
    for (int a = 0; a < 4; ++a)
      for (int b = a + 1; b < 4; ++b) edges.push_back({std::min(t[a], t[b]), std::max(t[a], t[b])});
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());

  std::vector<double> weights(edges.size());
  const auto& p = mesh.nodes();
  for (std::size_t e = 0; e < edges.size(); ++e) {
    const double d = norm(sub(p[edges[e][0]], p[edges[e][1]]));
    if (!(d > 0.0))
      throw MeshError("adjacent nodes " + std::to_string(edges[e][0]) + " and " + std::to_string(edges[e][1]) +
                      " coincide");
    weights[e] = 1.0 / d;
  }
  return graph_from_edges(mesh.node_count(), std::move(edges), std::move(weights));
}

std::vector<int> hop_distances(const MeshGraph& graph, std::int32_t source) {
  std::vector<int> dist(graph.node_count(), -1);
  std::deque<std::int32_t> queue{source};
  dist[source] = 0;
  while (!queue.empty()) {
    const auto u = queue.front();
    queue.pop_front();
    for (auto k = graph.in_offsets[u]; k < graph.in_offsets[u + 1]; ++k) {
      const auto v = graph.arc_src[k];
      if (dist[v] < 0) {
        dist[v] = dist[u] + 1;
        queue.push_back(static_cast<std::int32_t>(v));
      }
    }
  }
  return dist;
}

std::map<std::int32_t, Vec3> surface_normals(const TetMesh& mesh) {
  if (mesh.boundary_faces().empty()) throw MeshError("mesh has no boundary faces");
  std::map<std::int32_t, Vec3> acc;
  const auto& p = mesh.nodes();
  for (const auto& f : mesh.boundary_faces()) {
    // |cross| is twice the face area, so summing crosses weights by area.
    const Vec3 c = cross(sub(p[f[1]], p[f[0]]), sub(p[f[2]], p[f[0]]));
    for (auto n : f) {
      auto& a = acc[n];
      for (int d = 0; d < 3; ++d) a[d] += c[d];
    }
  }
  for (auto& [node, v] : acc) {
    const double len = norm(v);
    if (len > 0)
      for (auto& x : v) x /= len;
  }
  return acc;
}

TetMesh generate_synthetic_mesh(int nx, int ny, int nz, double spacing, const Box& tumour_box) {
  if (nx < 2 || ny < 2 || nz < 2)
    throw MeshError("grid dimensions must each be >= 2 (got " + std::to_string(nx) + "x" + std::to_string(ny) +
                    "x" + std::to_string(nz) + ")");
  if (!(spacing > 0.0)) throw MeshError("grid spacing must be positive");

  auto id = [&](int i, int j, int k) { return static_cast<std::int32_t>(i + nx * (j + ny * k)); };
  std::vector<Vec3> nodes;
  nodes.reserve(static_cast<std::size_t>(nx) * ny * nz);
  for (int k = 0; k < nz; ++k)
    for (int j = 0; j < ny; ++j)
      for (int i = 0; i < nx; ++i) nodes.push_back({i * spacing, j * spacing, k * spacing});

  // Kuhn split: one tet per axis permutation, all sharing the (0,0,0)-(1,1,1)
  // diagonal, so neighbouring cells conform.
  constexpr std::array<std::array<int, 3>, 6> kPerms{{{0, 1, 2}, {0, 2, 1}, {1, 0, 2}, {1, 2, 0}, {2, 0, 1}, {2, 1, 0}}};
  std::vector<Tet> tets;
  std::vector<Region> regions;
  const bool has_tumour = !tumour_box.empty();
  for (int k = 0; k + 1 < nz; ++k)
    for (int j = 0; j + 1 < ny; ++j)
      for (int i = 0; i + 1 < nx; ++i)
        for (const auto& perm : kPerms) {
          std::array<int, 3> c{i, j, k};
          Tet t;
          t[0] = id(c[0], c[1], c[2]);
          for (int s = 0; s < 3; ++s) {
            ++c[perm[s]];
            t[s + 1] = id(c[0], c[1], c[2]);
          }
          if (signed_volume(nodes, t) < 0) std::swap(t[2], t[3]);
          Vec3 centroid{0, 0, 0};
          for (auto n : t)
            for (int d = 0; d < 3; ++d) centroid[d] += nodes[n][d] / 4.0;
          tets.push_back(t);
          regions.push_back(has_tumour && tumour_box.contains(centroid) ? Region::tumour : Region::healthy);
        }
  return TetMesh::create(std::move(nodes), std::move(tets), std::move(regions));
}

BoxSide parse_box_side(const std::string& name) {
  static const std::map<std::string, BoxSide> kNames{{"xmin", BoxSide::xmin}, {"xmax", BoxSide::xmax},
                                                     {"ymin", BoxSide::ymin}, {"ymax", BoxSide::ymax},
                                                     {"zmin", BoxSide::zmin}, {"zmax", BoxSide::zmax}};
  const auto it = kNames.find(name);
  if (it == kNames.end()) throw ConfigError("unknown box side '" + name + "' (expected xmin..zmax)");
  return it->second;
}

std::string to_string(BoxSide side) {
  static const char* kNames[] = {"xmin", "xmax", "ymin", "ymax", "zmin", "zmax"};
  return kNames[static_cast<int>(side)];
}

BoundarySets select_boundary_sets(const TetMesh& mesh, const std::vector<BoxSide>& fixed_sides,
                                  const std::vector<BoxSide>& load_sides, double tol) {
  const auto [lo, hi] = mesh.bounds();
  auto on_side = [&, lo = lo, hi = hi](const Vec3& p, BoxSide s) {
    const int axis = static_cast<int>(s) / 2;
    const bool is_max = static_cast<int>(s) % 2 == 1;
    return std::abs(p[axis] - (is_max ? hi[axis] : lo[axis])) <= tol;
  };
  const auto boundary = mesh.boundary_node_mask();
  BoundarySets sets;
  for (std::size_t n = 0; n < mesh.node_count(); ++n) {
    if (!boundary[n]) continue;
    const auto& p = mesh.nodes()[n];
    const bool fixed = std::any_of(fixed_sides.begin(), fixed_sides.end(), [&](BoxSide s) { return on_side(p, s); });
    if (fixed) {
      sets.fixed_nodes.push_back(static_cast<std::int32_t>(n));
      continue;
    }
    if (load_sides.empty() ||
        std::any_of(load_sides.begin(), load_sides.end(), [&](BoxSide s) { return on_side(p, s); }))
      sets.candidate_load_nodes.push_back(static_cast<std::int32_t>(n));
  }
  return sets;
}

void validate_boundary_sets(const TetMesh& mesh, const BoundarySets& sets) {
  const auto n = static_cast<std::int32_t>(mesh.node_count());
  for (const auto* list : {&sets.fixed_nodes, &sets.candidate_load_nodes})
    for (auto v : *list)
      if (v < 0 || v >= n) throw InputError("boundary set references node " + std::to_string(v) + " outside mesh");
  std::vector<std::int32_t> a = sets.fixed_nodes, b = sets.candidate_load_nodes, both;
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(both));
  if (!both.empty())
    throw InputError("node " + std::to_string(both.front()) + " is both fixed and a load candidate");
}

}  // namespace physgnn::mesh
