#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace physgnn::mesh {

using Vec3 = std::array<double, 3>;
using Tet = std::array<std::int32_t, 4>;

enum class Region : std::uint8_t { healthy = 0, tumour = 1 };

// Tetrahedral volume mesh. Coordinates are in millimetres. Construct through
// TetMesh::create (or the parsers/generators), which validates:
//   - tet indices in range and distinct per tet
//   - positive signed volume for every tet (vertex order 0,1,2,3 with
//     (p1-p0) x (p2-p0) . (p3-p0) > 0)
//   - no two nodes at identical coordinates
class TetMesh {
 public:
  static TetMesh create(std::vector<Vec3> nodes, std::vector<Tet> tets,
                        std::vector<Region> regions = {});

  std::size_t node_count() const { return nodes_.size(); }
  std::size_t tet_count() const { return tets_.size(); }
  const std::vector<Vec3>& nodes() const { return nodes_; }
  const std::vector<Tet>& tets() const { return tets_; }
  const std::vector<Region>& regions() const { return regions_; }

  // Signed volume of tet `t` (mm^3).
  double volume(std::size_t t) const;
  double total_volume() const;

  // Boundary faces: triangles owned by exactly one tet, oriented so the
  // right-hand normal points out of that tet.
  const std::vector<std::array<std::int32_t, 3>>& boundary_faces() const { return boundary_faces_; }
  std::vector<bool> boundary_node_mask() const;

  // True when some tet containing node `n` is tumour tissue.
  std::vector<bool> tumour_node_mask() const;

  // Axis-aligned bounding box (min, max).
  std::pair<Vec3, Vec3> bounds() const;

 private:
  TetMesh() = default;
  std::vector<Vec3> nodes_;
  std::vector<Tet> tets_;
  std::vector<Region> regions_;
  std::vector<std::array<std::int32_t, 3>> boundary_faces_;
};

// Undirected edge list plus a CSR adjacency. Each undirected edge (u < v) is
// stored once in `edges`; the CSR holds both directions as arcs grouped by
// target node, sources ascending, so `arc_src[in_offsets[u]..in_offsets[u+1]]`
// are the neighbours of u.
struct MeshGraph {
  std::vector<std::array<std::int32_t, 2>> edges;
  std::vector<double> edge_weight;  // 1/mm, inverse Euclidean length

  std::vector<std::int64_t> in_offsets;  // node_count + 1
  std::vector<std::int64_t> arc_src;
  std::vector<std::int64_t> arc_dst;
  std::vector<double> arc_weight;

  std::size_t node_count() const { return in_offsets.empty() ? 0 : in_offsets.size() - 1; }
  std::size_t degree(std::size_t u) const {
    return static_cast<std::size_t>(in_offsets[u + 1] - in_offsets[u]);
  }
  // Weight of edge (u, v) or nullopt when not adjacent.
  std::optional<double> weight(std::int32_t u, std::int32_t v) const;
};

// Builds arcs for an explicit weighted edge list (used by tests and by
// build_graph).
MeshGraph graph_from_edges(std::size_t node_count,
                           std::vector<std::array<std::int32_t, 2>> edges,
                           std::vector<double> weights);

MeshGraph build_graph(const TetMesh& mesh);

// Hop distance from `source` to every node (-1 when unreachable).
std::vector<int> hop_distances(const MeshGraph& graph, std::int32_t source);

// Area-weighted outward unit normal per boundary node. Interior nodes are
// absent from the map.
std::map<std::int32_t, Vec3> surface_normals(const TetMesh& mesh);

struct Box {
  Vec3 lo{0, 0, 0};
  Vec3 hi{0, 0, 0};
  bool empty() const { return !(lo[0] < hi[0] && lo[1] < hi[1] && lo[2] < hi[2]); }
  bool contains(const Vec3& p) const {
    return p[0] >= lo[0] && p[0] <= hi[0] && p[1] >= lo[1] && p[1] <= hi[1] && p[2] >= lo[2] &&
           p[2] <= hi[2];
  }
};

// Structured nx*ny*nz grid of nodes with `spacing` mm pitch, origin at 0;
// each hexahedral cell is split into 6 tets sharing the cell's main diagonal.
// Tets whose centroid lies inside `tumour_box` are tagged tumour.
TetMesh generate_synthetic_mesh(int nx, int ny, int nz, double spacing, const Box& tumour_box = {});

// Which side of the bounding box a face selector refers to.
enum class BoxSide { xmin, xmax, ymin, ymax, zmin, zmax };
BoxSide parse_box_side(const std::string& name);
std::string to_string(BoxSide side);

struct BoundarySets {
  std::vector<std::int32_t> fixed_nodes;            // sorted
  std::vector<std::int32_t> candidate_load_nodes;   // sorted, disjoint from fixed
};

// Fixed nodes: boundary nodes lying on any of the selected bounding-box sides
// (within `tol` mm). Candidate load nodes: the remaining boundary nodes,
// optionally restricted to `load_sides` when non-empty.
BoundarySets select_boundary_sets(const TetMesh& mesh, const std::vector<BoxSide>& fixed_sides,
                                  const std::vector<BoxSide>& load_sides = {}, double tol = 1e-9);

// Throws InputError when the sets overlap or reference missing nodes.
void validate_boundary_sets(const TetMesh& mesh, const BoundarySets& sets);

// TetGen ASCII .node / .ele. `node_name`/`ele_name` only label error messages.
TetMesh parse_tetgen(const std::string& node_text, const std::string& ele_text,
                     const std::string& node_name = "<node>", const std::string& ele_name = "<ele>");
TetMesh read_tetgen(const std::string& node_path, const std::string& ele_path);

std::string format_tetgen_node(const TetMesh& mesh);
// Writes a region attribute column (0 healthy, 1 tumour).
std::string format_tetgen_ele(const TetMesh& mesh);
void write_tetgen(const TetMesh& mesh, const std::string& path_prefix);

}  // namespace physgnn::mesh
