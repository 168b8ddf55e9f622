#include "physgnn/pipeline.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "physgnn/binary_io.hpp"
#include "physgnn/error.hpp"

namespace physgnn::pipeline {

namespace fs = std::filesystem;

std::string MeshSummary::to_text() const {
  std::ostringstream out;
  out << "nodes " << nodes << "\ntets " << tets << "\nedges " << edges << "\nboundary nodes " << boundary_nodes
      << "\ntumour nodes " << tumour_nodes << "\nvolume " << volume << " mm^3\n";
  return out.str();
}

std::string MeshSummary::to_json() const {
  nlohmann::ordered_json j;
  j["nodes"] = nodes;
  j["tets"] = tets;
  j["edges"] = edges;
  j["boundary_nodes"] = boundary_nodes;
  j["tumour_nodes"] = tumour_nodes;
  j["volume_mm3"] = volume;
  return j.dump(2) + "\n";
}

MeshSummary summarize(const mesh::TetMesh& m) {
  MeshSummary s;
  s.nodes = m.node_count();
  s.tets = m.tet_count();
  s.edges = mesh::build_graph(m).edges.size();
  for (bool b : m.boundary_node_mask()) s.boundary_nodes += b;
  for (bool b : m.tumour_node_mask()) s.tumour_nodes += b;
  s.volume = m.total_volume();
  return s;
}

mesh::TetMesh build_mesh(const config::MeshSource& src) {
  if (src.kind == config::MeshSource::Kind::tetgen) return mesh::read_tetgen(src.node_path, src.ele_path);
  return mesh::generate_synthetic_mesh(src.nx, src.ny, src.nz, src.spacing, src.tumour_box);
}

std::string join_path(const std::string& dir, const std::string& name) { return (fs::path(dir) / name).string(); }

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path);
  out << text;
  if (!out) throw InputError("failed writing " + path);
}

void write_mesh_artifact(const std::string& dir, const mesh::TetMesh& m) {
  fs::create_directories(dir);
  write_file(join_path(dir, "mesh.node"), mesh::format_tetgen_node(m));
  write_file(join_path(dir, "mesh.ele"), mesh::format_tetgen_ele(m));
}

mesh::TetMesh read_mesh_artifact(const std::string& dir) {
  return mesh::read_tetgen(join_path(dir, "mesh.node"), join_path(dir, "mesh.ele"));
}

mesh::BoundarySets boundary_sets(const mesh::TetMesh& m, const config::BoundaryConfig& b) {
  auto sets = mesh::select_boundary_sets(m, b.fixed_sides, b.load_sides, b.tol);
  mesh::validate_boundary_sets(m, sets);
  return sets;
}

SimulationOutput simulate_dataset(const mesh::TetMesh& m, const config::RunConfig& cfg) {
  auto graph = std::make_shared<const mesh::MeshGraph>(mesh::build_graph(m));
  const auto sets = boundary_sets(m, cfg.boundary);
  auto spec = cfg.dataset.spec;
  spec.seed = cfg.seed;
  const auto cases = datagen::enumerate_load_cases(m, *graph, sets, spec);
  SimulationOutput out;
  out.samples = datagen::simulate(m, cfg.materials, cases, cfg.dataset.oracle, graph);
  std::vector<int> groups;
  for (const auto& c : cases) groups.push_back(c.selection_id);
  out.manifest = datagen::split_dataset(out.samples.size(), cfg.seed, cfg.dataset.split_mode, groups);

  nlohmann::ordered_json snap;
  snap["kind"] = cfg.dataset.oracle.kind == datagen::Oracle::linear ? "linear" : "nonlinear";
  snap["nonlinear_increments"] = cfg.dataset.oracle.nonlinear_increments;
  for (const auto& [region, mat] : cfg.materials)
    snap["materials"][region == mesh::Region::tumour ? "tumour" : "healthy"] = {
        {"youngs_modulus", mat.youngs_modulus}, {"poisson_ratio", mat.poisson_ratio}, {"alpha", mat.alpha}};
  snap["fixed_node_count"] = sets.fixed_nodes.size();
  out.manifest.oracle_snapshot = snap.dump();
  return out;
}

void write_dataset_dir(const std::string& dir, const mesh::TetMesh& m, const SimulationOutput& out) {
  fs::create_directories(dir);
  const std::vector<std::pair<std::string, std::string>> files{
      {"dataset.bin", ""}, {"manifest.json", datagen::manifest_to_json(out.manifest)},
      {"mesh.node", mesh::format_tetgen_node(m)}, {"mesh.ele", mesh::format_tetgen_ele(m)}};
  std::vector<std::string> written;
  try {
    for (const auto& [name, text] : files) {
      const auto tmp = join_path(dir, name + ".tmp");
      written.push_back(tmp);
      if (name == "dataset.bin")
        datagen::write_samples(tmp, out.samples, m.node_count());
      else
        write_file(tmp, text);
    }
    for (const auto& [name, text] : files) fs::rename(join_path(dir, name + ".tmp"), join_path(dir, name));
  } catch (...) {
    std::error_code ec;
    for (const auto& f : written) fs::remove(f, ec);
    throw;
  }
}

std::vector<bool> fixed_mask(const datagen::GraphSample& s) {
  std::vector<bool> out(s.node_count);
  for (std::size_t n = 0; n < s.node_count; ++n) out[n] = s.feature(n, datagen::kPhysicalProperty) == 0.0;
  return out;
}

DatasetBundle load_dataset_dir(const std::string& dir) {
  if (!fs::is_directory(dir)) throw InputError("dataset directory " + dir + " does not exist");
  auto m = read_mesh_artifact(dir);
  auto graph = std::make_shared<const mesh::MeshGraph>(mesh::build_graph(m));
  const auto manifest_text = read_file(join_path(dir, "manifest.json"));
  DatasetBundle b{std::move(m), graph, datagen::read_samples(join_path(dir, "dataset.bin"), graph),
                  datagen::manifest_from_json(manifest_text), io::fnv1a(manifest_text), {}};
  if (b.manifest.sample_count != b.samples.size())
    throw InputError("manifest lists " + std::to_string(b.manifest.sample_count) + " samples, dataset holds " +
                     std::to_string(b.samples.size()));
  if (!b.samples.empty()) {
    if (b.samples.front().node_count != b.mesh.node_count())
      throw InputError("dataset node count does not match the mesh");
    b.fixed = fixed_mask(b.samples.front());
  }
  return b;
}

}  // namespace physgnn::pipeline
