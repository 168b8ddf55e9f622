#pragma once

#include <memory>
#include <string>
#include <vector>

#include "physgnn/config.hpp"
#include "physgnn/datagen.hpp"
#include "physgnn/mesh.hpp"

namespace physgnn::pipeline {

struct MeshSummary {
  std::size_t nodes = 0, tets = 0, edges = 0, boundary_nodes = 0, tumour_nodes = 0;
  double volume = 0;  // mm^3

  std::string to_text() const;
  std::string to_json() const;
};

MeshSummary summarize(const mesh::TetMesh& mesh);

mesh::TetMesh build_mesh(const config::MeshSource& source);

// A mesh artifact is a directory holding mesh.node and mesh.ele.
void write_mesh_artifact(const std::string& dir, const mesh::TetMesh& mesh);
mesh::TetMesh read_mesh_artifact(const std::string& dir);

mesh::BoundarySets boundary_sets(const mesh::TetMesh& mesh, const config::BoundaryConfig& b);

struct SimulationOutput {
  std::vector<datagen::GraphSample> samples;
  datagen::DatasetManifest manifest;
};

SimulationOutput simulate_dataset(const mesh::TetMesh& mesh, const config::RunConfig& cfg);

// Writes dataset.bin, manifest.json and the mesh artifact into `dir`. Files
// are written under temporary names and renamed at the end; on failure
// nothing is left behind.
void write_dataset_dir(const std::string& dir, const mesh::TetMesh& mesh, const SimulationOutput& out);

struct DatasetBundle {
  mesh::TetMesh mesh;
  std::shared_ptr<const mesh::MeshGraph> graph;
  std::vector<datagen::GraphSample> samples;
  datagen::DatasetManifest manifest;
  std::uint64_t manifest_hash = 0;
  std::vector<bool> fixed;  // per node, from the physical-property feature
};

DatasetBundle load_dataset_dir(const std::string& dir);

// Fixed nodes are exactly those whose physical-property feature is 0.
std::vector<bool> fixed_mask(const datagen::GraphSample& s);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& text);
std::string join_path(const std::string& dir, const std::string& name);

}  // namespace physgnn::pipeline
