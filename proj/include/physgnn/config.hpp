#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "physgnn/datagen.hpp"
#include "physgnn/fem.hpp"
#include "physgnn/gnn.hpp"
#include "physgnn/mesh.hpp"
#include "physgnn/train.hpp"

namespace physgnn::config {

struct MeshSource {
  enum class Kind { generate, tetgen } kind = Kind::generate;
  int nx = 7, ny = 7, nz = 6;
  double spacing = 5.0;  // mm
  mesh::Box tumour_box;  // empty box: no tumour
  std::string node_path, ele_path;
};

struct BoundaryConfig {
  std::vector<mesh::BoxSide> fixed_sides{mesh::BoxSide::zmin};
  std::vector<mesh::BoxSide> load_sides{mesh::BoxSide::zmax};
  double tol = 1e-6;  // mm
};

struct DatasetConfig {
  datagen::DatasetSpec spec;
  datagen::OracleSettings oracle;
  datagen::SplitMode split_mode = datagen::SplitMode::shuffle;
};

struct ModelSection {
  std::vector<gnn::LayerKind> kinds;    // empty: default layer stack
  std::vector<gnn::Aggregator> aggregators;
  std::size_t width = 32;
  gnn::JkMode jk = gnn::JkMode::lstm_attention;
  std::size_t jk_hidden = 32;
  double dropout_p = 0.1;

  gnn::ModelConfig resolve() const;
};

// Declarative description of a whole run. Every section and key is
// optional; unknown keys are rejected with ConfigError.
struct RunConfig {
  std::uint64_t seed = 0;
  int threads = 0;  // 0 keeps the OpenMP default
  std::string out = "physgnn-out";
  MeshSource mesh;
  fem::MaterialTable materials = fem::brain_materials();
  BoundaryConfig boundary;
  DatasetConfig dataset;
  ModelSection model;
  train::TrainOptions train;
  train::MetricsOptions metrics;
};

RunConfig parse_run_config(const std::string& json_text, const std::string& source = "config");
RunConfig load_run_config(const std::string& path);
// Fully resolved document; parse_run_config(to_json(c)) reproduces c.
std::string to_json(const RunConfig& c);

}  // namespace physgnn::config
