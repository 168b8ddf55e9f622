#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "physgnn/fem.hpp"
#include "physgnn/mesh.hpp"

namespace physgnn::datagen {

using mesh::Vec3;

// Column layout of the per-node feature matrix.
enum FeatureColumn : std::size_t { kFx = 0, kFy, kFz, kFrho, kFtheta, kFphi, kPhysicalProperty, kFeatureWidth };
inline constexpr std::size_t kLabelWidth = 3;

struct Polar {
  double rho = 0.0;
  double theta = 0.0;  // polar angle from +z
  double phi = 0.0;    // azimuth, atan2(y, x)
};

// Zero vector maps to (0, 0, 0).
Polar to_polar(const Vec3& f);

// 0 for fixed nodes, 0.4 for free tumour nodes, 1 for free healthy nodes.
double physical_property(bool tumour, bool fixed);

// First entry is `normal`; the rest are uniform on the hemisphere around it.
std::vector<Vec3> sample_directions(const Vec3& normal, std::size_t n_random, std::uint64_t seed);

enum class LoadStyle {
  single,  // one load node per simulation (dataset 1)
  patch,   // a fixed patch of nodes loaded together (dataset 2)
};

struct DatasetSpec {
  LoadStyle style = LoadStyle::single;
  // single: number of distinct load nodes; patch: nodes in the patch.
  std::size_t load_node_count = 11;
  std::size_t direction_count = 15;  // includes the surface normal
  int step_count = 30;
  double total_force = 1.35;  // N, magnitude of F_total
  // Explicit load nodes (single) or patch centre (patch, first entry).
  std::vector<std::int32_t> load_nodes;
  // When load_nodes is empty, choose the candidates closest to this point
  // (defaults to the centroid of the candidate set).
  std::optional<Vec3> load_center;
  std::uint64_t seed = 0;

  int dataset_id() const { return style == LoadStyle::single ? 1 : 2; }
  std::size_t selection_count() const { return style == LoadStyle::single ? load_node_count : 1; }
  std::size_t case_count() const {
    return selection_count() * direction_count * static_cast<std::size_t>(step_count);
  }
};

// The load node groups a spec resolves to on a concrete mesh: one
// single-node group per load node, or one patch group.
std::vector<std::vector<std::int32_t>> select_load_groups(const mesh::TetMesh& mesh, const mesh::MeshGraph& graph,
                                                          const mesh::BoundarySets& sets, const DatasetSpec& spec);

// Cartesian product load group x direction x time step, in that nesting
// order.
std::vector<fem::LoadCase> enumerate_load_cases(const mesh::TetMesh& mesh, const mesh::MeshGraph& graph,
                                                const mesh::BoundarySets& sets, const DatasetSpec& spec);

struct Provenance {
  std::uint64_t sample_id = 0;
  int dataset_id = 1;
  int selection_id = 0;
  int direction_id = 0;
  int time_step = 1;
  int step_count = 30;
  std::vector<std::int32_t> load_nodes;
};

struct GraphSample {
  std::shared_ptr<const mesh::MeshGraph> graph;
  std::size_t node_count = 0;
  std::vector<double> features;  // node_count x kFeatureWidth, row-major
  std::vector<double> labels;    // node_count x 3, mm
  Provenance provenance;

  double feature(std::size_t node, std::size_t col) const { return features[node * kFeatureWidth + col]; }
  double label(std::size_t node, std::size_t axis) const { return labels[node * kLabelWidth + axis]; }
};

// Per-node quantities that do not depend on the load case.
struct FeatureContext {
  std::size_t node_count = 0;
  std::vector<double> physical_property;
  std::vector<bool> fixed;

  static FeatureContext from_mesh(const mesh::TetMesh& mesh, const std::vector<std::int32_t>& fixed_nodes);
};

GraphSample build_sample(const FeatureContext& ctx, const fem::LoadCase& load,
                         const fem::DisplacementField& displacement, std::uint64_t sample_id = 0);

enum class Oracle { linear, nonlinear };

struct OracleSettings {
  Oracle kind = Oracle::linear;
  int nonlinear_increments = 5;
};

// Runs the oracle for every case (OpenMP over cases) and builds samples.
// On failure the error message names the failing case.
std::vector<GraphSample> simulate(const mesh::TetMesh& mesh, const fem::MaterialTable& materials,
                                  const std::vector<fem::LoadCase>& cases, const OracleSettings& oracle,
                                  std::shared_ptr<const mesh::MeshGraph> graph);

enum class Split : std::uint8_t { train = 0, validation = 1, test = 2 };
const char* to_string(Split s);

enum class SplitMode {
  shuffle,       // shuffle all samples
  node_holdout,  // keep every load group inside one split
};

struct DatasetManifest {
  std::size_t sample_count = 0;
  std::vector<Split> assignment;  // per sample
  std::uint64_t seed = 0;
  SplitMode mode = SplitMode::shuffle;
  std::string oracle_snapshot;  // free-form JSON text of oracle settings

  std::vector<std::size_t> indices(Split s) const;
  std::size_t count(Split s) const;
};

// 70:20:10 split; validation and test sizes are floored so rounding favours
// train. `groups` (one id per sample) is only used for node_holdout.
DatasetManifest split_dataset(std::size_t sample_count, std::uint64_t seed, SplitMode mode = SplitMode::shuffle,
                              const std::vector<int>& groups = {});

// ---- Serialization ----
//
// Container layout (all integers and floats little-endian):
//   char[8]  magic "PGNNDS01"
//   u32      format version (1)
//   u64      node count N
//   u32      feature width (7)
//   u32      label width (3)
//   u64      sample count S
//   S records of:
//     u64 sample id; i32 dataset id, selection id, direction id, time step,
//     step count; u32 L; i32[L] load nodes; f64[N*7] features;
//     f64[N*3] labels
inline constexpr std::uint32_t kDatasetFormatVersion = 1;

void write_samples(const std::string& path, const std::vector<GraphSample>& samples, std::size_t node_count);
std::vector<GraphSample> read_samples(const std::string& path, std::shared_ptr<const mesh::MeshGraph> graph = nullptr);

std::string manifest_to_json(const DatasetManifest& m);
DatasetManifest manifest_from_json(const std::string& text);

}  // namespace physgnn::datagen
