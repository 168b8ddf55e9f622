#include "physgnn/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "physgnn/error.hpp"

namespace physgnn::datagen {

namespace {

// splitmix64 finaliser; derives independent child seeds from the root seed.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

double sq_dist(const Vec3& a, const Vec3& b) {
  return (a[0] - b[0]) * (a[0] - b[0]) + (a[1] - b[1]) * (a[1] - b[1]) + (a[2] - b[2]) * (a[2] - b[2]);
}

Vec3 normalized(const Vec3& v) {
  const double n = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
  if (!(n > 0.0)) throw InputError("cannot normalise a zero vector");
  return {v[0] / n, v[1] / n, v[2] / n};
}

// Candidates sorted by distance to `center`, ties by index.
std::vector<std::int32_t> nearest_candidates(const mesh::TetMesh& mesh, const std::vector<std::int32_t>& candidates,
                                             const Vec3& center) {
  std::vector<std::int32_t> out = candidates;
  std::stable_sort(out.begin(), out.end(), [&](std::int32_t a, std::int32_t b) {
    const double da = sq_dist(mesh.nodes()[a], center);
    const double db = sq_dist(mesh.nodes()[b], center);
    return da != db ? da < db : a < b;
  });
  return out;
}

Vec3 candidate_centroid(const mesh::TetMesh& mesh, const std::vector<std::int32_t>& candidates) {
  Vec3 c{0, 0, 0};
  for (auto n : candidates)
    for (int d = 0; d < 3; ++d) c[d] += mesh.nodes()[n][d] / static_cast<double>(candidates.size());
  return c;
}

}  // namespace

Polar to_polar(const Vec3& f) {
  const double rho = std::sqrt(f[0] * f[0] + f[1] * f[1] + f[2] * f[2]);
  if (rho == 0.0) return {};
  return {rho, std::acos(std::clamp(f[2] / rho, -1.0, 1.0)), std::atan2(f[1], f[0])};
}

double physical_property(bool tumour, bool fixed) {
  if (fixed) return 0.0;
  return tumour ? 0.4 : 1.0;
}

std::vector<Vec3> sample_directions(const Vec3& normal, std::size_t n_random, std::uint64_t seed) {
  const double len = std::sqrt(normal[0] * normal[0] + normal[1] * normal[1] + normal[2] * normal[2]);
  if (!(len > 0.0)) throw InputError("surface normal must be nonzero");
  if (std::abs(len - 1.0) > 1e-9) throw InputError("surface normal must be unit length");
  std::vector<Vec3> out{normal};
  out.reserve(n_random + 1);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  while (out.size() < n_random + 1) {
    // Uniform on the sphere (Archimedes), then reflect into the hemisphere.
    const double z = 2.0 * unit(rng) - 1.0;
    const double phi = 2.0 * M_PI * unit(rng);
    const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    Vec3 d{r * std::cos(phi), r * std::sin(phi), z};
    const double proj = d[0] * normal[0] + d[1] * normal[1] + d[2] * normal[2];
    if (proj < 0.0)
      for (int k = 0; k < 3; ++k) d[k] -= 2.0 * proj * normal[k];
    out.push_back(normalized(d));
  }
  return out;
}

std::vector<std::vector<std::int32_t>> select_load_groups(const mesh::TetMesh& mesh, const mesh::MeshGraph& graph,
                                                          const mesh::BoundarySets& sets, const DatasetSpec& spec) {
  mesh::validate_boundary_sets(mesh, sets);
  const auto& cand = sets.candidate_load_nodes;
  auto is_candidate = [&](std::int32_t n) { return std::binary_search(cand.begin(), cand.end(), n); };
  if (spec.load_node_count == 0) throw InputError("load node count must be positive");
  if (spec.load_node_count > cand.size())
    throw InputError("requested " + std::to_string(spec.load_node_count) + " load nodes but only " +
                     std::to_string(cand.size()) + " candidate surface nodes exist");
  for (auto n : spec.load_nodes)
    if (!is_candidate(n)) throw InputError("load node " + std::to_string(n) + " is not a free surface node");

  const Vec3 center = spec.load_center.value_or(candidate_centroid(mesh, cand));
  std::vector<std::vector<std::int32_t>> groups;
  if (spec.style == LoadStyle::single) {
    std::vector<std::int32_t> chosen = spec.load_nodes;
    if (chosen.empty()) {
      chosen = nearest_candidates(mesh, cand, center);
      chosen.resize(spec.load_node_count);
    } else if (chosen.size() != spec.load_node_count) {
      throw InputError("explicit load node list has " + std::to_string(chosen.size()) + " entries, expected " +
                       std::to_string(spec.load_node_count));
    }
    for (auto n : chosen) groups.push_back({n});
    return groups;
  }

  const std::int32_t centre_node =
      spec.load_nodes.empty() ? nearest_candidates(mesh, cand, center).front() : spec.load_nodes.front();
  const auto hops = mesh::hop_distances(graph, centre_node);
  std::vector<std::int32_t> reachable;
  for (auto n : cand)
    if (hops[n] >= 0) reachable.push_back(n);
  if (reachable.size() < spec.load_node_count)
    throw InputError("patch of " + std::to_string(spec.load_node_count) + " nodes exceeds the " +
                     std::to_string(reachable.size()) + " reachable candidates");
  std::stable_sort(reachable.begin(), reachable.end(), [&](std::int32_t a, std::int32_t b) {
    return hops[a] != hops[b] ? hops[a] < hops[b] : a < b;
  });
  reachable.resize(spec.load_node_count);
  std::sort(reachable.begin(), reachable.end());
  groups.push_back(reachable);
  return groups;
}

std::vector<fem::LoadCase> enumerate_load_cases(const mesh::TetMesh& mesh, const mesh::MeshGraph& graph,
                                                const mesh::BoundarySets& sets, const DatasetSpec& spec) {
  if (spec.direction_count == 0) throw InputError("direction count must be positive");
  if (spec.step_count < 1) throw InputError("step count must be positive");
  if (!(spec.total_force >= 0.0)) throw InputError("total force must be non-negative");
  const auto groups = select_load_groups(mesh, graph, sets, spec);
  const auto normals = mesh::surface_normals(mesh);

  std::vector<fem::LoadCase> cases;
  cases.reserve(spec.case_count());
  for (std::size_t g = 0; g < groups.size(); ++g) {
    Vec3 normal{0, 0, 0};
    for (auto n : groups[g]) {
      const auto& nn = normals.at(n);
      for (int d = 0; d < 3; ++d) normal[d] += nn[d];
    }
    normal = normalized(normal);
    const auto dirs = sample_directions(normal, spec.direction_count - 1, mix_seed(spec.seed, g));
    for (std::size_t d = 0; d < dirs.size(); ++d) {
      Vec3 total;
      for (int k = 0; k < 3; ++k) total[k] = spec.total_force * dirs[d][k];
      for (int i = 1; i <= spec.step_count; ++i) {
        fem::LoadCase c;
        c.load_nodes = groups[g];
        c.force_per_node = fem::scheduled_force(spec.dataset_id(), total, i, spec.step_count,
                                                static_cast<int>(groups[g].size()));
        c.time_step = i;
        c.step_count = spec.step_count;
        c.fixed_nodes = sets.fixed_nodes;
        c.dataset_id = spec.dataset_id();
        c.selection_id = static_cast<int>(g);
        c.direction_id = static_cast<int>(d);
        cases.push_back(std::move(c));
      }
    }
  }
  return cases;
}

FeatureContext FeatureContext::from_mesh(const mesh::TetMesh& mesh, const std::vector<std::int32_t>& fixed_nodes) {
  FeatureContext ctx;
  ctx.node_count = mesh.node_count();
  ctx.fixed.assign(ctx.node_count, false);
  for (auto n : fixed_nodes) {
    if (n < 0 || static_cast<std::size_t>(n) >= ctx.node_count) throw InputError("fixed node outside mesh");
    ctx.fixed[n] = true;
  }
  const auto tumour = mesh.tumour_node_mask();
  ctx.physical_property.resize(ctx.node_count);
  for (std::size_t n = 0; n < ctx.node_count; ++n) ctx.physical_property[n] = datagen::physical_property(tumour[n], ctx.fixed[n]);
  return ctx;
}

GraphSample build_sample(const FeatureContext& ctx, const fem::LoadCase& load, const fem::DisplacementField& u,
                         std::uint64_t sample_id) {
  if (u.size() != ctx.node_count)
    throw InputError("displacement has " + std::to_string(u.size()) + " rows, mesh has " +
                     std::to_string(ctx.node_count));
  GraphSample s;
  s.node_count = ctx.node_count;
  s.features.assign(ctx.node_count * kFeatureWidth, 0.0);
  s.labels.assign(ctx.node_count * kLabelWidth, 0.0);
  const auto polar = to_polar(load.force_per_node);
  for (auto n : load.load_nodes) {
    double* row = s.features.data() + static_cast<std::size_t>(n) * kFeatureWidth;
    row[kFx] = load.force_per_node[0];
    row[kFy] = load.force_per_node[1];
    row[kFz] = load.force_per_node[2];
    row[kFrho] = polar.rho;
    row[kFtheta] = polar.theta;
    row[kFphi] = polar.phi;
  }
  for (std::size_t n = 0; n < ctx.node_count; ++n) {
    s.features[n * kFeatureWidth + kPhysicalProperty] = ctx.physical_property[n];
    for (int d = 0; d < 3; ++d) s.labels[n * kLabelWidth + d] = ctx.fixed[n] ? 0.0 : u[n][d];
  }
  s.provenance = {sample_id, load.dataset_id, load.selection_id, load.direction_id, load.time_step, load.step_count,
                  load.load_nodes};
  return s;
}

std::vector<GraphSample> simulate(const mesh::TetMesh& mesh, const fem::MaterialTable& materials,
                                  const std::vector<fem::LoadCase>& cases, const OracleSettings& oracle,
                                  std::shared_ptr<const mesh::MeshGraph> graph) {
  std::vector<GraphSample> samples(cases.size());
  if (cases.empty()) return samples;
  for (const auto& c : cases) c.validate(mesh.node_count());
  // All cases of one dataset share the fixed set.
  const auto& fixed = cases.front().fixed_nodes;
  for (const auto& c : cases)
    if (c.fixed_nodes != fixed) throw InputError("load cases disagree on the fixed boundary set");

  const auto ctx = FeatureContext::from_mesh(mesh, fixed);
  std::optional<fem::LinearOracle> linear;
  if (oracle.kind == Oracle::linear) linear.emplace(fem::assemble_linear_stiffness(mesh, materials), fixed);

  std::vector<std::string> errors(cases.size());
  const auto n = static_cast<std::int64_t>(cases.size());
#pragma omp parallel for schedule(dynamic)
  for (std::int64_t i = 0; i < n; ++i) {
    try {
      const auto& c = cases[i];
      fem::DisplacementField u;
      if (linear)
        u = linear->solve(c.nodal_loads(mesh.node_count()));
      else
        u = fem::nonlinear_solve(mesh, materials, c, oracle.nonlinear_increments).displacement;
      samples[i] = build_sample(ctx, c, u, static_cast<std::uint64_t>(i));
      samples[i].graph = graph;
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  }
  for (std::size_t i = 0; i < errors.size(); ++i)
    if (!errors[i].empty()) {
      const auto& c = cases[i];
      throw NumericalError("oracle failed on case " + std::to_string(i) + " (selection " +
                           std::to_string(c.selection_id) + ", direction " + std::to_string(c.direction_id) +
                           ", step " + std::to_string(c.time_step) + "): " + errors[i]);
    }
  return samples;
}

const char* to_string(Split s) {
  switch (s) {
    case Split::train:
      return "train";
    case Split::validation:
      return "validation";
    case Split::test:
      return "test";
  }
  return "?";
}

std::vector<std::size_t> DatasetManifest::indices(Split s) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < assignment.size(); ++i)
    if (assignment[i] == s) out.push_back(i);
  return out;
}

std::size_t DatasetManifest::count(Split s) const {
  return static_cast<std::size_t>(std::count(assignment.begin(), assignment.end(), s));
}

DatasetManifest split_dataset(std::size_t sample_count, std::uint64_t seed, SplitMode mode,
                              const std::vector<int>& groups) {
  if (sample_count == 0) throw InputError("cannot split an empty dataset");
  DatasetManifest m;
  m.sample_count = sample_count;
  m.seed = seed;
  m.mode = mode;
  m.assignment.assign(sample_count, Split::train);
  const std::size_t n_val = sample_count * 2 / 10;
  const std::size_t n_test = sample_count / 10;
  std::mt19937_64 rng(seed);

  if (mode == SplitMode::shuffle) {
    std::vector<std::size_t> order(sample_count);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t k = 0; k < n_val; ++k) m.assignment[order[k]] = Split::validation;
    for (std::size_t k = n_val; k < n_val + n_test; ++k) m.assignment[order[k]] = Split::test;
    return m;
  }

  if (groups.size() != sample_count) throw InputError("node holdout needs one group id per sample");
  std::vector<int> ids = groups;
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  if (ids.size() < 3) throw InputError("node holdout needs at least 3 load groups");
  std::shuffle(ids.begin(), ids.end(), rng);
  std::vector<std::size_t> group_size(ids.size(), 0);
  std::vector<Split> group_split(ids.size(), Split::train);
  for (int g : groups) ++group_size[std::find(ids.begin(), ids.end(), g) - ids.begin()];
  // Fill test, then validation, one whole group at a time, never emptying train.
  std::size_t test = 0, val = 0, k = 0;
  while (k + 2 < ids.size() && test < n_test) {
    group_split[k] = Split::test;
    test += group_size[k++];
  }
  while (k + 1 < ids.size() && val < n_val) {
    group_split[k] = Split::validation;
    val += group_size[k++];
  }
  for (std::size_t i = 0; i < sample_count; ++i)
    m.assignment[i] = group_split[std::find(ids.begin(), ids.end(), groups[i]) - ids.begin()];
  return m;
}

}  // namespace physgnn::datagen
