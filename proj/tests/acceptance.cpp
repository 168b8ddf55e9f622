// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fail.
// Usage: physgnn_acceptance [criterion numbers...]

#include <Eigen/Dense>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "physgnn/datagen.hpp"
#include "physgnn/fem.hpp"
#include "physgnn/gnn.hpp"
#include "physgnn/gradcheck.hpp"
#include "physgnn/mesh.hpp"
#include "physgnn/train.hpp"

using namespace physgnn;
using ad::Shape;
using ad::Tensor;
using gnn::Aggregator;
using gnn::LayerKind;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail += (detail.empty() ? "" : "; ") + ("failed: " + what);
    }
  }
  void note(const std::string& s) {
    if (pass) detail += (detail.empty() ? "" : "; ") + s;
  }
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(ad::shape_size(shape));
  for (auto& x : v) x = u(rng);
  return Tensor::from(std::move(shape), std::move(v));
}

Tensor kink_free(Shape shape, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.1, 1.0);
  std::bernoulli_distribution sign(0.5);
  std::vector<double> v(ad::shape_size(shape));
  for (auto& x : v) x = sign(rng) ? u(rng) : -u(rng);
  return Tensor::from(std::move(shape), std::move(v));
}

Tensor distinct(Shape shape, std::mt19937_64& rng) {
  std::vector<double> v(ad::shape_size(shape));
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = 0.1 * static_cast<double>(i) - 1.0;
  std::shuffle(v.begin(), v.end(), rng);
  return Tensor::from(std::move(shape), std::move(v));
}

gnn::Model randomised(const gnn::ModelConfig& cfg, std::uint64_t seed) {
  const gnn::Model m = gnn::Model::init(cfg, seed);
  std::mt19937_64 rng(seed + 1000);
  std::uniform_real_distribution<double> u(-0.8, 0.8);
  std::vector<std::vector<double>> values;
  for (const auto& p : m.named_parameters()) {
    std::vector<double> v(p.tensor.size());
    for (auto& x : v) x = u(rng);
    values.push_back(v);
  }
  gnn::Model r = m.clone();
  r.load_values(values);
  return r;
}

double field_norm(const fem::DisplacementField& u) {
  double s = 0;
  for (const auto& v : u) s += v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
  return std::sqrt(s);
}

double field_diff(const fem::DisplacementField& a, const fem::DisplacementField& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (int d = 0; d < 3; ++d) s += (a[i][d] - b[i][d]) * (a[i][d] - b[i][d]);
  return std::sqrt(s);
}

fem::MaterialTable uniform_table(const fem::Material& m) {
  return {{mesh::Region::healthy, m}, {mesh::Region::tumour, m}};
}

std::vector<std::int32_t> side_nodes(const mesh::TetMesh& m, mesh::BoxSide side) {
  return mesh::select_boundary_sets(m, {side}).fixed_nodes;
}

// ---- 1: gradients ----

Outcome gradients() {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0;
  std::string worst_name;
  auto check = [&](const std::string& name, const ad::TensorFn& f, const std::vector<Tensor>& in, std::uint64_t seed) {
    const double e = ad::gradcheck(f, in, 1e-6, seed);
    if (e > worst) {
      worst = e;
      worst_name = name;
    }
  };
  using namespace physgnn::ad;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> dim(1, 5);
    const std::size_t m = dim(rng), k = dim(rng), n = dim(rng);
    const auto a = random_tensor({m, k}, rng), b = random_tensor({k, n}, rng), bt = random_tensor({n, k}, rng);
    const auto p = random_tensor({m, k}, rng), q = random_tensor({m, k}, rng);
    const auto bias = random_tensor({k}, rng);
    const auto pos = random_tensor({m, k}, rng, 0.2, 2.0);
    const auto col = random_tensor({m, 1}, rng);
    std::vector<double> w(m);
    for (auto& x : w) x = std::uniform_real_distribution<double>(-2, 2)(rng);
    std::vector<std::int64_t> offsets{0, static_cast<std::int64_t>(m)};
    for (std::size_t s = 1, segs = dim(rng); s < segs; ++s)
      offsets.push_back(static_cast<std::int64_t>(std::uniform_int_distribution<std::size_t>(0, m)(rng)));
    std::sort(offsets.begin(), offsets.end());
    std::vector<std::int64_t> index(dim(rng) + 2);
    for (auto& i : index) i = static_cast<std::int64_t>(std::uniform_int_distribution<std::size_t>(0, m - 1)(rng));

    check("matmul", [](auto& in) { return matmul(in[0], in[1]); }, {a, b}, seed);
    check("matmul_bt", [](auto& in) { return matmul_bt(in[0], in[1]); }, {a, bt}, seed);
    check("add", [](auto& in) { return add(in[0], in[1]); }, {p, q}, seed);
    check("sub", [](auto& in) { return sub(in[0], in[1]); }, {p, q}, seed);
    check("mul", [](auto& in) { return mul(in[0], in[1]); }, {p, q}, seed);
    check("add_bias", [](auto& in) { return add_bias(in[0], in[1]); }, {p, bias}, seed);
    check("scale", [](auto& in) { return scale(in[0], -1.7); }, {p}, seed);
    check("add_scalar", [](auto& in) { return add_scalar(in[0], 0.3); }, {p}, seed);
    check("concat", [](auto& in) { return concat({in[0], in[1]}); }, {p, col}, seed);
    check("slice_cols", [k](auto& in) { return slice_cols(in[0], k / 2, k); }, {p}, seed);
    check("relu", [](auto& in) { return relu(in[0]); }, {kink_free({m, k}, rng)}, seed);
    check("sigmoid", [](auto& in) { return sigmoid(in[0]); }, {p}, seed);
    check("tanh", [](auto& in) { return tanh(in[0]); }, {p}, seed);
    check("sqrt", [](auto& in) { return sqrt(in[0]); }, {pos}, seed);
    check("softmax", [](auto& in) { return softmax(in[0]); }, {p}, seed);
    check("gather_rows", [&index](auto& in) { return gather_rows(in[0], index); }, {p}, seed);
    check("segment_sum", [&offsets](auto& in) { return segment_sum(in[0], offsets); }, {p}, seed);
    check("segment_max", [&offsets](auto& in) { return segment_max(in[0], offsets); }, {distinct({m, k}, rng)},
          seed);
    check("scale_rows", [](auto& in) { return scale_rows(in[0], in[1]); }, {p, col}, seed);
    check("scale_rows_const", [&w](auto& in) { return scale_rows(in[0], w); }, {p}, seed);
    check("dropout", [seed](auto& in) { return dropout(in[0], 0.4, true, seed); }, {p}, seed);
    check("sum", [](auto& in) { return sum(in[0]); }, {p}, seed);
    check("mean", [](auto& in) { return mean(in[0]); }, {p}, seed);
    check("row_sum", [](auto& in) { return row_sum(in[0]); }, {p}, seed);
  }

  const auto g6 = mesh::graph_from_edges(6, {{0, 1}, {1, 2}, {2, 3}, {3, 4}, {4, 5}, {0, 5}, {1, 4}},
                                         {1.0, 0.5, 2.0, 0.7, 1.3, 0.9, 1.1});
  for (auto kind : {LayerKind::graphsage, LayerKind::graphconv})
    for (auto agg : {Aggregator::sum, Aggregator::max})
      for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto m = randomised(gnn::ModelConfig::stack({kind}, {agg}, 3, 2), seed);
        const auto& p = m.layers()[0];
        const ad::TensorFn f = [&](const std::vector<Tensor>& in) {
          const gnn::LayerParams lp{in[1], in[2], in[3]};
          return kind == LayerKind::graphsage ? gnn::graphsage_layer(in[0], g6, lp, agg)
                                              : gnn::graphconv_layer(in[0], g6, lp, agg);
        };
        std::mt19937_64 rng(seed + 50);
        check(std::string(gnn::to_string(kind)) + "/" + gnn::to_string(agg), f,
              {random_tensor({6, 3}, rng), p.w_self, p.w_neigh, p.b}, seed);
      }

  const double elapsed = seconds_since(t0);
  o.require(worst <= 1e-4, "max relative error " + fmt("%.3g", worst) + " at " + worst_name);
  o.require(elapsed < 60, "runtime " + fmt("%.1f s", elapsed));
  o.note("max rel err " + fmt("%.2e", worst) + ", " + fmt("%.2f s", elapsed));
  return o;
}

// ---- 2: FEM oracle ----

Outcome fem_oracle() {
  Outcome o;
  {
    const fem::Material mat{1000, 5000, 0.3, 2};
    const auto m = mesh::generate_synthetic_mesh(3, 4, 5, 2.0);
    const auto k = fem::assemble_linear_stiffness(m, uniform_table(mat));
    const double a = 1e-3, b = -2e-3, c = 1.5e-3;
    fem::DisplacementField exact(m.node_count());
    std::vector<double> flat(3 * m.node_count());
    for (std::size_t i = 0; i < m.node_count(); ++i) {
      const double z = m.nodes()[i][2];
      exact[i] = {a * z, b * z, c * z};
      for (int d = 0; d < 3; ++d) flat[3 * i + d] = exact[i][d];
    }
    const auto kf = k.multiply(flat);
    std::vector<fem::Vec3> loads(m.node_count());
    for (std::size_t i = 0; i < m.node_count(); ++i)
      for (int d = 0; d < 3; ++d) loads[i][d] = kf[3 * i + d];
    fem::CgOptions opts;
    opts.relative_tolerance = 1e-12;
    const auto u = fem::solve_linear(k, loads, side_nodes(m, mesh::BoxSide::zmin), opts);
    const double rel = field_diff(u, exact) / field_norm(exact);
    o.require(rel <= 1e-8, "patch test relative error " + fmt("%.3g", rel));
    o.note("patch " + fmt("%.1e", rel));
  }
  {
    const auto m = mesh::generate_synthetic_mesh(3, 3, 4, 2.5, mesh::Box{{0, 0, 2}, {5, 5, 6}});
    const auto k = fem::assemble_linear_stiffness(m, fem::brain_materials());
    const auto fixed = side_nodes(m, mesh::BoxSide::zmin);
    std::vector<bool> is_fixed(m.node_count(), false);
    for (auto n : fixed) is_fixed[n] = true;
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(-0.1, 0.1);
    std::vector<fem::Vec3> loads(m.node_count(), fem::Vec3{0, 0, 0});
    std::vector<int> free_dofs;
    for (std::size_t i = 0; i < m.node_count(); ++i)
      if (!is_fixed[i]) {
        loads[i] = {u(rng), u(rng), u(rng)};
        for (int d = 0; d < 3; ++d) free_dofs.push_back(static_cast<int>(3 * i + d));
      }
    const auto dense = k.to_dense();
    const auto nf = static_cast<Eigen::Index>(free_dofs.size());
    Eigen::MatrixXd kr(nf, nf);
    Eigen::VectorXd fr(nf);
    for (Eigen::Index r = 0; r < nf; ++r) {
      fr[r] = loads[free_dofs[r] / 3][free_dofs[r] % 3];
      for (Eigen::Index c = 0; c < nf; ++c) kr(r, c) = dense(free_dofs[r], free_dofs[c]);
    }
    const Eigen::VectorXd ur = kr.ldlt().solve(fr);
    fem::DisplacementField direct(m.node_count(), fem::Vec3{0, 0, 0});
    for (Eigen::Index r = 0; r < nf; ++r) direct[free_dofs[r] / 3][free_dofs[r] % 3] = ur[r];
    fem::CgOptions opts;
    opts.relative_tolerance = 1e-12;
    const auto cg = fem::solve_linear(k, loads, fixed, opts);
    const double rel = field_diff(cg, direct) / field_norm(direct);
    o.require(m.node_count() <= 60, "mesh has " + std::to_string(m.node_count()) + " nodes");
    o.require(rel <= 1e-7, "CG vs dense relative error " + fmt("%.3g", rel));
    o.note("CG/dense " + fmt("%.1e", rel));
  }
  {
    const fem::Material mat{1000, 3000, 0.49, 2.0};
    o.require(fem::neo_hookean_energy(Eigen::Matrix3d::Identity(), mat) == 0.0, "energy at identity is not 0");
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> u(-0.3, 0.3);
    double worst = 0;
    for (int trial = 0; trial < 50; ++trial) {
      Eigen::Matrix3d f = Eigen::Matrix3d::Identity();
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) f(i, j) += u(rng);
      if (f.determinant() <= 0) continue;
      f /= std::cbrt(f.determinant());
      const double expected = mat.shear_modulus() / 2 * ((f.transpose() * f).trace() - 3);
      const double got = fem::neo_hookean_energy(f, mat);
      worst = std::max(worst, std::abs(got - expected) / std::max(1.0, std::abs(expected)));
    }
    o.require(worst <= 1e-12, "alpha=2 reduction error " + fmt("%.3g", worst));
    o.note("reduction " + fmt("%.1e", worst));
  }
  return o;
}

// ---- 3: nonlinear vs linear ----

Outcome nonlinear_consistency() {
  Outcome o;
  const auto m = mesh::generate_synthetic_mesh(3, 2, 2, 5.0);
  const auto mats = fem::brain_materials();
  fem::LoadCase lc;
  lc.fixed_nodes = side_nodes(m, mesh::BoxSide::xmin);
  lc.load_nodes = side_nodes(m, mesh::BoxSide::xmax);
  lc.time_step = 1;
  lc.step_count = 1;
  lc.force_per_node = {5e-6, 2.5e-6, -1e-6};
  const auto lin = fem::solve_linear(fem::assemble_linear_stiffness(m, mats), lc.nodal_loads(m.node_count()),
                                     lc.fixed_nodes);
  const auto nl = fem::nonlinear_solve(m, mats, lc, 3);
  double max_strain = 0;
  for (const auto& v : lin)
    for (double x : v) max_strain = std::max(max_strain, std::abs(x) / 10.0);
  const double rel = field_diff(nl.displacement, lin) / field_norm(lin);
  o.require(m.tet_count() == 12, "expected 2 cells");
  o.require(max_strain < 1e-3, "strain " + fmt("%.3g", max_strain));
  o.require(rel <= 0.01, "relative displacement difference " + fmt("%.3g", rel));
  o.note("strain " + fmt("%.1e", max_strain) + ", rel diff " + fmt("%.2e", rel));
  return o;
}

// ---- Scaled dataset shared by 4, 8 and 9 ----

struct Scaled {
  std::vector<datagen::GraphSample> samples;
  datagen::DatasetManifest manifest;
  std::size_t node_count = 0;
  double mean_max_displacement = 0;
};

const Scaled& scaled_dataset() {
  static const Scaled s = [] {
    Scaled d;
    const auto mesh = mesh::generate_synthetic_mesh(7, 7, 6, 5.0, mesh::Box{{10, 10, 10}, {20, 20, 20}});
    auto graph = std::make_shared<mesh::MeshGraph>(mesh::build_graph(mesh));
    const auto sets = mesh::select_boundary_sets(mesh, {mesh::BoxSide::zmin}, {mesh::BoxSide::zmax});
    datagen::DatasetSpec spec;
    spec.load_node_count = 5;
    spec.direction_count = 5;
    spec.step_count = 10;
    d.samples = datagen::simulate(mesh, fem::brain_materials(),
                                  datagen::enumerate_load_cases(mesh, *graph, sets, spec), {}, graph);
    d.manifest = datagen::split_dataset(d.samples.size(), 0);
    d.node_count = mesh.node_count();
    for (const auto& smp : d.samples) {
      double mx = 0;
      for (std::size_t v = 0; v < smp.node_count; ++v)
        mx = std::max(mx, std::hypot(smp.label(v, 0), smp.label(v, 1), smp.label(v, 2)));
      d.mean_max_displacement += mx / static_cast<double>(d.samples.size());
    }
    return d;
  }();
  return s;
}

struct Trained {
  gnn::Model model;
  train::TrainResult result;
  double seconds = 0;
};

constexpr int kLearningEpochs = 120;

const Trained& trained_model() {
  static const Trained t = [] {
    const auto& d = scaled_dataset();
    Trained r;
    auto cfg = gnn::ModelConfig::default_config();
    cfg.dropout_p = 0.0;
    r.model = gnn::Model::init(cfg, 1);
    train::TrainOptions opts;
    opts.max_epochs = kLearningEpochs;
    opts.seed = 1;
    opts.normalize_features = true;
    const auto t0 = std::chrono::steady_clock::now();
    r.result = train::train_loop(r.model, d.samples, d.manifest, opts);
    r.seconds = seconds_since(t0);
    return r;
  }();
  return t;
}

// ---- 4: learning ----

Outcome learning() {
  Outcome o;
  const auto& d = scaled_dataset();
  const auto& t = trained_model();
  const auto test = d.manifest.indices(datagen::Split::test);
  train::MetricsOptions mo;
  mo.threshold = 0.1 * d.mean_max_displacement;
  const auto rep = train::evaluate(t.model, d.samples, test, mo, t.result.checkpoint.normalization);
  train::MetricsAccumulator zero(mo);
  const std::vector<double> zeros(d.node_count * 3, 0.0);
  for (auto i : test) zero.add(zeros, d.samples[i].labels);
  const auto zrep = zero.report();
  const double ratio = rep.euclidean_mean / zrep.euclidean_mean;

  o.require(d.samples.size() == 250, "dataset has " + std::to_string(d.samples.size()) + " samples");
  o.require(d.manifest.count(datagen::Split::train) == 175 && d.manifest.count(datagen::Split::validation) == 50 &&
                d.manifest.count(datagen::Split::test) == 25,
            "split is not 70:20:10");
  o.require(ratio <= 0.5, "model/zero error ratio " + fmt("%.3f", ratio));
  o.require(rep.euclidean_within >= 80.0, "within threshold " + fmt("%.1f%%", rep.euclidean_within));
  o.require(t.seconds <= 1800, "training took " + fmt("%.0f s", t.seconds));
  o.note(std::to_string(d.node_count) + " nodes, " + std::to_string(t.result.history.size()) + " epochs in " +
         fmt("%.0f s", t.seconds) + "; error " + fmt("%.4f", rep.euclidean_mean) + " vs zero " +
         fmt("%.4f mm", zrep.euclidean_mean) + " (ratio " + fmt("%.3f", ratio) + "); " +
         fmt("%.1f%%", rep.euclidean_within) + " within " + fmt("%.4f mm", mo.threshold) + " (zero predictor " +
         fmt("%.1f%%)", zrep.euclidean_within));
  return o;
}

// ---- 5: force schedule ----

Outcome force_schedule() {
  Outcome o;
  const fem::Vec3 f{0, 0, 1.35};
  const double at30 = fem::scheduled_force(1, f, 30)[2];
  const double at1 = fem::scheduled_force(1, f, 1)[2];
  const double patch = fem::scheduled_force(2, fem::Vec3{20, 0, 0}, 30)[0];
  o.require(at30 == 1.35, "i=30 gives " + fmt("%.17g", at30));
  // 1.35 / 30 is not representable; accept the nearest doubles to 0.045.
  o.require(std::abs(at1 - 0.045) <= std::nextafter(0.045, 1.0) - 0.045, "i=1 gives " + fmt("%.17g", at1));
  o.require(patch == 0.2, "patch i=30 gives " + fmt("%.17g", patch));
  const auto big = mesh::generate_synthetic_mesh(12, 12, 4, 5.0);
  const auto g = mesh::build_graph(big);
  const auto sets = mesh::select_boundary_sets(big, {mesh::BoxSide::zmin}, {mesh::BoxSide::zmax});
  const auto cases = datagen::enumerate_load_cases(big, g, sets, datagen::DatasetSpec{});
  o.require(cases.size() == 4950, "enumeration gives " + std::to_string(cases.size()) + " cases");
  o.note("1.35 N at i=30, " + fmt("%.17g", at1) + " N at i=1, 0.2 N/node patch, " + std::to_string(cases.size()) +
         " cases");
  return o;
}

// ---- 6: architecture invariants ----

Tensor random_features(std::size_t n, std::size_t w, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return random_tensor({n, w}, rng);
}

Outcome architecture() {
  Outcome o;
  const auto cfg = gnn::ModelConfig::default_config();
  const auto model = gnn::Model::init(cfg, 3);
  std::set<std::size_t> counts;
  std::size_t biggest = 0;
  for (auto dims : {std::array<int, 3>{5, 5, 4}, std::array<int, 3>{10, 10, 10}}) {
    const auto g = mesh::build_graph(mesh::generate_synthetic_mesh(dims[0], dims[1], dims[2], 1.0));
    const auto out = gnn::physgnn_forward(model, g, random_features(g.node_count(), 7, 1));
    o.require(out.shape() == Shape{g.node_count(), 3}, "output shape");
    counts.insert(model.parameter_count());
    biggest = g.node_count();
  }
  o.require(counts.size() == 1 && biggest == 1000, "parameter count varies with the mesh");

  const auto line = mesh::build_graph(mesh::generate_synthetic_mesh(9, 2, 2, 1.0));
  bool local = true;
  for (std::size_t depth : {2u, 3u}) {
    const auto lc = gnn::ModelConfig::stack(std::vector<LayerKind>(depth, LayerKind::graphconv),
                                            std::vector<Aggregator>(depth, Aggregator::sum), 7, 5);
    const auto m = randomised(lc, 30 + depth);
    const auto x = random_features(line.node_count(), 7, 31);
    const auto hops = mesh::hop_distances(line, 0);
    std::vector<double> xp(x.values().begin(), x.values().end());
    for (std::size_t v = 0; v < line.node_count(); ++v)
      if (hops[v] > static_cast<int>(depth))
        for (std::size_t c = 0; c < 7; ++c) xp[v * 7 + c] += 3.0;
    const auto a = gnn::physgnn_forward(m, line, x);
    const auto b = gnn::physgnn_forward(m, line, Tensor::from({line.node_count(), 7}, xp));
    for (std::size_t c = 0; c < 3; ++c) local &= a.at(0, c) == b.at(0, c);
  }
  o.require(local, "output at node 0 depends on nodes beyond K hops");

  const auto g = mesh::build_graph(mesh::generate_synthetic_mesh(4, 3, 3, 2.0));
  const std::size_t n = g.node_count();
  std::vector<std::int32_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), std::mt19937_64(12));
  std::vector<std::array<std::int32_t, 2>> edges;
  for (const auto& e : g.edges) edges.push_back({perm[e[0]], perm[e[1]]});
  const auto pg = mesh::graph_from_edges(n, edges, g.edge_weight);
  const auto x = random_features(n, 7, 13);
  std::vector<double> px(n * 7);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < 7; ++c) px[perm[i] * 7 + c] = x.at(i, c);
  const auto rm = randomised(gnn::ModelConfig::default_config(7, 8), 14);
  const auto out = gnn::physgnn_forward_detailed(rm, g, x);
  const auto pout = gnn::physgnn_forward(rm, pg, Tensor::from({n, 7}, px));
  double worst = 0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < 3; ++c)
      worst = std::max(worst, std::abs(out.output.at(i, c) - pout.at(static_cast<std::size_t>(perm[i]), c)));
  o.require(worst <= 1e-9, "permutation mismatch " + fmt("%.3g", worst));

  double att = 0;
  const auto& a = out.attention;
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double s = 0;
    for (std::size_t k = 0; k < a.cols(); ++k) s += a.at(i, k);
    att = std::max(att, std::abs(s - 1.0));
  }
  o.require(att <= 1e-6, "attention rows deviate from 1 by " + fmt("%.3g", att));
  o.note(std::to_string(*counts.begin()) + " parameters on 100 and 1000 nodes, locality exact, permutation " +
         fmt("%.1e", worst) + ", attention sum " + fmt("%.1e", att));
  return o;
}

// ---- 7: training control ----

Outcome training_control() {
  Outcome o;
  train::PlateauScheduler s;
  double lr = s.step(1.0, 0.005);
  int reduced_after = 0;
  for (int e = 1; e <= 10 && lr == 0.005; ++e) {
    lr = s.step(1.0, lr);
    reduced_after = e;
  }
  o.require(reduced_after == 5 && lr == 0.0005, "lr reduced after " + std::to_string(reduced_after) + " epochs");
  train::PlateauScheduler f;
  lr = 0.005;
  for (int e = 0; e < 200; ++e) lr = f.step(3.0, lr);
  o.require(lr == 1e-8, "lr floor " + fmt("%.3g", lr));

  train::EarlyStopper stop;
  stop.update(1.0);
  int stopped_after = 0;
  for (int e = 1; e <= 30; ++e)
    if (stop.update(1.0)) {
      stopped_after = e;
      break;
    }
  o.require(stopped_after == 15, "early stop after " + std::to_string(stopped_after) + " stagnant epochs");

  const auto& d = scaled_dataset();
  std::vector<datagen::GraphSample> subset(d.samples.begin(), d.samples.begin() + 20);
  const auto manifest = datagen::split_dataset(subset.size(), 7);
  train::TrainOptions opts;
  opts.max_epochs = 3;
  opts.seed = 5;
  std::string first;
  bool identical = true;
  for (int run = 0; run < 2; ++run) {
    auto m = gnn::Model::init(gnn::ModelConfig::default_config(7, 8), 9);
    const auto r = train::train_loop(m, subset, manifest, opts, 42);
    const auto bytes = gnn::serialize_checkpoint(r.checkpoint);
    if (run == 0)
      first = bytes;
    else
      identical = bytes == first;
  }
  o.require(identical, "re-run checkpoints differ");
  o.note("lr 0.005 -> 0.0005 after 5, floor 1e-8, stop after 15, re-run checkpoint identical (" +
         std::to_string(first.size()) + " bytes)");
  return o;
}

// ---- 8: metric coherence ----

Outcome metric_coherence() {
  Outcome o;
  const auto& d = scaled_dataset();
  const auto& t = trained_model();
  const auto& norm = t.result.checkpoint.normalization;
  std::size_t violations = 0, nodes = 0, evaluations = 0;
  double worst_mean = 0, worst_loss = 0;
  for (auto split : {datagen::Split::train, datagen::Split::validation, datagen::Split::test}) {
    const auto idx = d.manifest.indices(split);
    const auto rep = train::evaluate(t.model, d.samples, idx, {}, norm);
    const auto preds = train::predict(t.model, d.samples, idx, norm);
    violations += rep.triangle_violations;
    double sum = 0, count = 0;
    for (std::size_t j = 0; j < idx.size(); ++j) {
      const auto& y = preds[j];
      const auto& z = d.samples[idx[j]].labels;
      double smoothed = 0;
      for (std::size_t v = 0; v < d.node_count; ++v) {
        const double dx = y[3 * v] - z[3 * v], dy = y[3 * v + 1] - z[3 * v + 1], dz = y[3 * v + 2] - z[3 * v + 2];
        const double e = std::sqrt(dx * dx + dy * dy + dz * dz);
        const double ny = std::sqrt(y[3 * v] * y[3 * v] + y[3 * v + 1] * y[3 * v + 1] + y[3 * v + 2] * y[3 * v + 2]);
        const double nz = std::sqrt(z[3 * v] * z[3 * v] + z[3 * v + 1] * z[3 * v + 1] + z[3 * v + 2] * z[3 * v + 2]);
        if (std::abs(ny - nz) > e * (1 + 1e-12) + 1e-15) ++violations;
        sum += e;
        count += 1;
        smoothed += std::sqrt(dx * dx + dy * dy + dz * dz + train::kSqrtGuard);
        ++nodes;
      }
      const auto loss = train::loss_mean_euclidean(Tensor::from({d.node_count, 3}, y),
                                                   Tensor::from({d.node_count, 3}, z));
      const double expected = smoothed / static_cast<double>(d.node_count);
      worst_loss = std::max(worst_loss, std::abs(loss.item() - expected) / std::max(1.0, expected));
      ++evaluations;
    }
    const double expected = sum / count;
    worst_mean = std::max(worst_mean, std::abs(rep.euclidean_mean - expected) / std::max(1.0, expected));
  }
  o.require(violations == 0, std::to_string(violations) + " reverse-triangle violations");
  o.require(worst_mean <= 1e-12, "reported mean error differs by " + fmt("%.3g", worst_mean));
  o.require(worst_loss <= 1e-12, "loss differs from recomputation by " + fmt("%.3g", worst_loss));
  o.note(std::to_string(nodes) + " node rows over " + std::to_string(evaluations) +
         " predictions, 0 violations, mean diff " + fmt("%.1e", worst_mean) + ", loss diff " + fmt("%.1e", worst_loss));
  return o;
}

// ---- 9: ablation ----

Outcome ablation() {
  Outcome o;
  const auto& d = scaled_dataset();
  train::AblationOptions opts;
  opts.width = 4;
  opts.train.max_epochs = 2;
  opts.train.seed = 2;
  opts.train.normalize_features = true;
  opts.init_seed = 3;
  const auto t0 = std::chrono::steady_clock::now();
  const auto entries = train::run_ablation(d.samples, d.manifest, opts);
  const auto table = train::ablation_table(entries);
  std::printf("%s", table.c_str());
  std::size_t agg = 0, kind = 0;
  bool finite = true;
  for (const auto& e : entries) {
    agg += e.sweep == "aggregator";
    kind += e.sweep == "kind";
    finite &= std::isfinite(e.test.euclidean_mean) && std::isfinite(e.best_val_loss);
  }
  o.require(agg == 7 && kind == 7, "sweeps have " + std::to_string(agg) + " and " + std::to_string(kind) + " rows");
  o.require(finite, "non-finite metrics in the table");
  o.require(!table.empty(), "empty table");
  o.note(std::to_string(entries.size()) + " variants trained in " + fmt("%.0f s", seconds_since(t0)));
  return o;
}

// ---- 10: latency ----

Outcome latency() {
  Outcome o;
  const auto mesh = mesh::generate_synthetic_mesh(10, 10, 10, 2.0, mesh::Box{{6, 6, 6}, {12, 12, 12}});
  auto graph = std::make_shared<mesh::MeshGraph>(mesh::build_graph(mesh));
  const auto sets = mesh::select_boundary_sets(mesh, {mesh::BoxSide::zmin}, {mesh::BoxSide::zmax});
  datagen::DatasetSpec spec;
  spec.load_node_count = 1;
  spec.direction_count = 1;
  spec.step_count = 1;
  const auto samples = datagen::simulate(mesh, fem::brain_materials(),
                                         datagen::enumerate_load_cases(mesh, *graph, sets, spec), {}, graph);
  const auto model = gnn::Model::init(gnn::ModelConfig::default_config(), 1);
  const auto stats = train::benchmark_inference(model, samples[0], 10);
  o.require(stats.node_count <= 1000, std::to_string(stats.node_count) + " nodes");
  o.require(stats.max < 1.0, "slowest forward " + fmt("%.3f s", stats.max));
  o.note(std::to_string(stats.node_count) + " nodes, mean " + fmt("%.1f ms", 1e3 * stats.mean) + ", max " +
         fmt("%.1f ms", 1e3 * stats.max));
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"gradient correctness", gradients},
      {"FEM oracle correctness", fem_oracle},
      {"nonlinear/linear consistency", nonlinear_consistency},
      {"learning on the scaled dataset", learning},
      {"force schedule and case count", force_schedule},
      {"architecture invariants", architecture},
      {"training control", training_control},
      {"metric coherence", metric_coherence},
      {"ablation harness", ablation},
      {"latency", latency},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i + 1);
    if (!only.empty() && !only.count(id)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    failed += !o.pass;
    std::printf("%s %2d %s: %s\n", o.pass ? "PASS" : "FAIL", id, criteria[i].first, o.detail.c_str());
    std::fflush(stdout);
  }
  return failed ? 1 : 0;
}
