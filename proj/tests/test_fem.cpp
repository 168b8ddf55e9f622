#include <Eigen/Dense>
#include <cmath>
#include <random>

#include "doctest.h"
#include "physgnn/error.hpp"
#include "physgnn/fem.hpp"
#include "physgnn/mesh.hpp"

using namespace physgnn;
using namespace physgnn::fem;

namespace {

MaterialTable uniform_table(const Material& m) { return {{mesh::Region::healthy, m}, {mesh::Region::tumour, m}}; }

double field_norm(const DisplacementField& u) {
  double s = 0;
  for (const auto& v : u) s += v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
  return std::sqrt(s);
}

double field_diff(const DisplacementField& a, const DisplacementField& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (int d = 0; d < 3; ++d) s += (a[i][d] - b[i][d]) * (a[i][d] - b[i][d]);
  return std::sqrt(s);
}

std::vector<std::int32_t> side_nodes(const mesh::TetMesh& m, mesh::BoxSide side) {
  return mesh::select_boundary_sets(m, {side}).fixed_nodes;
}

}  // namespace

TEST_CASE("derived moduli") {
  CHECK(derive_shear_modulus(3000, 0.49) == doctest::Approx(1006.7114).epsilon(1e-7));
  CHECK(derive_shear_modulus(7500, 0.49) == doctest::Approx(2516.7785).epsilon(1e-7));
  CHECK(derive_shear_modulus(2, 0.0) == 1.0);
  CHECK(derive_bulk_modulus(3000, 0.25) == doctest::Approx(2000.0));
  CHECK_THROWS_AS(derive_shear_modulus(3000, 0.5), InputError);
  CHECK_THROWS_AS(derive_shear_modulus(-1, 0.3), InputError);
  CHECK_THROWS_AS((Material{1000, 3000, 0.3, 0.0}.validate()), InputError);
}

TEST_CASE("scheduled force is exact at the documented points") {
  const Vec3 f1{0, 0, 1.35};
  CHECK(scheduled_force(1, f1, 30)[2] == 1.35);
  CHECK(scheduled_force(1, f1, 15)[2] == doctest::Approx(0.675).epsilon(1e-15));
  const double first = scheduled_force(1, f1, 1)[2];
  CHECK(std::abs(first - 0.045) <= std::nextafter(0.045, 1.0) - 0.045);
  CHECK(scheduled_force(2, Vec3{20, 0, 0}, 30)[0] == 0.2);
  CHECK_THROWS_AS(scheduled_force(1, f1, 0), InputError);
  CHECK_THROWS_AS(scheduled_force(1, f1, 31), InputError);
  CHECK_THROWS_AS(scheduled_force(3, f1, 1), InputError);
}

TEST_CASE("stiffness is symmetric with a rigid-body null space") {
  const auto m = mesh::generate_synthetic_mesh(3, 2, 4, 1.7, mesh::Box{{0, 0, 0}, {2, 2, 2}});
  const auto k = assemble_linear_stiffness(m, brain_materials());
  const auto dense = k.to_dense();
  CHECK((dense - dense.transpose()).norm() <= 1e-10 * dense.norm());

  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1, 1);
  const Eigen::Vector3d t{u(rng), u(rng), u(rng)}, w{u(rng), u(rng), u(rng)};
  std::vector<double> translation(3 * m.node_count()), rotation(3 * m.node_count());
  for (std::size_t i = 0; i < m.node_count(); ++i) {
    const Eigen::Vector3d p{m.nodes()[i][0], m.nodes()[i][1], m.nodes()[i][2]};
    const Eigen::Vector3d r = w.cross(p);
    for (int d = 0; d < 3; ++d) {
      translation[3 * i + d] = t[d];
      rotation[3 * i + d] = r[d];
    }
  }
  for (const auto* v : {&translation, &rotation}) {
    const auto kv = k.multiply(*v);
    double n = 0;
    for (double x : kv) n = std::max(n, std::abs(x));
    CHECK(n <= 1e-12 * dense.cwiseAbs().maxCoeff() * 10);
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(dense);
  const auto ev = eig.eigenvalues();
  int near_zero = 0;
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    CHECK(ev[i] >= -1e-10 * ev.maxCoeff());
    near_zero += std::abs(ev[i]) <= 1e-10 * ev.maxCoeff();
  }
  CHECK(near_zero == 6);
}

TEST_CASE("missing material for a region is rejected") {
  const auto m = mesh::generate_synthetic_mesh(2, 2, 2, 1.0, mesh::Box{{0, 0, 0}, {1, 1, 1}});
  CHECK_THROWS_AS(assemble_linear_stiffness(m, {{mesh::Region::healthy, Material{}}}), InputError);
}

TEST_CASE("uniform-strain patch test") {
  const Material mat{1000, 5000, 0.3, 2};
  const auto m = mesh::generate_synthetic_mesh(3, 4, 5, 2.0);
  const auto k = assemble_linear_stiffness(m, uniform_table(mat));
  // u = (a z, b z, c z): uniform strain, zero on the zmin face.
  const double a = 1e-3, b = -2e-3, c = 1.5e-3;
  DisplacementField exact(m.node_count());
  std::vector<double> flat(3 * m.node_count());
  for (std::size_t i = 0; i < m.node_count(); ++i) {
    const double z = m.nodes()[i][2];
    exact[i] = {a * z, b * z, c * z};
    for (int d = 0; d < 3; ++d) flat[3 * i + d] = exact[i][d];
  }
  const auto kf = k.multiply(flat);
  std::vector<Vec3> loads(m.node_count());
  double fmax = 0;
  for (std::size_t i = 0; i < m.node_count(); ++i)
    for (int d = 0; d < 3; ++d) {
      loads[i][d] = kf[3 * i + d];
      fmax = std::max(fmax, std::abs(kf[3 * i + d]));
    }
  const auto interior = m.boundary_node_mask();
  for (std::size_t i = 0; i < m.node_count(); ++i)
    if (!interior[i])
      for (int d = 0; d < 3; ++d) CHECK(std::abs(loads[i][d]) <= 1e-10 * fmax);

  const auto fixed = side_nodes(m, mesh::BoxSide::zmin);
  CgOptions opts;
  opts.relative_tolerance = 1e-12;
  const auto u = solve_linear(k, loads, fixed, opts);
  CHECK(field_diff(u, exact) <= 1e-8 * field_norm(exact));

  // Hooke's law: strain (0, 0, c, b, a, 0) in Voigt order with engineering shears.
  Eigen::Matrix<double, 6, 1> eps;
  eps << 0, 0, c, b, a, 0;
  const Eigen::Matrix<double, 6, 1> sigma = elasticity_matrix(mat) * eps;
  for (std::size_t t = 0; t < m.tet_count(); ++t) {
    const auto s = element_stress(m, uniform_table(mat), t, u);
    CHECK((s - sigma).norm() <= 1e-8 * sigma.norm());
  }
}

TEST_CASE("CG matches a dense direct solve") {
  const auto m = mesh::generate_synthetic_mesh(3, 3, 4, 2.5, mesh::Box{{0, 0, 2}, {5, 5, 6}});
  REQUIRE(m.node_count() <= 60);
  const auto k = assemble_linear_stiffness(m, brain_materials());
  const auto fixed = side_nodes(m, mesh::BoxSide::zmin);
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-0.1, 0.1);
  std::vector<Vec3> loads(m.node_count(), Vec3{0, 0, 0});
  std::vector<bool> is_fixed(m.node_count(), false);
  for (auto n : fixed) is_fixed[n] = true;
  for (std::size_t i = 0; i < m.node_count(); ++i)
    if (!is_fixed[i]) loads[i] = {u(rng), u(rng), u(rng)};

  std::vector<int> free_dofs;
  for (std::size_t i = 0; i < m.node_count(); ++i)
    if (!is_fixed[i])
      for (int d = 0; d < 3; ++d) free_dofs.push_back(static_cast<int>(3 * i + d));
  const auto dense = k.to_dense();
  const auto nf = static_cast<Eigen::Index>(free_dofs.size());
  Eigen::MatrixXd kr(nf, nf);
  Eigen::VectorXd fr(nf);
  for (Eigen::Index r = 0; r < nf; ++r) {
    fr[r] = loads[free_dofs[r] / 3][free_dofs[r] % 3];
    for (Eigen::Index c = 0; c < nf; ++c) kr(r, c) = dense(free_dofs[r], free_dofs[c]);
  }
  const Eigen::VectorXd ur = kr.ldlt().solve(fr);
  DisplacementField direct(m.node_count(), Vec3{0, 0, 0});
  for (Eigen::Index r = 0; r < nf; ++r) direct[free_dofs[r] / 3][free_dofs[r] % 3] = ur[r];

  CgReport report;
  CgOptions opts;
  opts.relative_tolerance = 1e-12;
  const auto cg = solve_linear(k, loads, fixed, opts, &report);
  CHECK(field_diff(cg, direct) <= 1e-7 * field_norm(direct));
  CHECK(report.residual_norm <= 1e-12 * report.load_norm * 1.0000001);
  for (auto n : fixed) CHECK(cg[n] == Vec3{0, 0, 0});

  const LinearOracle oracle(k, fixed, opts);
  CHECK(field_diff(oracle.solve(loads), cg) <= 1e-12 * field_norm(cg));
}

TEST_CASE("linear solve: zero load, linearity, monotone schedule, relabeling") {
  const auto m = mesh::generate_synthetic_mesh(3, 3, 3, 3.0);
  const auto k = assemble_linear_stiffness(m, brain_materials());
  const auto fixed = side_nodes(m, mesh::BoxSide::zmin);
  const std::int32_t load_node = static_cast<std::int32_t>(m.node_count() - 1);

  const auto zero = solve_linear(k, std::vector<Vec3>(m.node_count(), Vec3{0, 0, 0}), fixed);
  CHECK(field_norm(zero) == 0.0);

  double prev = 0;
  DisplacementField u1;
  for (int i = 1; i <= 30; ++i) {
    LoadCase lc;
    lc.load_nodes = {load_node};
    lc.fixed_nodes = fixed;
    lc.time_step = i;
    lc.force_per_node = scheduled_force(1, Vec3{0.3, -0.2, 1.35}, i);
    const auto u = solve_linear(k, lc.nodal_loads(m.node_count()), fixed);
    const double n = field_norm(u);
    CHECK(n > prev);
    prev = n;
    if (i == 1) u1 = u;
    if (i == 2) {
      DisplacementField twice = u1;
      for (auto& v : twice)
        for (auto& x : v) x *= 2;
      CHECK(field_diff(u, twice) <= 1e-8 * field_norm(u));
    }
  }

  // Relabel nodes, solve, and map back.
  std::vector<std::int32_t> perm(m.node_count());
  for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = static_cast<std::int32_t>(i);
  std::shuffle(perm.begin(), perm.end(), std::mt19937_64(5));  // new index of old node i
  std::vector<Vec3> pnodes(m.node_count());
  for (std::size_t i = 0; i < perm.size(); ++i) pnodes[perm[i]] = m.nodes()[i];
  auto ptets = m.tets();
  for (auto& t : ptets)
    for (auto& v : t) v = perm[v];
  const auto pm = mesh::TetMesh::create(pnodes, ptets);
  std::vector<Vec3> loads(m.node_count(), Vec3{0, 0, 0});
  loads[load_node] = {0.1, 0.2, 0.3};
  std::vector<Vec3> ploads(m.node_count(), Vec3{0, 0, 0});
  ploads[perm[load_node]] = loads[load_node];
  std::vector<std::int32_t> pfixed;
  for (auto n : fixed) pfixed.push_back(perm[n]);
  CgOptions opts;
  opts.relative_tolerance = 1e-13;
  const auto u = solve_linear(k, loads, fixed, opts);
  const auto pu = solve_linear(assemble_linear_stiffness(pm, brain_materials()), ploads, pfixed, opts);
  DisplacementField back(m.node_count());
  for (std::size_t i = 0; i < perm.size(); ++i) back[i] = pu[perm[i]];
  CHECK(field_diff(u, back) <= 1e-8 * field_norm(u));
}

TEST_CASE("Ogden-form energy values") {
  const double mu = 1234.5;
  CHECK(ogden_sum({2, 1, 1}, mu, 2.0) == doctest::Approx(1.5 * mu).epsilon(1e-15));
  CHECK(ogden_sum({1, 1, 1}, mu, 3.7) == 0.0);
  const Material mat{1000, 3000, 0.49, 2.0};
  CHECK(neo_hookean_energy(Eigen::Matrix3d::Identity(), mat) == 0.0);
  Eigen::Matrix3d inverted = Eigen::Matrix3d::Identity();
  inverted(0, 0) = -1;
  CHECK_THROWS_AS(neo_hookean_energy(inverted, mat), NumericalError);
}

TEST_CASE("isochoric energy reduces to (mu/2)(tr(F^T F) - 3) for alpha = 2 and det F = 1") {
  const Material mat{1000, 3000, 0.49, 2.0};
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(-0.3, 0.3);
  for (int trial = 0; trial < 20; ++trial) {
    Eigen::Matrix3d f = Eigen::Matrix3d::Identity();
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) f(i, j) += u(rng);
    if (f.determinant() <= 0) continue;
    f /= std::cbrt(f.determinant());
    const auto terms = neo_hookean_terms(f, mat);
    const double expected = mat.shear_modulus() / 2 * ((f.transpose() * f).trace() - 3);
    CHECK(std::abs(terms.isochoric - expected) <= 1e-12 * std::max(1.0, std::abs(expected)));
    CHECK(std::abs(terms.volumetric) <= 1e-12 * mat.bulk_modulus());
  }
}

TEST_CASE("energy is zero only at rotations and positive elsewhere") {
  const Material mat{1000, 3000, 0.45, 1.6};
  const Eigen::Matrix3d r = Eigen::AngleAxisd(0.7, Eigen::Vector3d(1, 2, 3).normalized()).toRotationMatrix();
  CHECK(std::abs(neo_hookean_energy(r, mat)) <= 1e-9);
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-0.2, 0.2);
  for (int trial = 0; trial < 20; ++trial) {
    Eigen::Matrix3d f = Eigen::Matrix3d::Identity();
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) f(i, j) += u(rng);
    CHECK(neo_hookean_energy(f, mat) > 0);
  }
}

TEST_CASE("principal stretches are the singular values") {
  Eigen::Matrix3d f;
  f << 1.2, 0.1, 0, 0, 0.9, 0.05, 0.02, 0, 1.1;
  const auto s = principal_stretches(f);
  const Eigen::Vector3d sv = Eigen::JacobiSVD<Eigen::Matrix3d>(f).singularValues();
  for (int i = 0; i < 3; ++i) CHECK(s[i] == doctest::Approx(sv[i]).epsilon(1e-12));
  CHECK(s[0] >= s[1]);
  CHECK(s[1] >= s[2]);
}

TEST_CASE("first Piola-Kirchhoff stress matches finite differences of the energy") {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> u(-0.25, 0.25);
  for (double alpha : {2.0, 1.3, -1.5}) {
    const Material mat{1000, 3000, 0.49, alpha};
    for (int trial = 0; trial < 5; ++trial) {
      Eigen::Matrix3d f = Eigen::Matrix3d::Identity();
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) f(i, j) += u(rng);
      if (f.determinant() < 0.3) continue;
      const auto p = neo_hookean_stress(f, mat);
      const double h = 1e-6;
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
          Eigen::Matrix3d fp = f, fm = f;
          fp(i, j) += h;
          fm(i, j) -= h;
          const double fd = (neo_hookean_energy(fp, mat) - neo_hookean_energy(fm, mat)) / (2 * h);
          CHECK(std::abs(fd - p(i, j)) <= 1e-5 * std::max({std::abs(fd), std::abs(p(i, j)), 1.0}));
        }
    }
  }
}

TEST_CASE("hyperelastic potential gradient matches central differences") {
  const auto m = mesh::generate_synthetic_mesh(3, 2, 2, 2.0, mesh::Box{{0, 0, 0}, {2, 2, 2}});
  const auto fixed = side_nodes(m, mesh::BoxSide::xmin);
  const HyperelasticProblem prob(m, brain_materials(), fixed);
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> dist(-0.05, 0.05);
  std::vector<double> u(prob.dof_count()), f(prob.dof_count());
  for (auto& x : u) x = dist(rng);
  for (auto& x : f) x = dist(rng) * 1e-3;
  const auto g = prob.gradient(u, f);
  const double h = 1e-6;
  for (std::size_t i = 0; i < u.size(); ++i) {
    auto up = u, um = u;
    up[i] += h;
    um[i] -= h;
    const double fd = (prob.energy(up, f) - prob.energy(um, f)) / (2 * h);
    CHECK(std::abs(fd - g[i]) <= 1e-5 * std::max({std::abs(fd), std::abs(g[i]), 1e-6}));
  }
}

TEST_CASE("nonlinear solve: zero force and small-strain agreement with the linear oracle") {
  const auto m = mesh::generate_synthetic_mesh(3, 2, 2, 5.0);
  const auto mats = brain_materials();
  LoadCase lc;
  lc.fixed_nodes = side_nodes(m, mesh::BoxSide::xmin);
  lc.load_nodes = side_nodes(m, mesh::BoxSide::xmax);
  lc.time_step = 1;
  lc.step_count = 1;

  const auto zero = nonlinear_solve(m, mats, lc, 2);
  CHECK(field_norm(zero.displacement) == 0.0);
  CHECK(zero.energy == 0.0);

  lc.force_per_node = {5e-6, 2.5e-6, -1e-6};
  const auto nl = nonlinear_solve(m, mats, lc, 3);
  const auto lin = solve_linear(assemble_linear_stiffness(m, mats), lc.nodal_loads(m.node_count()), lc.fixed_nodes);
  double max_strain = 0;
  for (const auto& v : lin)
    for (double x : v) max_strain = std::max(max_strain, std::abs(x) / 10.0);
  CHECK(max_strain < 1e-3);
  CHECK(field_diff(nl.displacement, lin) <= 0.01 * field_norm(lin));
  CHECK(nl.gradient_norm <= 1e-6 * nl.force_norm * 1.0000001);
  CHECK(nl.residual_history.size() == 3);
  for (auto n : lc.fixed_nodes) CHECK(nl.displacement[n] == Vec3{0, 0, 0});
}

TEST_CASE("nonlinear solve guards") {
  const auto m = mesh::generate_synthetic_mesh(3, 2, 2, 5.0);
  LoadCase lc;
  lc.fixed_nodes = side_nodes(m, mesh::BoxSide::xmin);
  lc.load_nodes = {lc.fixed_nodes[0]};
  CHECK_THROWS_AS(nonlinear_solve(m, brain_materials(), lc, 1), InputError);
  lc.load_nodes = side_nodes(m, mesh::BoxSide::xmax);
  CHECK_THROWS_AS(nonlinear_solve(m, brain_materials(), lc, 0), InputError);
}
