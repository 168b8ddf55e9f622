#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>

#include "physgnn/error.hpp"
#include "physgnn/fem.hpp"
#include "physgnn/kernels.hpp"

namespace physgnn::fem {

namespace {

struct Spectral {
  Eigen::Vector3d stretch;  // sqrt of eigenvalues of C = F^T F
  Eigen::Matrix3d vectors;
};

Spectral right_cauchy_green_spectrum(const Eigen::Matrix3d& F) {
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(F.transpose() * F);
  Spectral s;
  s.vectors = eig.eigenvectors();
  for (int k = 0; k < 3; ++k) s.stretch(k) = std::sqrt(std::max(eig.eigenvalues()(k), 0.0));
  return s;
}

double determinant_checked(const Eigen::Matrix3d& F) {
  const double j = F.determinant();
  if (!(j > 0.0)) throw NumericalError("inverted element: det F = " + std::to_string(j));
  return j;
}

}  // namespace

double ogden_sum(const Vec3& stretches, double mu, double alpha) {
  double s = 0.0;
  for (double l : stretches) s += std::pow(l, alpha);
  return 2.0 * mu / (alpha * alpha) * (s - 3.0);
}

Vec3 principal_stretches(const Eigen::Matrix3d& F) {
  const auto sv = F.jacobiSvd().singularValues();
  return {sv(0), sv(1), sv(2)};
}

EnergyTerms neo_hookean_terms(const Eigen::Matrix3d& F, const Material& mat) {
  const double j = determinant_checked(F);
  const auto spec = right_cauchy_green_spectrum(F);
  const double scale = std::pow(j, -1.0 / 3.0);
  const Vec3 deviatoric{scale * spec.stretch(0), scale * spec.stretch(1), scale * spec.stretch(2)};
  EnergyTerms e;
  e.isochoric = ogden_sum(deviatoric, mat.shear_modulus(), mat.alpha);
  e.volumetric = 0.5 * mat.bulk_modulus() * (j - 1.0) * (j - 1.0);
  return e;
}

double neo_hookean_energy(const Eigen::Matrix3d& F, const Material& mat) { return neo_hookean_terms(F, mat).total(); }

Eigen::Matrix3d neo_hookean_stress(const Eigen::Matrix3d& F, const Material& mat) {
  const double j = determinant_checked(F);
  const double mu = mat.shear_modulus();
  const double kappa = mat.bulk_modulus();
  const double a = mat.alpha;
  const auto spec = right_cauchy_green_spectrum(F);
  const Eigen::Matrix3d f_inv_t = F.inverse().transpose();

  // S = sum l_k^a; dS/dF = F V diag(a l_k^{a-2}) V^T.
  double s = 0.0;
  Eigen::Vector3d d;
  for (int k = 0; k < 3; ++k) {
    const double l = spec.stretch(k);
    s += std::pow(l, a);
    d(k) = a * std::pow(l, a - 2.0);
  }
  const Eigen::Matrix3d ds = F * spec.vectors * d.asDiagonal() * spec.vectors.transpose();
  const double jpow = std::pow(j, -a / 3.0);
  const Eigen::Matrix3d iso = (2.0 * mu / (a * a)) * jpow * (ds - (a / 3.0) * s * f_inv_t);
  const Eigen::Matrix3d vol = kappa * (j - 1.0) * j * f_inv_t;
  return iso + vol;
}

HyperelasticProblem::HyperelasticProblem(const mesh::TetMesh& mesh, const MaterialTable& materials,
                                         const std::vector<std::int32_t>& fixed)
    : mesh_(mesh) {
  tet_material_.reserve(mesh.tet_count());
  grads_.reserve(mesh.tet_count());
  volumes_.reserve(mesh.tet_count());
  for (std::size_t t = 0; t < mesh.tet_count(); ++t) {
    const auto it = materials.find(mesh.regions()[t]);
    if (it == materials.end()) throw InputError("no material for region of tet " + std::to_string(t));
    it->second.validate();
    tet_material_.push_back(it->second);
    grads_.push_back(shape_gradients(mesh, t));
    volumes_.push_back(mesh.volume(t));
  }
  dof_to_free_.assign(3 * mesh.node_count(), 0);
  for (auto n : fixed) {
    if (n < 0 || static_cast<std::size_t>(n) >= mesh.node_count())
      throw InputError("fixed node " + std::to_string(n) + " outside mesh");
    for (int d = 0; d < 3; ++d) dof_to_free_[3 * n + d] = -1;
  }
  for (std::size_t i = 0; i < dof_to_free_.size(); ++i)
    if (dof_to_free_[i] == 0) {
      dof_to_free_[i] = static_cast<std::int64_t>(free_dofs_.size());
      free_dofs_.push_back(static_cast<std::int64_t>(i));
    }
}

std::vector<double> HyperelasticProblem::to_full(const std::vector<double>& u) const {
  std::vector<double> full(dof_to_free_.size(), 0.0);
  for (std::size_t i = 0; i < free_dofs_.size(); ++i) full[free_dofs_[i]] = u[i];
  return full;
}

Eigen::Matrix3d HyperelasticProblem::deformation_gradient(std::size_t t, const std::vector<double>& full_u) const {
  Eigen::Matrix3d F = Eigen::Matrix3d::Identity();
  const auto& tet = mesh_.tets()[t];
  for (int a = 0; a < 4; ++a)
    for (int i = 0; i < 3; ++i) F.row(i) += full_u[3 * tet[a] + i] * grads_[t].row(a);
  return F;
}

Eigen::Matrix<double, 12, 1> HyperelasticProblem::element_gradient(std::size_t t, const Eigen::Matrix3d& F) const {
  const Eigen::Matrix3d p = neo_hookean_stress(F, tet_material_[t]) * (kPascalToNPerMm2 * volumes_[t]);
  Eigen::Matrix<double, 12, 1> g;
  for (int a = 0; a < 4; ++a) g.segment<3>(3 * a) = p * grads_[t].row(a).transpose();
  return g;
}

double HyperelasticProblem::energy(const std::vector<double>& u, const std::vector<double>& f) const {
  const auto full = to_full(u);
  double e = 0.0;
  for (std::size_t t = 0; t < mesh_.tet_count(); ++t) {
    const Eigen::Matrix3d F = deformation_gradient(t, full);
    if (!(F.determinant() > 0.0)) return std::numeric_limits<double>::infinity();
    e += kPascalToNPerMm2 * volumes_[t] * neo_hookean_energy(F, tet_material_[t]);
  }
  for (std::size_t i = 0; i < u.size(); ++i) e -= f[i] * u[i];
  return e;
}

std::vector<double> HyperelasticProblem::gradient(const std::vector<double>& u, const std::vector<double>& f) const {
  const auto full = to_full(u);
  std::vector<double> g_full(full.size(), 0.0);
  for (std::size_t t = 0; t < mesh_.tet_count(); ++t) {
    const auto ge = element_gradient(t, deformation_gradient(t, full));
    const auto& tet = mesh_.tets()[t];
    for (int a = 0; a < 4; ++a)
      for (int i = 0; i < 3; ++i) g_full[3 * tet[a] + i] += ge(3 * a + i);
  }
  std::vector<double> g(u.size());
  for (std::size_t i = 0; i < u.size(); ++i) g[i] = g_full[free_dofs_[i]] - f[i];
  return g;
}

CsrMatrix HyperelasticProblem::hessian(const std::vector<double>& u) const {
  // Element Hessians by central differences of the analytic element gradient;
  // the perturbation is sized so |dF| ~ 1e-6.
  const auto full = to_full(u);
  std::vector<std::int64_t> rows;
  std::vector<std::int32_t> cols;
  std::vector<double> vals;
  for (std::size_t t = 0; t < mesh_.tet_count(); ++t) {
    const Eigen::Matrix3d F = deformation_gradient(t, full);
    Eigen::Matrix<double, 12, 12> h;
    for (int a = 0; a < 4; ++a) {
      const double step = 1e-6 / grads_[t].row(a).norm();
      for (int i = 0; i < 3; ++i) {
        Eigen::Matrix3d dF = Eigen::Matrix3d::Zero();
        dF.row(i) = step * grads_[t].row(a);
        h.col(3 * a + i) = (element_gradient(t, F + dF) - element_gradient(t, F - dF)) / (2.0 * step);
      }
    }
    h = 0.5 * (h + h.transpose()).eval();
    const auto& tet = mesh_.tets()[t];
    for (int a = 0; a < 4; ++a)
      for (int i = 0; i < 3; ++i) {
        const auto r = dof_to_free_[3 * tet[a] + i];
        if (r < 0) continue;
        for (int c = 0; c < 4; ++c)
          for (int j = 0; j < 3; ++j) {
            const auto cc = dof_to_free_[3 * tet[c] + j];
            if (cc < 0) continue;
            rows.push_back(r);
            cols.push_back(static_cast<std::int32_t>(cc));
            vals.push_back(h(3 * a + i, 3 * c + j));
          }
      }
  }
  return assemble_csr(free_dofs_.size(), std::move(rows), std::move(cols), std::move(vals));
}

std::vector<double> HyperelasticProblem::restrict_loads(const std::vector<Vec3>& loads) const {
  std::vector<double> f(free_dofs_.size());
  for (std::size_t i = 0; i < free_dofs_.size(); ++i) f[i] = loads[free_dofs_[i] / 3][free_dofs_[i] % 3];
  return f;
}

DisplacementField HyperelasticProblem::expand(const std::vector<double>& u) const {
  DisplacementField out(mesh_.node_count(), Vec3{0, 0, 0});
  for (std::size_t i = 0; i < free_dofs_.size(); ++i) out[free_dofs_[i] / 3][free_dofs_[i] % 3] = u[i];
  return out;
}

namespace {

double norm2(const std::vector<double>& v) { return std::sqrt(kernels::dot(v, v)); }

std::string history_string(const std::vector<double>& h) {
  std::string s;
  for (double v : h) s += (s.empty() ? "" : ", ") + std::to_string(v);
  return "[" + s + "]";
}

}  // namespace

NonlinearResult nonlinear_solve(const mesh::TetMesh& mesh, const MaterialTable& materials, const LoadCase& load,
                                int steps, const NonlinearOptions& options) {
  if (steps < 1) throw InputError("nonlinear solve needs at least one load increment");
  if (mesh.node_count() > options.max_nodes)
    throw InputError("nonlinear oracle limited to " + std::to_string(options.max_nodes) + " nodes (mesh has " +
                     std::to_string(mesh.node_count()) + ")");
  load.validate(mesh.node_count());

  const HyperelasticProblem problem(mesh, materials, load.fixed_nodes);
  const auto f_total = problem.restrict_loads(load.nodal_loads(mesh.node_count()));
  const std::size_t n = problem.dof_count();

  NonlinearResult result;
  result.force_norm = norm2(f_total);
  std::vector<double> u(n, 0.0);
  if (result.force_norm == 0.0) {
    result.displacement = problem.expand(u);
    return result;
  }

  std::vector<double> f(n);
  for (int s = 1; s <= steps; ++s) {
    const double frac = static_cast<double>(s) / steps;
    for (std::size_t i = 0; i < n; ++i) f[i] = frac * f_total[i];
    const double tol = options.gradient_tolerance * norm2(f);
    std::vector<double> history;

    auto g = problem.gradient(u, f);
    double g_norm = norm2(g);
    double e = problem.energy(u, f);
    int it = 0;
    while (g_norm > tol) {
      if (it++ >= options.max_newton_iterations)
        throw NumericalError("Newton stalled in increment " + std::to_string(s) + "; residual history " +
                             history_string(history));
      const auto h = problem.hessian(u);
      std::vector<double> inv_diag(n);
      for (std::size_t i = 0; i < n; ++i) {
        const double d = h.at(i, i);
        inv_diag[i] = d > 0 ? 1.0 / d : 1.0;
      }
      std::vector<double> rhs(n);
      for (std::size_t i = 0; i < n; ++i) rhs[i] = -g[i];
      std::vector<double> dir;
      try {
        CgOptions cg;
        cg.relative_tolerance = 1e-12;
        dir = conjugate_gradient(h, rhs, inv_diag, cg);
      } catch (const NumericalError&) {
        dir = rhs;  // indefinite or stalled: fall back to steepest descent
      }
      double slope = kernels::dot(g, dir);
      if (!(slope < 0.0)) {
        dir = rhs;
        slope = -g_norm * g_norm;
      }

      double step = 1.0;
      std::vector<double> trial(n);
      bool accepted = false;
      bool inverted = false;
      double e_trial = 0.0;
      for (int b = 0; b <= options.max_backtracks; ++b) {
        for (std::size_t i = 0; i < n; ++i) trial[i] = u[i] + step * dir[i];
        e_trial = problem.energy(trial, f);
        inverted = !std::isfinite(e_trial);
        if (!inverted && e_trial <= e + options.armijo * step * slope) {
          accepted = true;
          break;
        }
        step *= options.backtrack;
      }
      if (!accepted) {
        // Energy differences can drop below round-off right at the
        // minimiser; accept a full step that still reduces the gradient.
        for (std::size_t i = 0; i < n; ++i) trial[i] = u[i] + dir[i];
        const double e_full = problem.energy(trial, f);
        if (std::isfinite(e_full)) {
          const auto g_full = problem.gradient(trial, f);
          if (norm2(g_full) < g_norm) {
            u = trial;
            g = g_full;
            g_norm = norm2(g);
            e = e_full;
            history.push_back(g_norm);
            continue;
          }
        }
        if (inverted)
          throw NumericalError("element inversion during increment " + std::to_string(s));
        throw NumericalError("line search failed in increment " + std::to_string(s) + "; residual history " +
                             history_string(history));
      }
      u = trial;
      e = e_trial;
      g = problem.gradient(u, f);
      g_norm = norm2(g);
      history.push_back(g_norm);
    }
    result.residual_history.push_back(g_norm);
    result.gradient_norm = g_norm;
    result.energy = e;
  }
  result.displacement = problem.expand(u);
  return result;
}

}  // namespace physgnn::fem
