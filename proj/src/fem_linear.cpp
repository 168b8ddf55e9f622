#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>

#include "physgnn/error.hpp"
#include "physgnn/fem.hpp"
#include "physgnn/kernels.hpp"

namespace physgnn::fem {

namespace {

const Material& material_for(const MaterialTable& materials, mesh::Region r) {
  const auto it = materials.find(r);
  if (it == materials.end())
    throw InputError(std::string("no material for region ") + (r == mesh::Region::tumour ? "tumour" : "healthy"));
  return it->second;
}

kernels::CsrView view(const CsrMatrix& a) { return {a.row_ptr, a.col, a.val}; }

}  // namespace

std::vector<double> CsrMatrix::multiply(const std::vector<double>& x) const {
  std::vector<double> y(n, 0.0);
  kernels::spmv(view(*this), x, y);
  return y;
}

double CsrMatrix::at(std::size_t r, std::size_t c) const {
  const auto first = col.begin() + row_ptr[r];
  const auto last = col.begin() + row_ptr[r + 1];
  const auto it = std::lower_bound(first, last, static_cast<std::int32_t>(c));
  return (it != last && *it == static_cast<std::int32_t>(c)) ? val[it - col.begin()] : 0.0;
}

Eigen::MatrixXd CsrMatrix::to_dense() const {
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t r = 0; r < n; ++r)
    for (auto k = row_ptr[r]; k < row_ptr[r + 1]; ++k) d(static_cast<Eigen::Index>(r), col[k]) = val[k];
  return d;
}

CsrMatrix assemble_csr(std::size_t n, std::vector<std::int64_t> rows, std::vector<std::int32_t> cols,
                       std::vector<double> vals) {
  std::vector<std::size_t> order(rows.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return rows[a] != rows[b] ? rows[a] < rows[b] : cols[a] < cols[b];
  });
  CsrMatrix m;
  m.n = n;
  m.row_ptr.assign(n + 1, 0);
  for (std::size_t i = 0; i < order.size();) {
    const auto r = rows[order[i]];
    const auto c = cols[order[i]];
    double s = 0.0;
    std::size_t j = i;
    while (j < order.size() && rows[order[j]] == r && cols[order[j]] == c) s += vals[order[j++]];
    m.col.push_back(c);
    m.val.push_back(s);
    ++m.row_ptr[r + 1];
    i = j;
  }
  for (std::size_t r = 0; r < n; ++r) m.row_ptr[r + 1] += m.row_ptr[r];
  return m;
}

Eigen::Matrix<double, 4, 3> shape_gradients(const mesh::TetMesh& mesh, std::size_t tet) {
  const auto& t = mesh.tets()[tet];
  const auto& p = mesh.nodes();
  Eigen::Matrix3d edges;
  for (int a = 0; a < 3; ++a)
    for (int d = 0; d < 3; ++d) edges(a, d) = p[t[a + 1]][d] - p[t[0]][d];
  // Barycentric coordinates of nodes 1..3 are edges^{-T} (x - p0).
  const Eigen::Matrix3d inv = edges.inverse();
  Eigen::Matrix<double, 4, 3> g;
  for (int a = 0; a < 3; ++a) g.row(a + 1) = inv.col(a).transpose();
  g.row(0) = -(g.row(1) + g.row(2) + g.row(3));
  return g;
}

Eigen::Matrix<double, 6, 6> elasticity_matrix(const Material& m) {
  const double mu = m.shear_modulus() * kPascalToNPerMm2;
  const double lambda = m.lame_lambda() * kPascalToNPerMm2;
  Eigen::Matrix<double, 6, 6> d = Eigen::Matrix<double, 6, 6>::Zero();
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) d(i, j) = lambda;
    d(i, i) = lambda + 2.0 * mu;
    d(i + 3, i + 3) = mu;
  }
  return d;
}

Eigen::Matrix<double, 6, 12> strain_displacement(const Eigen::Matrix<double, 4, 3>& g) {
  Eigen::Matrix<double, 6, 12> b = Eigen::Matrix<double, 6, 12>::Zero();
  for (int a = 0; a < 4; ++a) {
    const double gx = g(a, 0), gy = g(a, 1), gz = g(a, 2);
    const int c = 3 * a;
    b(0, c) = gx;
    b(1, c + 1) = gy;
    b(2, c + 2) = gz;
    b(3, c + 1) = gz;
    b(3, c + 2) = gy;
    b(4, c) = gz;
    b(4, c + 2) = gx;
    b(5, c) = gy;
    b(5, c + 1) = gx;
  }
  return b;
}

CsrMatrix assemble_linear_stiffness(const mesh::TetMesh& mesh, const MaterialTable& materials) {
  const std::size_t n = 3 * mesh.node_count();
  std::vector<std::int64_t> rows;
  std::vector<std::int32_t> cols;
  std::vector<double> vals;
  rows.reserve(mesh.tet_count() * 144);
  cols.reserve(mesh.tet_count() * 144);
  vals.reserve(mesh.tet_count() * 144);
  for (std::size_t t = 0; t < mesh.tet_count(); ++t) {
    const auto& mat = material_for(materials, mesh.regions()[t]);
    const auto b = strain_displacement(shape_gradients(mesh, t));
    const Eigen::Matrix<double, 12, 12> ke = mesh.volume(t) * b.transpose() * elasticity_matrix(mat) * b;
    const auto& tet = mesh.tets()[t];
    for (int a = 0; a < 4; ++a)
      for (int i = 0; i < 3; ++i)
        for (int c = 0; c < 4; ++c)
          for (int j = 0; j < 3; ++j) {
            rows.push_back(3 * tet[a] + i);
            cols.push_back(3 * tet[c] + j);
            // Average with the transpose entry so K is symmetric bit-for-bit.
            vals.push_back(0.5 * (ke(3 * a + i, 3 * c + j) + ke(3 * c + j, 3 * a + i)));
          }
  }
  return assemble_csr(n, std::move(rows), std::move(cols), std::move(vals));
}

Eigen::Matrix<double, 6, 1> element_stress(const mesh::TetMesh& mesh, const MaterialTable& materials, std::size_t t,
                                           const DisplacementField& u) {
  const auto b = strain_displacement(shape_gradients(mesh, t));
  Eigen::Matrix<double, 12, 1> ue;
  for (int a = 0; a < 4; ++a)
    for (int d = 0; d < 3; ++d) ue(3 * a + d) = u[mesh.tets()[t][a]][d];
  return elasticity_matrix(material_for(materials, mesh.regions()[t])) * (b * ue);
}

std::vector<double> conjugate_gradient(const CsrMatrix& a, const std::vector<double>& b,
                                       const std::vector<double>& inv_diag, const CgOptions& options,
                                       CgReport* report) {
  const std::size_t n = a.n;
  std::vector<double> x(n, 0.0), r = b, z(n), p(n), ap(n);
  const double b_norm = std::sqrt(kernels::dot(b, b));
  CgReport rep;
  rep.load_norm = b_norm;
  if (b_norm == 0.0) {
    if (report) *report = rep;
    return x;
  }
  const double target = options.relative_tolerance * b_norm;
  const std::size_t cap = options.max_iterations ? options.max_iterations : 20 * n;
  for (std::size_t i = 0; i < n; ++i) z[i] = inv_diag[i] * r[i];
  p = z;
  double rz = kernels::dot(r, z);
  double r_norm = b_norm;
  std::size_t it = 0;
  for (; it < cap && r_norm > target; ++it) {
    kernels::spmv(view(a), p, ap);
    const double pap = kernels::dot(p, ap);
    if (!(pap > 0.0)) throw NumericalError("CG: matrix is not positive definite (p'Ap = " + std::to_string(pap) + ")");
    const double alpha = rz / pap;
    for (std::size_t k = 0; k < n; ++k) {
      x[k] += alpha * p[k];
      r[k] -= alpha * ap[k];
    }
    r_norm = std::sqrt(kernels::dot(r, r));
    for (std::size_t k = 0; k < n; ++k) z[k] = inv_diag[k] * r[k];
    const double rz_next = kernels::dot(r, z);
    const double beta = rz_next / rz;
    rz = rz_next;
    for (std::size_t k = 0; k < n; ++k) p[k] = z[k] + beta * p[k];
  }
  // The recurrence residual drifts; confirm against the true residual.
  kernels::spmv(view(a), x, ap);
  double true_r = 0.0;
  for (std::size_t k = 0; k < n; ++k) true_r += (b[k] - ap[k]) * (b[k] - ap[k]);
  rep.iterations = it;
  rep.residual_norm = std::sqrt(true_r);
  if (report) *report = rep;
  if (!(rep.residual_norm <= target))
    throw NumericalError("CG did not converge after " + std::to_string(it) + " iterations: residual " +
                         std::to_string(rep.residual_norm) + " > " + std::to_string(target));
  return x;
}

LinearOracle::LinearOracle(CsrMatrix stiffness, const std::vector<std::int32_t>& fixed, CgOptions options)
    : full_(std::move(stiffness)), options_(options) {
  std::vector<std::int64_t> map(full_.n, 0);
  for (auto node : fixed) {
    if (node < 0 || static_cast<std::size_t>(3 * node + 2) >= full_.n)
      throw InputError("fixed node " + std::to_string(node) + " outside stiffness matrix");
    for (int d = 0; d < 3; ++d) map[3 * node + d] = -1;
  }
  for (std::size_t i = 0; i < full_.n; ++i)
    if (map[i] == 0) {
      map[i] = static_cast<std::int64_t>(free_dofs_.size());
      free_dofs_.push_back(static_cast<std::int64_t>(i));
    }
  reduced_.n = free_dofs_.size();
  reduced_.row_ptr.assign(reduced_.n + 1, 0);
  for (std::size_t fr = 0; fr < free_dofs_.size(); ++fr) {
    const auto r = free_dofs_[fr];
    for (auto k = full_.row_ptr[r]; k < full_.row_ptr[r + 1]; ++k) {
      const auto c = map[full_.col[k]];
      if (c < 0) continue;
      reduced_.col.push_back(static_cast<std::int32_t>(c));
      reduced_.val.push_back(full_.val[k]);
    }
    reduced_.row_ptr[fr + 1] = static_cast<std::int64_t>(reduced_.col.size());
  }
  inv_diag_.resize(reduced_.n);
  for (std::size_t i = 0; i < reduced_.n; ++i) {
    const double d = reduced_.at(i, i);
    if (!(d > 0.0)) throw NumericalError("stiffness has non-positive diagonal at free DOF " + std::to_string(i));
    inv_diag_[i] = 1.0 / d;
  }
}

DisplacementField LinearOracle::solve(const std::vector<Vec3>& loads, CgReport* report) const {
  const std::size_t nodes = full_.n / 3;
  if (loads.size() != nodes)
    throw InputError("load vector has " + std::to_string(loads.size()) + " nodes, stiffness has " +
                     std::to_string(nodes));
  std::vector<double> b(reduced_.n);
  for (std::size_t i = 0; i < reduced_.n; ++i) b[i] = loads[free_dofs_[i] / 3][free_dofs_[i] % 3];
  const auto x = conjugate_gradient(reduced_, b, inv_diag_, options_, report);
  DisplacementField u(nodes, Vec3{0, 0, 0});
  for (std::size_t i = 0; i < reduced_.n; ++i) u[free_dofs_[i] / 3][free_dofs_[i] % 3] = x[i];
  return u;
}

DisplacementField solve_linear(const CsrMatrix& stiffness, const std::vector<Vec3>& loads,
                               const std::vector<std::int32_t>& fixed, const CgOptions& options, CgReport* report) {
  return LinearOracle(stiffness, fixed, options).solve(loads, report);
}

}  // namespace physgnn::fem
