#pragma once

#include <Eigen/Core>
#include <array>
#include <cstdint>
#include <map>
#include <vector>

#include "physgnn/mesh.hpp"

namespace physgnn::fem {

using mesh::Vec3;

// Moduli are given in Pa, coordinates in mm and forces in N. Stresses are
// converted to N/mm^2 with this factor wherever they meet geometry.
inline constexpr double kPascalToNPerMm2 = 1e-6;

double derive_shear_modulus(double youngs_modulus, double poisson_ratio);
double derive_bulk_modulus(double youngs_modulus, double poisson_ratio);

struct Material {
  double density = 1000.0;        // kg/m^3
  double youngs_modulus = 3000.0;  // Pa
  double poisson_ratio = 0.49;
  double alpha = 2.0;  // Ogden exponent; 2 recovers classical Neo-Hookean

  double shear_modulus() const { return derive_shear_modulus(youngs_modulus, poisson_ratio); }
  double bulk_modulus() const { return derive_bulk_modulus(youngs_modulus, poisson_ratio); }
  double lame_lambda() const;
  // Throws InputError unless E > 0, 0 < nu < 0.5 and alpha != 0.
  void validate() const;
};

using MaterialTable = std::map<mesh::Region, Material>;

// Healthy brain (E = 3000 Pa) and tumour (E = 7500 Pa), both rho = 1000,
// nu = 0.49.
MaterialTable brain_materials();

using DisplacementField = std::vector<Vec3>;

struct LoadCase {
  std::vector<std::int32_t> load_nodes;
  Vec3 force_per_node{0, 0, 0};  // N, same vector on every load node
  int time_step = 1;             // 1..step_count
  int step_count = 30;
  std::vector<std::int32_t> fixed_nodes;

  // Provenance.
  int dataset_id = 1;
  int selection_id = 0;
  int direction_id = 0;

  // Throws InputError on overlapping sets or an out-of-range step.
  void validate(std::size_t node_count) const;
  std::vector<Vec3> nodal_loads(std::size_t node_count) const;
};

// Per-node force of the incremental schedule. Dataset 1 applies
// F_total / n_steps * i to its single load node; dataset 2 spreads
// F_total / (n_steps * patch_size) * i over each node of the patch.
Vec3 scheduled_force(int dataset_id, const Vec3& total_force, int time_step, int n_steps = 30,
                     int patch_size = 100);

// Symmetric sparse matrix in CSR form with sorted column indices.
struct CsrMatrix {
  std::size_t n = 0;
  std::vector<std::int64_t> row_ptr;
  std::vector<std::int32_t> col;
  std::vector<double> val;

  std::vector<double> multiply(const std::vector<double>& x) const;
  double at(std::size_t r, std::size_t c) const;
  Eigen::MatrixXd to_dense() const;
};

// Assembles (row, col, value) triplets into CSR, summing duplicates.
CsrMatrix assemble_csr(std::size_t n, std::vector<std::int64_t> rows, std::vector<std::int32_t> cols,
                       std::vector<double> vals);

// Shape-function gradients of a linear tet (rows = nodes, cols = x, y, z).
Eigen::Matrix<double, 4, 3> shape_gradients(const mesh::TetMesh& mesh, std::size_t tet);

// Isotropic elasticity matrix in Voigt order (xx, yy, zz, yz, xz, xy) with
// engineering shear strains, in N/mm^2.
Eigen::Matrix<double, 6, 6> elasticity_matrix(const Material& m);

// Strain-displacement matrix (6 x 12) for a tet.
Eigen::Matrix<double, 6, 12> strain_displacement(const Eigen::Matrix<double, 4, 3>& grads);

// Linear constant-strain tetrahedral stiffness, 3N x 3N, N/mm.
CsrMatrix assemble_linear_stiffness(const mesh::TetMesh& mesh, const MaterialTable& materials);

// Voigt stress (N/mm^2) of tet `t` under displacement `u`.
Eigen::Matrix<double, 6, 1> element_stress(const mesh::TetMesh& mesh, const MaterialTable& materials,
                                           std::size_t t, const DisplacementField& u);

struct CgOptions {
  double relative_tolerance = 1e-8;
  // 0 means 20 * system size.
  std::size_t max_iterations = 0;
};

struct CgReport {
  std::size_t iterations = 0;
  double residual_norm = 0.0;
  double load_norm = 0.0;
};

// Solves K u = f with u = 0 on `fixed` by Jacobi-preconditioned conjugate
// gradients on the free degrees of freedom.
DisplacementField solve_linear(const CsrMatrix& stiffness, const std::vector<Vec3>& loads,
                               const std::vector<std::int32_t>& fixed, const CgOptions& options = {},
                               CgReport* report = nullptr);

// Reduced free-DOF system for repeated solves with one stiffness and one
// fixed set; solve() matches solve_linear().
class LinearOracle {
 public:
  LinearOracle(CsrMatrix stiffness, const std::vector<std::int32_t>& fixed, CgOptions options = {});
  DisplacementField solve(const std::vector<Vec3>& loads, CgReport* report = nullptr) const;
  std::size_t node_count() const { return full_.n / 3; }

 private:
  CsrMatrix full_;
  CsrMatrix reduced_;
  std::vector<std::int64_t> free_dofs_;
  std::vector<double> inv_diag_;
  CgOptions options_;
};

// Preconditioned CG on an SPD system; throws NumericalError on non-convergence.
std::vector<double> conjugate_gradient(const CsrMatrix& a, const std::vector<double>& b,
                                       const std::vector<double>& inv_diag, const CgOptions& options,
                                       CgReport* report = nullptr);

// ---- Hyperelasticity ----

// The Ogden-form sum (2 mu / alpha^2)(l1^a + l2^a + l3^a - 3) evaluated on
// the given stretches.
double ogden_sum(const Vec3& stretches, double mu, double alpha);

struct EnergyTerms {
  double isochoric = 0.0;   // Ogden sum over deviatoric stretches J^{-1/3} l_i
  double volumetric = 0.0;  // (kappa / 2)(J - 1)^2
  double total() const { return isochoric + volumetric; }
};

// Strain-energy density in Pa. Throws NumericalError when det F <= 0.
EnergyTerms neo_hookean_terms(const Eigen::Matrix3d& F, const Material& mat);
double neo_hookean_energy(const Eigen::Matrix3d& F, const Material& mat);
// First Piola-Kirchhoff stress dW/dF in Pa.
Eigen::Matrix3d neo_hookean_stress(const Eigen::Matrix3d& F, const Material& mat);

// Principal stretches (singular values of F), descending.
Vec3 principal_stretches(const Eigen::Matrix3d& F);

struct NonlinearOptions {
  int max_newton_iterations = 50;
  double gradient_tolerance = 1e-6;  // relative to the increment's external force norm
  double armijo = 1e-4;
  double backtrack = 0.5;
  int max_backtracks = 30;
  std::size_t max_nodes = 500;
};

struct NonlinearResult {
  DisplacementField displacement;
  double energy = 0.0;  // total potential (N mm) at the final state
  double gradient_norm = 0.0;
  double force_norm = 0.0;
  std::vector<double> residual_history;  // final gradient norm per increment
};

// Total potential (elastic energy minus external work) over the free DOFs.
// Exposed for tests; returns +inf when any element inverts.
class HyperelasticProblem {
 public:
  HyperelasticProblem(const mesh::TetMesh& mesh, const MaterialTable& materials,
                      const std::vector<std::int32_t>& fixed);

  std::size_t dof_count() const { return free_dofs_.size(); }
  // u: free DOF vector; f: external force on free DOFs.
  double energy(const std::vector<double>& u, const std::vector<double>& f) const;
  std::vector<double> gradient(const std::vector<double>& u, const std::vector<double>& f) const;
  CsrMatrix hessian(const std::vector<double>& u) const;

  std::vector<double> restrict_loads(const std::vector<Vec3>& loads) const;
  DisplacementField expand(const std::vector<double>& u) const;

 private:
  Eigen::Matrix3d deformation_gradient(std::size_t t, const std::vector<double>& full_u) const;
  std::vector<double> to_full(const std::vector<double>& u) const;
  Eigen::Matrix<double, 12, 1> element_gradient(std::size_t t, const Eigen::Matrix3d& F) const;

  const mesh::TetMesh& mesh_;
  std::vector<Material> tet_material_;
  std::vector<Eigen::Matrix<double, 4, 3>> grads_;
  std::vector<double> volumes_;
  std::vector<std::int64_t> free_dofs_;
  std::vector<std::int64_t> dof_to_free_;  // -1 for fixed
};

NonlinearResult nonlinear_solve(const mesh::TetMesh& mesh, const MaterialTable& materials, const LoadCase& load,
                                int steps, const NonlinearOptions& options = {});

}  // namespace physgnn::fem
