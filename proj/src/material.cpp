#include <cmath>

#include "physgnn/error.hpp"
#include "physgnn/fem.hpp"

namespace physgnn::fem {

namespace {
void check_moduli(double e, double nu) {
  if (!(e > 0.0)) throw InputError("Young's modulus must be positive");
  if (!(nu < 0.5)) throw InputError("Poisson ratio " + std::to_string(nu) + " reaches the incompressible limit 0.5");
  if (!(nu > -1.0)) throw InputError("Poisson ratio must exceed -1");
}
}  // namespace

double derive_shear_modulus(double youngs_modulus, double poisson_ratio) {
  check_moduli(youngs_modulus, poisson_ratio);
  return youngs_modulus / (2.0 * (1.0 + poisson_ratio));
}

double derive_bulk_modulus(double youngs_modulus, double poisson_ratio) {
  check_moduli(youngs_modulus, poisson_ratio);
  return youngs_modulus / (3.0 * (1.0 - 2.0 * poisson_ratio));
}

double Material::lame_lambda() const {
  check_moduli(youngs_modulus, poisson_ratio);
  return youngs_modulus * poisson_ratio / ((1.0 + poisson_ratio) * (1.0 - 2.0 * poisson_ratio));
}

void Material::validate() const {
  check_moduli(youngs_modulus, poisson_ratio);
  if (!(poisson_ratio > 0.0)) throw InputError("Poisson ratio must be in (0, 0.5)");
  if (!(density > 0.0)) throw InputError("density must be positive");
  if (alpha == 0.0 || !std::isfinite(alpha)) throw InputError("Ogden exponent alpha must be finite and nonzero");
}

MaterialTable brain_materials() {
  return {{mesh::Region::healthy, Material{1000.0, 3000.0, 0.49, 2.0}},
          {mesh::Region::tumour, Material{1000.0, 7500.0, 0.49, 2.0}}};
}

void LoadCase::validate(std::size_t node_count) const {
  if (step_count < 1 || time_step < 1 || time_step > step_count)
    throw InputError("time step " + std::to_string(time_step) + " outside 1.." + std::to_string(step_count));
  std::vector<bool> fixed(node_count, false);
  for (auto n : fixed_nodes) {
    if (n < 0 || static_cast<std::size_t>(n) >= node_count)
      throw InputError("fixed node " + std::to_string(n) + " outside mesh");
    fixed[n] = true;
  }
  for (auto n : load_nodes) {
    if (n < 0 || static_cast<std::size_t>(n) >= node_count)
      throw InputError("load node " + std::to_string(n) + " outside mesh");
    if (fixed[n]) throw InputError("load node " + std::to_string(n) + " is also fixed");
  }
}

std::vector<Vec3> LoadCase::nodal_loads(std::size_t node_count) const {
  std::vector<Vec3> f(node_count, Vec3{0, 0, 0});
  for (auto n : load_nodes)
    for (int d = 0; d < 3; ++d) f[n][d] += force_per_node[d];
  return f;
}

Vec3 scheduled_force(int dataset_id, const Vec3& total_force, int time_step, int n_steps, int patch_size) {
  if (n_steps < 1 || time_step < 1 || time_step > n_steps)
    throw InputError("time step " + std::to_string(time_step) + " outside 1.." + std::to_string(n_steps));
  double divisor = 0.0;
  switch (dataset_id) {
    case 1:
      divisor = n_steps;
      break;
    case 2:
      if (patch_size < 1) throw InputError("patch size must be positive");
      divisor = static_cast<double>(n_steps) * patch_size;
      break;
    default:
      throw InputError("dataset id must be 1 or 2");
  }
  Vec3 f;
  for (int d = 0; d < 3; ++d) f[d] = total_force[d] / divisor * time_step;
  return f;
}

}  // namespace physgnn::fem
