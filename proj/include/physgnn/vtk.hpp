#pragma once

#include <string>
#include <vector>

#include "physgnn/mesh.hpp"

namespace physgnn::vtk {

// Legacy ASCII unstructured grid: POINTS, CELLS (tetra, type 10) and one
// POINT_DATA VECTORS array. Throws InputError when the field length differs
// from the node count.
std::string format_unstructured_grid(const mesh::TetMesh& mesh, const std::vector<mesh::Vec3>& field,
                                     const std::string& field_name = "displacement");
void write_unstructured_grid(const std::string& path, const mesh::TetMesh& mesh,
                             const std::vector<mesh::Vec3>& field, const std::string& field_name = "displacement");

}  // namespace physgnn::vtk
