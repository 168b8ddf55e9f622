#include "physgnn/vtk.hpp"

#include <fstream>
#include <sstream>

#include "physgnn/error.hpp"

namespace physgnn::vtk {

std::string format_unstructured_grid(const mesh::TetMesh& mesh, const std::vector<mesh::Vec3>& field,
                                     const std::string& field_name) {
  if (field.size() != mesh.node_count())
    throw InputError("field has " + std::to_string(field.size()) + " vectors, mesh has " +
                     std::to_string(mesh.node_count()) + " nodes");
  std::ostringstream out;
  out.precision(17);
  out << "# vtk DataFile Version 3.0\nphysgnn " << field_name << "\nASCII\nDATASET UNSTRUCTURED_GRID\n";
  out << "POINTS " << mesh.node_count() << " double\n";
  for (const auto& p : mesh.nodes()) out << p[0] << ' ' << p[1] << ' ' << p[2] << '\n';
  out << "CELLS " << mesh.tet_count() << ' ' << 5 * mesh.tet_count() << '\n';
  for (const auto& t : mesh.tets()) out << "4 " << t[0] << ' ' << t[1] << ' ' << t[2] << ' ' << t[3] << '\n';
  out << "CELL_TYPES " << mesh.tet_count() << '\n';
  for (std::size_t i = 0; i < mesh.tet_count(); ++i) out << "10\n";
  out << "POINT_DATA " << mesh.node_count() << '\n';
  out << "VECTORS " << field_name << " double\n";
  for (const auto& v : field) out << v[0] << ' ' << v[1] << ' ' << v[2] << '\n';
  return out.str();
}

void write_unstructured_grid(const std::string& path, const mesh::TetMesh& mesh,
                             const std::vector<mesh::Vec3>& field, const std::string& field_name) {
  const auto text = format_unstructured_grid(mesh, field, field_name);
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path);
  out << text;
}

}  // namespace physgnn::vtk
