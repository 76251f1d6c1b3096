#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace mesoflow {

/// Formats a double with 17 significant digits (round-trip exact).
std::string format_double(double v);

/// FNV-1a 64-bit hash of a file's bytes, as a hex string.
std::string file_checksum(const std::string& path);

void write_text_file(const std::string& path, const std::string& content);

/// Legacy-ASCII VTK structured-points writer for scalar cell fields on a
/// 1D/2D structured mesh. Fields are (name, values) pairs, values in
/// cell-major order (x fastest).
void write_vtk_structured_points(const std::string& path,
                                 int dim,
                                 const std::vector<int>& cells,
                                 const std::vector<double>& origin,
                                 const std::vector<double>& spacing,
                                 const std::vector<std::pair<std::string, std::vector<double>>>& cell_fields);

/// CSV writer: header plus rows, all numeric entries at 17 significant digits.
void write_csv(const std::string& path,
               const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows);

} // namespace mesoflow
