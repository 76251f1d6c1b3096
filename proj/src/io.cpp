#include "mesoflow/io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "mesoflow/errors.hpp"

namespace mesoflow {

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string file_checksum(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open file for checksum: " + path);
    std::uint64_t h = 14695981039346656037ULL;
    char c;
    while (in.get(c)) {
        h ^= static_cast<unsigned char>(c);
        h *= 1099511628211ULL;
    }
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot open file for writing: " + path);
    out << content;
    if (!out) throw ConfigError("write failed: " + path);
}

void write_vtk_structured_points(const std::string& path,
                                 int dim,
                                 const std::vector<int>& cells,
                                 const std::vector<double>& origin,
                                 const std::vector<double>& spacing,
                                 const std::vector<std::pair<std::string, std::vector<double>>>& cell_fields) {
    const int nx = cells[0];
    const int ny = dim >= 2 ? cells[1] : 1;
    std::ostringstream os;
    os << "# vtk DataFile Version 3.0\n";
    os << "mesoflow field dump\n";
    os << "ASCII\n";
    os << "DATASET STRUCTURED_POINTS\n";
    os << "DIMENSIONS " << nx + 1 << " " << ny + 1 << " 1\n";
    os << "ORIGIN " << format_double(origin[0]) << " "
       << format_double(dim >= 2 ? origin[1] : 0.0) << " 0\n";
    os << "SPACING " << format_double(spacing[0]) << " "
       << format_double(dim >= 2 ? spacing[1] : 1.0) << " 1\n";
    os << "CELL_DATA " << nx * ny << "\n";
    for (const auto& [name, values] : cell_fields) {
        os << "SCALARS " << name << " double 1\n";
        os << "LOOKUP_TABLE default\n";
        for (double v : values) os << format_double(v) << "\n";
    }
    write_text_file(path, os.str());
}

void write_csv(const std::string& path,
               const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows) {
    std::ostringstream os;
    for (std::size_t i = 0; i < header.size(); ++i)
        os << (i ? "," : "") << header[i];
    os << "\n";
    for (const auto& row : rows) {
        for (std::size_t i = 0; i < row.size(); ++i)
            os << (i ? "," : "") << format_double(row[i]);
        os << "\n";
    }
    write_text_file(path, os.str());
}

} // namespace mesoflow
