#pragma once

#include <filesystem>
#include <string>

#include "bimloc/fusion.h"
#include "bimloc/sensor_sim.h"

namespace bimloc {

// Raw scan CSV: header "x,y,z,class", one point per line, sensor frame.
// A three-column file (no class) is accepted and reads as class "unknown".
std::string format_scan_csv(const RawScan& scan);
RawScan parse_scan_csv(const std::string& text);
void save_scan_csv(const RawScan& scan, const std::filesystem::path& path);
RawScan load_scan_csv(const std::filesystem::path& path);

// Fused scan CSV: header "x,y,z,d,w"; missing values are written as empty fields.
std::string format_fused_csv(const Scan& scan);
void save_fused_csv(const Scan& scan, const std::filesystem::path& path);

// 16-bit binary PGM (P5, maxval 65535); score = value / 65535.
std::string format_pgm(const DensityImage& image);
DensityImage parse_pgm(const std::string& bytes);
void save_pgm(const DensityImage& image, const std::filesystem::path& path);
DensityImage load_pgm(const std::filesystem::path& path);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

/// Shortest round-trip decimal form.
std::string format_double(double v);

}  // namespace bimloc
