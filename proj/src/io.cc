#include "bimloc/io.h"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string_view>

#include "bimloc/error.h"

namespace bimloc {
namespace {

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t p = line.find(sep, start);
    out.push_back(line.substr(start, p == std::string_view::npos ? std::string_view::npos : p - start));
    if (p == std::string_view::npos) break;
    start = p + 1;
  }
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

double parse_number(std::string_view tok, std::size_t line_no) {
  tok = trim(tok);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (tok.empty() || ec != std::errc() || ptr != tok.data() + tok.size() || !std::isfinite(v)) {
    throw Error(ErrorCode::kParseError,
                "line " + std::to_string(line_no) + ": bad number '" + std::string(tok) + "'");
  }
  return v;
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return {buf, res.ptr};
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorCode::kIoError, "write failed for " + path.string());
}

std::string format_scan_csv(const RawScan& scan) {
  std::string out = "x,y,z,class\n";
  for (std::size_t i = 0; i < scan.points.size(); ++i) {
    const Vec3& p = scan.points[i];
    out += format_double(p.x()) + "," + format_double(p.y()) + "," + format_double(p.z()) + ",";
    out += to_string(i < scan.classes.size() ? scan.classes[i] : PointClass::kUnknown);
    out += '\n';
  }
  return out;
}

RawScan parse_scan_csv(const std::string& text) {
  RawScan scan;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string::npos) eol = text.size();
    const std::string_view line = trim(std::string_view(text).substr(pos, eol - pos));
    pos = eol + 1;
    ++line_no;
    if (line.empty() || line.front() == '#') continue;
    if (line_no == 1 && line.front() == 'x') continue;  // header
    const auto f = split(line, ',');
    if (f.size() != 3 && f.size() != 4) {
      throw Error(ErrorCode::kParseError,
                  "line " + std::to_string(line_no) + ": expected x,y,z[,class]");
    }
    scan.points.emplace_back(parse_number(f[0], line_no), parse_number(f[1], line_no),
                             parse_number(f[2], line_no));
    scan.classes.push_back(f.size() == 4 ? point_class_from_string(trim(f[3]))
                                         : PointClass::kUnknown);
  }
  return scan;
}

void save_scan_csv(const RawScan& scan, const std::filesystem::path& path) {
  write_text_file(path, format_scan_csv(scan));
}

RawScan load_scan_csv(const std::filesystem::path& path) {
  return parse_scan_csv(read_text_file(path));
}

std::string format_fused_csv(const Scan& scan) {
  scan.validate();
  std::string out = "x,y,z,d,w\n";
  for (std::size_t i = 0; i < scan.size(); ++i) {
    const Vec3& p = scan.points[i];
    out += format_double(p.x()) + "," + format_double(p.y()) + "," + format_double(p.z()) + ",";
    if (scan.densities) out += format_double((*scan.densities)[i]);
    out += ",";
    if (scan.weights) out += format_double((*scan.weights)[i]);
    out += '\n';
  }
  return out;
}

void save_fused_csv(const Scan& scan, const std::filesystem::path& path) {
  write_text_file(path, format_fused_csv(scan));
}

std::string format_pgm(const DensityImage& image) {
  std::string out = "P5\n" + std::to_string(image.width) + " " + std::to_string(image.height) +
                    "\n65535\n";
  out.reserve(out.size() + image.scores.size() * 2);
  for (double d : image.scores) {
    const auto v = static_cast<unsigned>(std::lround(std::clamp(d, 0.0, 1.0) * 65535.0));
    out.push_back(static_cast<char>((v >> 8) & 0xff));  // big-endian, per the PGM format
    out.push_back(static_cast<char>(v & 0xff));
  }
  return out;
}

DensityImage parse_pgm(const std::string& bytes) {
  std::size_t pos = 0;
  const auto next_token = [&]() {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
        ++pos;
      } else {
        break;
      }
    }
    const std::size_t start = pos;
    while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
    return bytes.substr(start, pos - start);
  };
  if (next_token() != "P5") throw Error(ErrorCode::kParseError, "PGM: expected P5 magic");
  int w = 0;
  int h = 0;
  int maxval = 0;
  try {
    w = std::stoi(next_token());
    h = std::stoi(next_token());
    maxval = std::stoi(next_token());
  } catch (const std::exception&) {
    throw Error(ErrorCode::kParseError, "PGM: malformed header");
  }
  if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 65535) {
    throw Error(ErrorCode::kParseError, "PGM: bad dimensions or maxval");
  }
  ++pos;  // single whitespace byte before the raster
  const std::size_t bpp = maxval > 255 ? 2 : 1;
  const std::size_t need = static_cast<std::size_t>(w) * h * bpp;
  if (bytes.size() < pos + need) throw Error(ErrorCode::kParseError, "PGM: truncated raster");
  DensityImage img(w, h);
  for (std::size_t i = 0; i < img.scores.size(); ++i) {
    unsigned v = static_cast<unsigned char>(bytes[pos + i * bpp]);
    if (bpp == 2) v = (v << 8) | static_cast<unsigned char>(bytes[pos + i * bpp + 1]);
    img.scores[i] = std::min(1.0, static_cast<double>(v) / maxval);
  }
  return img;
}

void save_pgm(const DensityImage& image, const std::filesystem::path& path) {
  write_text_file(path, format_pgm(image));
}

DensityImage load_pgm(const std::filesystem::path& path) { return parse_pgm(read_text_file(path)); }

}  // namespace bimloc
