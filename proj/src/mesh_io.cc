#include <charconv>
#include <fstream>
#include <map>
#include <sstream>
#include <string_view>

#include "bimloc/error.h"
#include "bimloc/model.h"

namespace bimloc {
namespace {

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    const std::size_t start = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t' && line[i] != '\r') ++i;
    if (i > start) out.push_back(line.substr(start, i - start));
  }
  return out;
}

[[noreturn]] void parse_fail(std::size_t line_no, const std::string& msg) {
  throw Error(ErrorCode::kParseError, "line " + std::to_string(line_no) + ": " + msg);
}

double to_double(std::string_view tok, std::size_t line_no) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size()) {
    parse_fail(line_no, "bad number '" + std::string(tok) + "'");
  }
  return v;
}

long to_index(std::string_view tok, std::size_t line_no) {
  tok = tok.substr(0, tok.find('/'));
  long v = 0;
  const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size() || v == 0) {
    parse_fail(line_no, "bad face index '" + std::string(tok) + "'");
  }
  return v;
}

void append_number(std::string& out, double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, res.ptr);
}

}  // namespace

std::string format_model(const BuildingModel& model) {
  std::string out = "# bimloc mesh, frame " + model.frame() + "\n";
  std::size_t base = 1;
  for (const auto& s : model.surfaces()) {
    out += "g " + s.id() + "\n";
    std::map<std::array<double, 3>, std::size_t> index;
    std::vector<std::array<std::size_t, 3>> faces;
    for (const auto& t : s.triangles()) {
      std::array<std::size_t, 3> f{};
      for (int k = 0; k < 3; ++k) {
        const std::array<double, 3> key = {t.v[k].x(), t.v[k].y(), t.v[k].z()};
        auto [it, inserted] = index.emplace(key, base + index.size());
        if (inserted) {
          out += "v ";
          append_number(out, key[0]);
          out += ' ';
          append_number(out, key[1]);
          out += ' ';
          append_number(out, key[2]);
          out += '\n';
        }
        f[k] = it->second;
      }
      faces.push_back(f);
    }
    for (const auto& f : faces) {
      out += "f " + std::to_string(f[0]) + " " + std::to_string(f[1]) + " " +
             std::to_string(f[2]) + "\n";
    }
    base += index.size();
  }
  return out;
}

void save_model(const BuildingModel& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path.string());
  out << format_model(model);
  if (!out) throw Error(ErrorCode::kIoError, "write failed for " + path.string());
}

BuildingModel parse_model(const std::string& text) {
  std::vector<Vec3> vertices;
  std::vector<std::string> order;
  std::map<std::string, std::vector<Triangle>> groups;
  std::map<std::string, std::size_t> first_line;
  std::string current;
  bool have_group = false;

  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string::npos) eol = text.size();
    const std::string_view line(text.data() + pos, eol - pos);
    pos = eol + 1;
    ++line_no;
    const auto tok = split_ws(line);
    if (tok.empty() || tok[0].front() == '#') continue;
    if (tok[0] == "v") {
      if (tok.size() < 4) parse_fail(line_no, "vertex needs 3 coordinates");
      vertices.emplace_back(to_double(tok[1], line_no), to_double(tok[2], line_no),
                            to_double(tok[3], line_no));
    } else if (tok[0] == "g" || tok[0] == "o") {
      if (tok.size() < 2) {
        throw Error(ErrorCode::kMissingGroupNames, "line " + std::to_string(line_no));
      }
      current = std::string(tok[1]);
      have_group = true;
    } else if (tok[0] == "f") {
      if (!have_group) {
        throw Error(ErrorCode::kMissingGroupNames,
                    "face outside any named group at line " + std::to_string(line_no));
      }
      if (tok.size() < 4) parse_fail(line_no, "face needs at least 3 vertices");
      std::vector<std::size_t> ids;
      for (std::size_t k = 1; k < tok.size(); ++k) {
        long v = to_index(tok[k], line_no);
        if (v < 0) v += static_cast<long>(vertices.size()) + 1;
        if (v < 1 || v > static_cast<long>(vertices.size())) {
          parse_fail(line_no, "face index out of range");
        }
        ids.push_back(static_cast<std::size_t>(v - 1));
      }
      if (!groups.contains(current)) {
        order.push_back(current);
        first_line[current] = line_no;
      }
      auto& tris = groups[current];
      for (std::size_t k = 1; k + 1 < ids.size(); ++k) {
        tris.push_back({{vertices[ids[0]], vertices[ids[k]], vertices[ids[k + 1]]}});
      }
    }
    // Other records (vn, vt, s, usemtl, ...) carry nothing we use.
  }

  std::vector<Surface> surfaces;
  surfaces.reserve(order.size());
  for (const auto& name : order) {
    try {
      surfaces.emplace_back(name, std::move(groups[name]));
    } catch (const Error& e) {
      parse_fail(first_line[name], e.what());
    }
  }
  return BuildingModel(std::move(surfaces), "plan");
}

BuildingModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_model(ss.str());
}

}  // namespace bimloc
