#ifndef OLDNASH_REPORT_HPP
#define OLDNASH_REPORT_HPP

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "oldnash/error.hpp"

namespace oldnash {

// report.json uses insertion-ordered keys and nlohmann's shortest-roundtrip
// float formatting; CSV cells use %.17g. Both are byte-stable for a fixed
// seed and config, which the determinism criterion relies on.
using Json = nlohmann::ordered_json;

inline std::string format_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

struct CsvTable {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  void add_row(const std::vector<double>& vals) {
    std::vector<std::string> r;
    r.reserve(vals.size());
    for (double v : vals) r.push_back(format_g17(v));
    rows.push_back(std::move(r));
  }

  std::string serialize() const {
    std::string out;
    for (size_t c = 0; c < columns.size(); ++c)
      out += (c ? "," : "") + columns[c];
    out += "\n";
    for (const auto& r : rows) {
      for (size_t c = 0; c < r.size(); ++c) out += (c ? "," : "") + r[c];
      out += "\n";
    }
    return out;
  }
};

inline void write_text_file(const std::string& path, const std::string& content) {
  std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorCode::io_failed, "cannot open for write: " + path);
  os << content;
  if (!os) throw Error(ErrorCode::io_failed, "short write: " + path);
}

inline void write_json_file(const std::string& path, const Json& j) {
  write_text_file(path, j.dump(2) + "\n");
}

}  // namespace oldnash

#endif
