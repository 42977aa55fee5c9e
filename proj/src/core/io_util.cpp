#include "io_util.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "error.hpp"
#include "image.hpp"

namespace vfpp {

std::filesystem::path resolve_path(const std::filesystem::path& base, const std::filesystem::path& p) {
  if (p.is_absolute() || base.empty()) return p;
  return base / p;
}

std::string read_text_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& p, const std::string& text) {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + p.string());
  out << text;
  if (!out) throw Error(ErrorCode::IoError, "write failed for " + p.string());
}

nlohmann::json read_json_file(const std::filesystem::path& p) {
  const std::string text = read_text_file(p);
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ConfigError, p.string() + ": " + e.what());
  }
}

void write_json_file(const std::filesystem::path& p, const nlohmann::json& j) { write_text_file(p, j.dump(2) + "\n"); }

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::uint64_t hash_string(const std::string& s) {
  return fnv1a({reinterpret_cast<const std::uint8_t*>(s.data()), s.size()});
}

std::uint64_t hash_file(const std::filesystem::path& p) { return hash_string(read_text_file(p)); }

}  // namespace vfpp
