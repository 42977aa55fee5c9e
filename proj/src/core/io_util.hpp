#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <json.hpp>

namespace vfpp {

/// `p` unchanged if absolute or `base` empty, else base / p.
std::filesystem::path resolve_path(const std::filesystem::path& base, const std::filesystem::path& p);

nlohmann::json read_json_file(const std::filesystem::path& p);
/// Pretty-printed with a trailing newline; creates parent directories.
void write_json_file(const std::filesystem::path& p, const nlohmann::json& j);
std::string read_text_file(const std::filesystem::path& p);
void write_text_file(const std::filesystem::path& p, const std::string& text);

/// 16 lowercase hex digits.
std::string hex64(std::uint64_t v);
std::uint64_t hash_file(const std::filesystem::path& p);
std::uint64_t hash_string(const std::string& s);

}  // namespace vfpp
