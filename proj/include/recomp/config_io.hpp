#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "recomp/sim_scene.hpp"

namespace recomp {

using Json = nlohmann::ordered_json;

/// Parses `key = value` lines; '#' starts a comment, blank lines are skipped.
/// Duplicate keys are rejected.
std::map<std::string, std::string> parse_key_values(const std::string& text);
std::map<std::string, std::string> read_key_value_file(const std::filesystem::path& path);

/// Value parsers for config entries; errors name `key`.
double parse_double(const std::string& key, const std::string& value);
long long parse_int(const std::string& key, const std::string& value);
std::uint64_t parse_u64(const std::string& key, const std::string& value);
bool parse_bool(const std::string& key, const std::string& value);
/// Exactly `n` comma-separated numbers.
std::vector<double> parse_doubles(const std::string& key, const std::string& value, std::size_t n);
std::vector<std::uint64_t> parse_u64_list(const std::string& key, const std::string& value);

/// Applies overrides to a scene config. Unknown keys are rejected together,
/// all of them named in the error.
void apply_scene_overrides(SceneConfig& config, const std::map<std::string, std::string>& kv);

/// Keys accepted by apply_scene_overrides.
const std::vector<std::string>& scene_config_keys();

Json to_json(const SceneConfig& config);
SceneConfig scene_config_from_json(const Json& j);

/// 64-bit FNV-1a over the compact JSON dump, as 16 hex digits.
std::string config_hash(const Json& j);

}  // namespace recomp
