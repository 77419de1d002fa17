#include "recomp/config_io.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

#include "recomp/error.hpp"

namespace recomp {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_commas(const std::string& s) {
  std::vector<std::string> parts;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) parts.push_back(trim(item));
  return parts;
}

std::string fmt_double(double d) { return Json(d).dump(); }

struct Field {
  std::function<void(SceneConfig&, const std::string&, const std::string&)> set;
  std::function<Json(const SceneConfig&)> get;
};

template <typename Member>
Field double_field(Member member) {
  return {[member](SceneConfig& c, const std::string& k, const std::string& v) {
            c.*member = parse_double(k, v);
          },
          [member](const SceneConfig& c) { return Json(c.*member); }};
}

template <typename Member>
Field int_field(Member member) {
  return {[member](SceneConfig& c, const std::string& k, const std::string& v) {
            c.*member = static_cast<int>(parse_int(k, v));
          },
          [member](const SceneConfig& c) { return Json(c.*member); }};
}

template <typename Member>
Field bool_field(Member member) {
  return {[member](SceneConfig& c, const std::string& k, const std::string& v) {
            c.*member = parse_bool(k, v);
          },
          [member](const SceneConfig& c) { return Json(c.*member); }};
}

Field vec3_field(Vec3 SceneConfig::*member) {
  return {[member](SceneConfig& c, const std::string& k, const std::string& v) {
            const auto d = parse_doubles(k, v, 3);
            c.*member = {d[0], d[1], d[2]};
          },
          [member](const SceneConfig& c) {
            const Vec3& p = c.*member;
            return Json(fmt_double(p.x) + "," + fmt_double(p.y) + "," + fmt_double(p.z));
          }};
}

Field path_field(std::size_t i) {
  return {[i](SceneConfig& c, const std::string& k, const std::string& v) {
            const auto d = parse_doubles(k, v, 4);
            c.paths[i] = {{d[0], d[1]}, {d[2], d[3]}};
          },
          [i](const SceneConfig& c) {
            const Segment& s = c.paths[i];
            return Json(fmt_double(s.start.x) + "," + fmt_double(s.start.y) + "," +
                        fmt_double(s.end.x) + "," + fmt_double(s.end.y));
          }};
}

const std::vector<std::pair<std::string, Field>>& fields() {
  static const std::vector<std::pair<std::string, Field>> table = {
      {"room_width", double_field(&SceneConfig::room_width)},
      {"room_depth", double_field(&SceneConfig::room_depth)},
      {"ap_position", vec3_field(&SceneConfig::ap_position)},
      {"sta_position", vec3_field(&SceneConfig::sta_position)},
      {"M", int_field(&SceneConfig::M)},
      {"N", int_field(&SceneConfig::N)},
      {"antenna_spacing", double_field(&SceneConfig::antenna_spacing)},
      {"carrier_freq_hz", double_field(&SceneConfig::carrier_freq_hz)},
      {"K", int_field(&SceneConfig::K)},
      {"subcarrier_spacing_hz", double_field(&SceneConfig::subcarrier_spacing_hz)},
      {"pedestrian_radius", double_field(&SceneConfig::pedestrian_radius)},
      {"pedestrian_speed", double_field(&SceneConfig::pedestrian_speed)},
      {"path_id",
       {[](SceneConfig& c, const std::string& k, const std::string& v) {
          c.path_id = v == "all" ? kAllPaths : static_cast<int>(parse_int(k, v));
        },
        [](const SceneConfig& c) {
          return c.path_id == kAllPaths ? Json("all") : Json(std::to_string(c.path_id));
        }}},
      {"path0", path_field(0)},
      {"path1", path_field(1)},
      {"path2", path_field(2)},
      {"path3", path_field(3)},
      {"sample_rate_hz", double_field(&SceneConfig::sample_rate_hz)},
      {"snr_db", double_field(&SceneConfig::snr_db)},
      {"wall_reflection_coeff", double_field(&SceneConfig::wall_reflection_coeff)},
      {"blockage_atten_db", double_field(&SceneConfig::blockage_atten_db)},
      {"rng_seed",
       {[](SceneConfig& c, const std::string& k, const std::string& v) { c.rng_seed = parse_u64(k, v); },
        [](const SceneConfig& c) { return Json(c.rng_seed); }}},
      {"image_height", int_field(&SceneConfig::image_height)},
      {"image_width", int_field(&SceneConfig::image_width)},
      {"include_reflections", bool_field(&SceneConfig::include_reflections)},
      {"include_pedestrian", bool_field(&SceneConfig::include_pedestrian)},
      {"include_noise", bool_field(&SceneConfig::include_noise)},
  };
  return table;
}

const Field* find_field(const std::string& key) {
  for (const auto& [name, f] : fields())
    if (name == key) return &f;
  return nullptr;
}

}  // namespace

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': '" + v + "' is not a number");
  }
}

long long parse_int(const std::string& key, const std::string& v) {
  long long out = 0;
  const auto* end = v.data() + v.size();
  const auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end)
    throw ConfigError("config key '" + key + "': '" + v + "' is not an integer");
  return out;
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto* end = v.data() + v.size();
  const auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end)
    throw ConfigError("config key '" + key + "': '" + v + "' is not a non-negative integer");
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("config key '" + key + "': '" + v + "' is not a boolean");
}

std::vector<double> parse_doubles(const std::string& key, const std::string& v, std::size_t n) {
  const auto parts = split_commas(v);
  if (parts.size() != n)
    throw ConfigError("config key '" + key + "': expected " + std::to_string(n) +
                      " comma-separated numbers");
  std::vector<double> out;
  for (const auto& p : parts) out.push_back(parse_double(key, p));
  return out;
}

std::vector<std::uint64_t> parse_u64_list(const std::string& key, const std::string& v) {
  std::vector<std::uint64_t> out;
  for (const auto& p : split_commas(v)) out.push_back(parse_u64(key, p));
  if (out.empty()) throw ConfigError("config key '" + key + "': empty list");
  return out;
}

std::map<std::string, std::string> parse_key_values(const std::string& text) {
  std::map<std::string, std::string> out;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(line_no) + ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError("config line " + std::to_string(line_no) + ": empty key");
    if (!out.emplace(key, value).second)
      throw ConfigError("config line " + std::to_string(line_no) + ": duplicate key '" + key + "'");
  }
  return out;
}

std::map<std::string, std::string> read_key_value_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_key_values(ss.str());
}

const std::vector<std::string>& scene_config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const auto& [name, f] : fields()) k.push_back(name);
    return k;
  }();
  return keys;
}

void apply_scene_overrides(SceneConfig& config, const std::map<std::string, std::string>& kv) {
  std::string unknown;
  for (const auto& [key, value] : kv) {
    if (find_field(key) == nullptr) unknown += (unknown.empty() ? "" : ", ") + key;
  }
  if (!unknown.empty()) throw ConfigError("unknown config keys: " + unknown);
  for (const auto& [key, value] : kv) find_field(key)->set(config, key, value);
}

Json to_json(const SceneConfig& config) {
  Json j = Json::object();
  for (const auto& [name, f] : fields()) j[name] = f.get(config);
  return j;
}

SceneConfig scene_config_from_json(const Json& j) {
  std::map<std::string, std::string> kv;
  for (const auto& [key, value] : j.items())
    kv[key] = value.is_string() ? value.get<std::string>() : value.dump();
  SceneConfig c;
  apply_scene_overrides(c, kv);
  return c;
}

std::string config_hash(const Json& j) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char ch : j.dump()) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace recomp
