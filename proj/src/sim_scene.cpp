#include "recomp/sim_scene.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "recomp/error.hpp"

namespace recomp {
namespace {

constexpr double kSpeedOfLight = 299792458.0;
// Radar cross-section of the pedestrian, m^2.
constexpr double kPedestrianRcs = 1.0;
constexpr double kMarkerHalfSize = 0.12;

double norm3(Vec3 v) { return std::sqrt(v.x * v.x + v.y * v.y + v.z * v.z); }
Vec3 sub(Vec3 a, Vec3 b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }

bool inside_room(const SceneConfig& c, Vec2 p) {
  return p.x >= 0.0 && p.x <= c.room_width && p.y >= 0.0 && p.y <= c.room_depth;
}

double point_segment_distance(Vec2 p, Vec2 a, Vec2 b) {
  const double dx = b.x - a.x;
  const double dy = b.y - a.y;
  const double len2 = dx * dx + dy * dy;
  double u = 0.0;
  if (len2 > 0.0) u = std::clamp(((p.x - a.x) * dx + (p.y - a.y) * dy) / len2, 0.0, 1.0);
  const double ex = a.x + u * dx - p.x;
  const double ey = a.y + u * dy - p.y;
  return std::sqrt(ex * ex + ey * ey);
}

double segment_length(const Segment& s) {
  return std::hypot(s.end.x - s.start.x, s.end.y - s.start.y);
}

std::int64_t traverse_steps(const SceneConfig& c, int path) {
  const double seconds = segment_length(c.paths[path]) / c.pedestrian_speed;
  return std::max<std::int64_t>(1, static_cast<std::int64_t>(std::ceil(seconds * c.sample_rate_hz)));
}

[[noreturn]] void reject(const std::string& what) { throw ConfigError("scene config: " + what); }

}  // namespace

void SceneConfig::validate() const {
  if (M < 1) reject("M must be >= 1");
  if (N < 1) reject("N must be >= 1");
  if (K < 2) reject("K must be >= 2");
  if (!(room_width > 0.0) || !(room_depth > 0.0)) reject("room_size must be positive");
  if (!(antenna_spacing > 0.0)) reject("antenna_spacing must be positive");
  if (!(carrier_freq_hz > 0.0)) reject("carrier_freq_hz must be positive");
  if (!(subcarrier_spacing_hz > 0.0)) reject("subcarrier_spacing_hz must be positive");
  if (!(pedestrian_radius >= 0.0)) reject("pedestrian_radius must be non-negative");
  if (!(pedestrian_speed > 0.0)) reject("pedestrian_speed must be positive");
  if (!(sample_rate_hz > 0.0)) reject("sample_rate_hz must be positive");
  if (!std::isfinite(snr_db)) reject("snr_db must be finite");
  if (!(wall_reflection_coeff >= 0.0 && wall_reflection_coeff < 1.0))
    reject("wall_reflection_coeff must lie in [0, 1)");
  if (!(blockage_atten_db >= 0.0)) reject("blockage_atten_db must be non-negative");
  if (image_height < 1 || image_width < 1) reject("image dimensions must be positive");
  if (path_id != kAllPaths && (path_id < 0 || path_id >= static_cast<int>(paths.size())))
    reject("path_id must be 0..3 or all");
  for (std::size_t i = 0; i < paths.size(); ++i) {
    if (!inside_room(*this, paths[i].start) || !inside_room(*this, paths[i].end))
      reject("path " + std::to_string(i) + " leaves the room");
    if (!(segment_length(paths[i]) > 0.0))
      reject("path " + std::to_string(i) + " has zero length");
  }
  if (!inside_room(*this, {ap_position.x, ap_position.y})) reject("ap_position outside room");
  if (!inside_room(*this, {sta_position.x, sta_position.y})) reject("sta_position outside room");
}

SceneConfig SceneConfig::wide_band() {
  SceneConfig c;
  c.K = 256;
  c.image_height = 480;
  c.image_width = 640;
  return c;
}

Vec2 pedestrian_position(const SceneConfig& config, int path, std::int64_t t) {
  const Segment& seg = config.paths.at(static_cast<std::size_t>(path));
  const double len = segment_length(seg);
  const double walked =
      std::min(config.pedestrian_speed * static_cast<double>(t) / config.sample_rate_hz, len);
  const double ux = (seg.end.x - seg.start.x) / len;
  const double uy = (seg.end.y - seg.start.y) / len;
  if (walked >= len) return seg.end;
  return {seg.start.x + walked * ux, seg.start.y + walked * uy};
}

Vec2 pedestrian_position(const SceneConfig& config, std::int64_t t) {
  if (config.path_id == kAllPaths)
    throw ConfigError("pedestrian_position: path_id 'all' needs an explicit path");
  return pedestrian_position(config, config.path_id, t);
}

std::vector<cd> steering_vector(int antennas, double spacing_wavelengths, double sin_angle) {
  std::vector<cd> a(static_cast<std::size_t>(antennas));
  for (int i = 0; i < antennas; ++i)
    a[i] = std::polar(1.0, 2.0 * std::numbers::pi * spacing_wavelengths * i * sin_angle);
  return a;
}

bool los_blocked(const SceneConfig& config, Vec2 pedestrian) {
  return point_segment_distance(pedestrian, {config.ap_position.x, config.ap_position.y},
                                {config.sta_position.x, config.sta_position.y}) <=
         config.pedestrian_radius;
}

std::vector<PropagationPath> trace_paths(const SceneConfig& config, Vec2 pedestrian) {
  const Vec3 tx = config.ap_position;
  const Vec3 rx = config.sta_position;
  const double lambda = kSpeedOfLight / config.carrier_freq_hz;
  const double d_los = norm3(sub(rx, tx));
  if (!(d_los > 0.0)) throw ConfigError("scene config: AP and STA coincide");

  // Both arrays lie along the y axis; a direction's sine from broadside is its
  // normalized y component.
  std::vector<PropagationPath> paths;
  const double free_space = lambda / (4.0 * std::numbers::pi);

  double los_gain = free_space / d_los;
  if (config.include_pedestrian && los_blocked(config, pedestrian))
    los_gain *= std::pow(10.0, -config.blockage_atten_db / 20.0);
  paths.push_back({cd(los_gain, 0.0), d_los / kSpeedOfLight, (rx.y - tx.y) / d_los,
                   (tx.y - rx.y) / d_los});

  if (config.include_reflections) {
    // Image method, one bounce per wall. `flip_x` marks walls normal to x.
    struct Wall {
      bool flip_x;
      double plane;
    };
    const Wall walls[4] = {{true, 0.0}, {true, config.room_width}, {false, 0.0},
                           {false, config.room_depth}};
    for (const Wall& w : walls) {
      Vec3 image = tx;
      if (w.flip_x)
        image.x = 2.0 * w.plane - tx.x;
      else
        image.y = 2.0 * w.plane - tx.y;
      const Vec3 arrive = sub(image, rx);  // from RX towards the virtual source
      const double len = norm3(arrive);
      // Departure leaves TX towards the bounce point: the image ray mirrored back.
      Vec3 depart = sub(rx, image);
      if (!w.flip_x) depart.y = -depart.y;
      paths.push_back({cd(config.wall_reflection_coeff * free_space / len, 0.0),
                       len / kSpeedOfLight, depart.y / len, arrive.y / len});
    }
  }

  if (config.include_pedestrian) {
    const Vec3 p{pedestrian.x, pedestrian.y, tx.z};
    const Vec3 out = sub(p, tx);
    const Vec3 back = sub(p, rx);
    const double d1 = norm3(out);
    const double d2 = norm3(back);
    if (d1 > 0.0 && d2 > 0.0) {
      const double gain = lambda * std::sqrt(kPedestrianRcs) /
                          (std::pow(4.0 * std::numbers::pi, 1.5) * d1 * d2);
      paths.push_back({cd(gain, 0.0), (d1 + d2) / kSpeedOfLight, out.y / d1, back.y / d2});
    }
  }
  return paths;
}

CsiSample synthesize_csi(const SceneConfig& config, const SceneState& state) {
  const auto paths = trace_paths(config, state.pedestrian_xy);
  CsiSample out(state.t, config.K, config.N, config.M);

  for (const PropagationPath& p : paths) {
    const auto a_tx = steering_vector(config.M, config.antenna_spacing, p.sin_departure);
    const auto a_rx = steering_vector(config.N, config.antenna_spacing, p.sin_arrival);
    for (int k = 0; k < config.K; ++k) {
      const double f = config.carrier_freq_hz + (k - config.K / 2) * config.subcarrier_spacing_hz;
      const cd g = p.gain * std::polar(1.0, -2.0 * std::numbers::pi * f * p.delay_s);
      for (int n = 0; n < config.N; ++n)
        for (int m = 0; m < config.M; ++m) out.at(k, n, m) += g * a_rx[n] * a_tx[m];
    }
  }

  if (config.include_noise) {
    double signal_power = 0.0;
    for (const cd& h : out.csi) signal_power += std::norm(h);
    signal_power /= static_cast<double>(out.csi.size());
    const double noise_power = signal_power * std::pow(10.0, -config.snr_db / 10.0);
    const auto t = static_cast<std::uint64_t>(state.t);
    std::seed_seq seq{static_cast<std::uint32_t>(config.rng_seed),
                      static_cast<std::uint32_t>(config.rng_seed >> 32),
                      static_cast<std::uint32_t>(t), static_cast<std::uint32_t>(t >> 32)};
    std::mt19937_64 rng(seq);
    std::normal_distribution<double> gauss(0.0, std::sqrt(noise_power / 2.0));
    for (cd& h : out.csi) h += cd(gauss(rng), gauss(rng));
  }
  return out;
}

Vec2 room_to_pixel(const SceneConfig& config, Vec2 p) {
  return {p.x / config.room_width * config.image_width,
          p.y / config.room_depth * config.image_height};
}

Vec2 pixel_to_room(const SceneConfig& config, Vec2 pixel) {
  return {pixel.x / config.image_width * config.room_width,
          pixel.y / config.image_height * config.room_depth};
}

Image render_image(const SceneConfig& config, Vec2 pedestrian) {
  Image img{config.image_height, config.image_width,
            std::vector<std::uint8_t>(static_cast<std::size_t>(config.image_height) *
                                      config.image_width * 3)};
  const auto paint = [&](int r, int c, std::array<std::uint8_t, 3> color) {
    for (int ch = 0; ch < 3; ++ch) img.at(r, c, ch) = color[ch];
  };
  const auto marker = [&](Vec3 pos, double x, double y) {
    return std::abs(x - pos.x) <= kMarkerHalfSize && std::abs(y - pos.y) <= kMarkerHalfSize;
  };
  const double r2 = config.pedestrian_radius * config.pedestrian_radius;

  for (int r = 0; r < img.height; ++r) {
    for (int c = 0; c < img.width; ++c) {
      const Vec2 p = pixel_to_room(config, {c + 0.5, r + 0.5});
      const double dx = p.x - pedestrian.x;
      const double dy = p.y - pedestrian.y;
      if (config.include_pedestrian && dx * dx + dy * dy <= r2) {
        paint(r, c, {30, 160, 60});
      } else if (marker(config.ap_position, p.x, p.y)) {
        paint(r, c, {200, 30, 30});
      } else if (marker(config.sta_position, p.x, p.y)) {
        paint(r, c, {30, 30, 200});
      } else if (r == 0 || c == 0 || r == img.height - 1 || c == img.width - 1) {
        paint(r, c, {40, 40, 40});
      } else {
        paint(r, c, {235, 235, 235});
      }
    }
  }
  return img;
}

SceneState scene_state(const SceneConfig& config, std::int64_t t) {
  SceneState s;
  s.t = t;
  std::int64_t local = t;
  if (config.path_id == kAllPaths) {
    const auto n_paths = static_cast<std::int64_t>(config.paths.size());
    s.path = static_cast<int>(t % n_paths);
    local = t / n_paths;
  } else {
    s.path = config.path_id;
  }
  const std::int64_t steps = traverse_steps(config, s.path);
  const std::int64_t u = local % (2 * steps);
  s.walk_step = u <= steps ? u : 2 * steps - u;
  s.pedestrian_xy = pedestrian_position(config, s.path, s.walk_step);
  s.image = render_image(config, s.pedestrian_xy);
  return s;
}

ScenePair generate_sample(const SceneConfig& config, std::int64_t t) {
  ScenePair pair;
  pair.state = scene_state(config, t);
  pair.csi = synthesize_csi(config, pair.state);
  return pair;
}

std::vector<ScenePair> generate_dataset(const SceneConfig& config, std::int64_t n_samples) {
  if (n_samples < 1) throw ConfigError("generate_dataset: n_samples must be >= 1");
  config.validate();
  std::vector<ScenePair> out;
  out.reserve(static_cast<std::size_t>(n_samples));
  for (std::int64_t t = 0; t < n_samples; ++t) out.push_back(generate_sample(config, t));
  return out;
}

}  // namespace recomp
