#pragma once

#include <array>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace recomp {

using cd = std::complex<double>;

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
};

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
};

struct Segment {
  Vec2 start;
  Vec2 end;
};

/// Selects every walk path in round-robin order.
inline constexpr int kAllPaths = -1;

/// Parametric indoor scene: a room with an AP (M antennas), a station
/// (N antennas) and a pedestrian walking along one of four segments.
/// Lengths are meters, angles radians, frequencies hertz.
struct SceneConfig {
  double room_width = 6.0;  // x extent
  double room_depth = 5.0;  // y extent
  Vec3 ap_position{1.0, 2.5, 1.0};
  Vec3 sta_position{5.0, 2.5, 1.0};
  int M = 3;
  int N = 4;
  double antenna_spacing = 0.5;  // wavelengths
  double carrier_freq_hz = 5.21e9;
  int K = 64;
  double subcarrier_spacing_hz = 312.5e3;
  double pedestrian_radius = 0.3;
  double pedestrian_speed = 1.0;
  int path_id = kAllPaths;
  std::array<Segment, 4> paths{{
      {{2.0, 0.8}, {2.0, 4.2}},
      {{3.0, 0.8}, {3.0, 4.2}},
      {{4.0, 0.8}, {4.0, 4.2}},
      {{1.5, 4.0}, {4.5, 1.0}},
  }};
  double sample_rate_hz = 20.0;
  double snr_db = 25.0;
  double wall_reflection_coeff = 0.4;
  double blockage_atten_db = 10.0;
  std::uint64_t rng_seed = 1;
  int image_height = 96;
  int image_width = 96;

  // Propagation switches, all on for the full model.
  bool include_reflections = true;
  bool include_pedestrian = true;  // blockage and scatter path
  bool include_noise = true;

  /// Throws ConfigError naming the first violated constraint.
  void validate() const;

  /// 802.11ac-scale preset: K = 256 and a 480x640 camera raster.
  static SceneConfig wide_band();
};

/// 8-bit RGB raster, row-major [row][col][channel].
struct Image {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> rgb;

  std::uint8_t& at(int r, int c, int ch) {
    return rgb[(static_cast<std::size_t>(r) * width + c) * 3 + ch];
  }
  std::uint8_t at(int r, int c, int ch) const {
    return rgb[(static_cast<std::size_t>(r) * width + c) * 3 + ch];
  }
  bool operator==(const Image&) const = default;
};

struct SceneState {
  std::int64_t t = 0;
  int path = 0;
  std::int64_t walk_step = 0;
  Vec2 pedestrian_xy;
  Image image;
};

/// Complex CSI for one time instant, row-major [k][n][m].
struct CsiSample {
  std::int64_t t = 0;
  int K = 0;
  int N = 0;
  int M = 0;
  std::vector<cd> csi;

  CsiSample() = default;
  CsiSample(std::int64_t t_, int k, int n, int m)
      : t(t_), K(k), N(n), M(m), csi(static_cast<std::size_t>(k) * n * m) {}

  cd& at(int k, int n, int m) { return csi[(static_cast<std::size_t>(k) * N + n) * M + m]; }
  cd at(int k, int n, int m) const { return csi[(static_cast<std::size_t>(k) * N + n) * M + m]; }
};

/// Position on `path` after `t` samples of walking; clamps at the end point.
Vec2 pedestrian_position(const SceneConfig& config, int path, std::int64_t t);
/// Same as above on the single configured path (`path_id` must not be kAllPaths).
Vec2 pedestrian_position(const SceneConfig& config, std::int64_t t);

/// Unit-modulus uniform-linear-array response for a direction with
/// sin(angle from broadside) = `sin_angle`.
std::vector<cd> steering_vector(int antennas, double spacing_wavelengths, double sin_angle);

/// One propagation path: complex gain, delay, and direction sines at both ends.
struct PropagationPath {
  cd gain;
  double delay_s = 0.0;
  double sin_departure = 0.0;
  double sin_arrival = 0.0;
};

/// True when the pedestrian disc intersects the AP-STA segment in the floor plane.
bool los_blocked(const SceneConfig& config, Vec2 pedestrian);

std::vector<PropagationPath> trace_paths(const SceneConfig& config, Vec2 pedestrian);

CsiSample synthesize_csi(const SceneConfig& config, const SceneState& state);

Image render_image(const SceneConfig& config, Vec2 pedestrian);

/// Raster coordinates (col, row), pixel centres at +0.5, for a room point.
Vec2 room_to_pixel(const SceneConfig& config, Vec2 p);
Vec2 pixel_to_room(const SceneConfig& config, Vec2 pixel);

struct ScenePair {
  SceneState state;
  CsiSample csi;
};

/// Scene state for global sample index `t`: paths are allocated round-robin
/// and the pedestrian walks each path back and forth.
SceneState scene_state(const SceneConfig& config, std::int64_t t);

ScenePair generate_sample(const SceneConfig& config, std::int64_t t);

std::vector<ScenePair> generate_dataset(const SceneConfig& config, std::int64_t n_samples);

}  // namespace recomp
