#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "evpose/evpose.hpp"

namespace evpose::testing {

class TempDir {
 public:
  explicit TempDir(const std::string& tag = "evpose") {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            (tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

// Sorted random events; timestamps advance by 0..3 us so ties occur.
inline EventStream random_stream(std::uint64_t seed, std::size_t n, std::uint16_t width = 346,
                                 std::uint16_t height = 260) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> dx(0, width - 1), dy(0, height - 1), dt(0, 3), dp(0, 1);
  EventStream s{width, height, {}};
  Timestamp t = 1000;
  for (std::size_t i = 0; i < n; ++i) {
    t += dt(rng);
    s.events.push_back({static_cast<std::uint16_t>(dx(rng)), static_cast<std::uint16_t>(dy(rng)),
                        t, static_cast<std::int8_t>(dp(rng) ? 1 : -1)});
  }
  return s;
}

// Roughly the DHP19 camera: 346 x 260, ~4 mm lens on 18.5 um pixels, subject
// ~3.5 m away.
inline CameraCalibration dhp19_like_calibration() {
  CameraCalibration c;
  c.fx = 400.0;
  c.fy = 400.0;
  c.cx = 173.0;
  c.cy = 130.0;
  c.width = 346;
  c.height = 260;
  return c;
}

inline constexpr double kDhp19ZRef = 3500.0;

inline Mat3 rotation_zyx(double a, double b, double c) {
  const Mat3 rz{{std::cos(a), -std::sin(a), 0, std::sin(a), std::cos(a), 0, 0, 0, 1}};
  const Mat3 ry{{std::cos(b), 0, std::sin(b), 0, 1, 0, -std::sin(b), 0, std::cos(b)}};
  const Mat3 rx{{1, 0, 0, 0, std::cos(c), -std::sin(c), 0, std::sin(c), std::cos(c)}};
  auto mul = [](const Mat3& a, const Mat3& b) {
    Mat3 r;
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) {
        r(i, j) = a(i, 0) * b(0, j) + a(i, 1) * b(1, j) + a(i, 2) * b(2, j);
      }
    }
    return r;
  };
  return mul(mul(rz, ry), rx);
}

inline NdcPose random_ndc_pose(std::mt19937_64& rng, std::size_t joints, double bound) {
  std::uniform_real_distribution<double> u(-bound, bound);
  NdcPose p;
  for (std::size_t j = 0; j < joints; ++j) {
    const double x = u(rng);
    const double y = u(rng);
    const double z = u(rng);
    p.coords.push_back({x, y, z});
    p.valid.push_back(true);
  }
  return p;
}

// ---------------------------------------------------------------------------
// Moving-dot dataset: a bright Gaussian dot travels a Lissajous path over a
// dark sensor; the simulator turns the video into events, and each window of
// events is paired with the dot's position at the window's end.

struct MovingDotConfig {
  int width = 32;
  int height = 32;
  std::size_t windows = 200;
  std::size_t window_events = 150;
  Timestamp frame_dt_us = 1000;
  double dot_sigma_px = 1.5;
  double cycle_frames = 120.0;
  HeatmapSpec spec{16, 1.5};
  int pool = 16;
};

struct MovingDotData {
  EventStream stream;
  std::vector<TrainSample> samples;
};

inline Vec3 moving_dot_ndc(const MovingDotConfig& cfg, double frame) {
  const double phase = 2.0 * std::numbers::pi * frame / cfg.cycle_frames;
  return {0.7 * std::sin(phase), 0.7 * std::sin(2.0 * phase + 0.5), 0.5 * std::cos(phase)};
}

inline IntensityFrame moving_dot_frame(const MovingDotConfig& cfg, std::size_t k) {
  IntensityFrame f{cfg.width, cfg.height, {}, static_cast<Timestamp>(k) * cfg.frame_dt_us};
  const Vec3 c = moving_dot_ndc(cfg, static_cast<double>(k));
  const double u = (c.x + 1.0) * 0.5 * cfg.width;
  const double v = (c.y + 1.0) * 0.5 * cfg.height;
  f.values.resize(static_cast<std::size_t>(cfg.width) * cfg.height);
  for (int y = 0; y < cfg.height; ++y) {
    for (int x = 0; x < cfg.width; ++x) {
      const double d2 = (x + 0.5 - u) * (x + 0.5 - u) + (y + 0.5 - v) * (y + 0.5 - v);
      f.values[static_cast<std::size_t>(y) * cfg.width + x] =
          0.05 + 0.95 * std::exp(-d2 / (2.0 * cfg.dot_sigma_px * cfg.dot_sigma_px));
    }
  }
  return f;
}

inline MovingDotData make_moving_dot(const MovingDotConfig& cfg) {
  MovingDotData out;
  const SimulatorConfig sim{};
  std::vector<IntensityFrame> frames;
  frames.push_back(moving_dot_frame(cfg, 0));
  SimulatorState state = initial_state(frames.back(), sim);
  out.stream = {static_cast<std::uint16_t>(cfg.width), static_cast<std::uint16_t>(cfg.height), {}};
  const std::size_t needed = cfg.windows * cfg.window_events;
  for (std::size_t k = 1; out.stream.events.size() < needed; ++k) {
    IntensityFrame next = moving_dot_frame(cfg, k);
    PairResult r = simulate_pair(frames.back(), next, state, sim);
    state = std::move(r.state);
    out.stream.events.insert(out.stream.events.end(), r.events.begin(), r.events.end());
    frames.back() = std::move(next);
  }
  const auto windows = window_stream(out.stream, cfg.window_events);
  for (std::size_t w = 0; w < cfg.windows; ++w) {
    const double frame = static_cast<double>(windows[w].t_end) / static_cast<double>(cfg.frame_dt_us);
    NdcPose pose{{moving_dot_ndc(cfg, frame)}, {true}};
    const ConstantCountFrame cc = constant_count(windows[w], CountMode::two_channel);
    TrainSample s;
    s.features = pool_features(cc.values, cc.channels, cc.height, cc.width, cfg.pool);
    s.heatmaps = render_heatmaps(pose, cfg.spec);
    s.pose = std::move(pose);
    out.samples.push_back(std::move(s));
  }
  return out;
}

}  // namespace evpose::testing
