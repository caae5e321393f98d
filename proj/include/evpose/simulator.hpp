#pragma once

// Per-pixel threshold-crossing event simulator.
//
// Each pixel's log intensity L = ln(I + log_eps) is linearly interpolated in
// time between consecutive frames. Whenever L moves at least cp above (cn
// below) the pixel's reference level an event is emitted at the closed-form
// crossing time and the reference moves by exactly one threshold. Crossings
// within refractory_period of the pixel's last emitted event are dropped; the
// reference still advances.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "evpose/detail/io_util.hpp"
#include "evpose/errors.hpp"
#include "evpose/events_io.hpp"

namespace evpose {

struct SimulatorConfig {
  double cp = 0.2;
  double cn = 0.2;
  double log_eps = 1e-3;
  double refractory_period = 1e-4;  // seconds

  void validate() const {
    if (!(cp > 0.0) || !(cn > 0.0)) throw ConfigError("contrast thresholds must be > 0");
    if (!(log_eps > 0.0)) throw ConfigError("log_eps must be > 0");
    if (!(refractory_period >= 0.0)) throw ConfigError("refractory_period must be >= 0");
  }

  Timestamp refractory_us() const {
    return static_cast<Timestamp>(std::llround(refractory_period * 1e6));
  }
};

struct IntensityFrame {
  int width = 0;
  int height = 0;
  std::vector<double> values;  // row-major, each in [0, 1]
  Timestamp t = 0;

  double at(int x, int y) const { return values[static_cast<std::size_t>(y) * width + x]; }

  void validate() const {
    if (width <= 0 || height <= 0 || width > 65535 || height > 65535) {
      throw ValidationError("frame size out of range");
    }
    if (values.size() != static_cast<std::size_t>(width) * height) {
      throw ShapeMismatchError("frame value count does not match width*height");
    }
    for (double v : values) {
      if (!(v >= 0.0 && v <= 1.0)) throw ValidationError("frame intensity outside [0,1]");
    }
  }
};

struct PixelState {
  double ref_log_intensity = 0.0;
  std::optional<Timestamp> last_event_time;
};

struct SimulatorState {
  int width = 0;
  int height = 0;
  std::vector<PixelState> pixels;
};

struct LogPlane {
  int width = 0;
  int height = 0;
  std::vector<double> values;
  Timestamp t = 0;
};

inline LogPlane log_transform(const IntensityFrame& frame, double log_eps) {
  LogPlane out{frame.width, frame.height, {}, frame.t};
  out.values.reserve(frame.values.size());
  for (double v : frame.values) out.values.push_back(std::log(v + log_eps));
  return out;
}

inline SimulatorState initial_state(const LogPlane& first) {
  SimulatorState s{first.width, first.height, {}};
  s.pixels.reserve(first.values.size());
  for (double l : first.values) s.pixels.push_back({l, std::nullopt});
  return s;
}

inline SimulatorState initial_state(const IntensityFrame& first, const SimulatorConfig& cfg) {
  return initial_state(log_transform(first, cfg.log_eps));
}

namespace detail {

// Slack for threshold comparisons so that a ramp of exactly k*C yields k
// crossings despite rounding in the log transform.
inline constexpr double kCrossingSlack = 1e-9;

inline bool event_order(const Event& a, const Event& b) {
  if (a.t != b.t) return a.t < b.t;
  if (a.y != b.y) return a.y < b.y;
  if (a.x != b.x) return a.x < b.x;
  return a.p < b.p;
}

}  // namespace detail

// Simulates one linear segment between two log-intensity planes. Events are
// appended to `out` unsorted; `state` is advanced in place.
inline void simulate_log_segment(const LogPlane& prev, const LogPlane& next, SimulatorState& state,
                                 const SimulatorConfig& cfg, std::vector<Event>& out) {
  if (prev.width != next.width || prev.height != next.height || state.width != prev.width ||
      state.height != prev.height || prev.values.size() != next.values.size() ||
      state.pixels.size() != prev.values.size()) {
    throw ShapeMismatchError("frames and simulator state must share one size");
  }
  if (!(prev.t < next.t)) throw ValidationError("frame timestamps must strictly increase");
  const Timestamp refractory = cfg.refractory_us();
  const double duration = static_cast<double>(next.t - prev.t);
  for (int y = 0; y < prev.height; ++y) {
    for (int x = 0; x < prev.width; ++x) {
      const std::size_t idx = static_cast<std::size_t>(y) * prev.width + x;
      PixelState& px = state.pixels[idx];
      const double l0 = prev.values[idx];
      const double l1 = next.values[idx];
      const double delta = l1 - l0;
      if (delta == 0.0) continue;
      const bool rising = delta > 0.0;
      const double threshold = rising ? cfg.cp : cfg.cn;
      const double step = rising ? threshold : -threshold;
      const double base = px.ref_log_intensity;
      for (std::int64_t k = 1;; ++k) {
        const double level = base + static_cast<double>(k) * step;
        const double remaining = rising ? (l1 - level) : (level - l1);
        if (remaining < -detail::kCrossingSlack) break;
        px.ref_log_intensity = level;
        // Crossing may lie before prev.t when the reference lagged behind; clamp.
        const double frac = std::clamp((level - l0) / delta, 0.0, 1.0);
        const Timestamp tc = prev.t + static_cast<Timestamp>(std::llround(frac * duration));
        if (px.last_event_time && tc - *px.last_event_time < refractory) continue;
        px.last_event_time = tc;
        out.push_back({static_cast<std::uint16_t>(x), static_cast<std::uint16_t>(y), tc,
                       static_cast<std::int8_t>(rising ? 1 : -1)});
      }
    }
  }
}

struct PairResult {
  std::vector<Event> events;  // sorted by (t, y, x, p)
  SimulatorState state;
};

inline PairResult simulate_pair(const IntensityFrame& prev, const IntensityFrame& next,
                                SimulatorState state, const SimulatorConfig& cfg) {
  cfg.validate();
  if (prev.width != next.width || prev.height != next.height) {
    throw ShapeMismatchError("frame sizes differ");
  }
  prev.validate();
  next.validate();
  PairResult result{{}, std::move(state)};
  simulate_log_segment(log_transform(prev, cfg.log_eps), log_transform(next, cfg.log_eps),
                       result.state, cfg, result.events);
  std::sort(result.events.begin(), result.events.end(), detail::event_order);
  return result;
}

inline EventStream simulate_log_sequence(std::span<const LogPlane> planes,
                                         const SimulatorConfig& cfg) {
  cfg.validate();
  if (planes.size() < 2) throw ValidationError("simulation needs at least two frames");
  const int w = planes.front().width;
  const int h = planes.front().height;
  if (w <= 0 || h <= 0 || w > 65535 || h > 65535) throw ValidationError("frame size out of range");
  EventStream stream{static_cast<std::uint16_t>(w), static_cast<std::uint16_t>(h), {}};
  SimulatorState state = initial_state(planes.front());
  for (std::size_t i = 1; i < planes.size(); ++i) {
    simulate_log_segment(planes[i - 1], planes[i], state, cfg, stream.events);
  }
  std::sort(stream.events.begin(), stream.events.end(), detail::event_order);
  return stream;
}

inline EventStream simulate_sequence(std::span<const IntensityFrame> frames,
                                     const SimulatorConfig& cfg) {
  cfg.validate();
  if (frames.size() < 2) throw ValidationError("simulation needs at least two frames");
  std::vector<LogPlane> planes;
  planes.reserve(frames.size());
  for (const auto& f : frames) {
    if (f.width != frames.front().width || f.height != frames.front().height) {
      throw ShapeMismatchError("frame sizes differ within sequence");
    }
    f.validate();
    planes.push_back(log_transform(f, cfg.log_eps));
  }
  return simulate_log_sequence(planes, cfg);
}

// ---------------------------------------------------------------------------
// Frame input: 8-bit binary PGM (P5), intensities mapped by /255.

inline IntensityFrame parse_pgm(std::span<const std::uint8_t> bytes, Timestamp t) {
  std::size_t pos = 0;
  auto skip_space = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto read_int = [&]() -> int {
    skip_space();
    int v = 0;
    const std::size_t start = pos;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) {
      v = v * 10 + (bytes[pos] - '0');
      if (v > 1'000'000) throw FormatError("PGM header value too large", start);
      ++pos;
    }
    if (pos == start) throw FormatError("PGM header: expected integer", pos);
    return v;
  };
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') {
    throw FormatError("only binary PGM (P5) is supported", 0);
  }
  pos = 2;
  IntensityFrame f;
  f.width = read_int();
  f.height = read_int();
  const int maxval = read_int();
  if (maxval != 255) throw FormatError("PGM maxval must be 255", pos);
  if (pos >= bytes.size() || !std::isspace(bytes[pos])) throw FormatError("PGM header terminator", pos);
  ++pos;
  const std::size_t n = static_cast<std::size_t>(f.width) * f.height;
  if (bytes.size() - pos != n) throw FormatError("PGM pixel payload size mismatch", pos);
  f.values.resize(n);
  for (std::size_t i = 0; i < n; ++i) f.values[i] = bytes[pos + i] / 255.0;
  f.t = t;
  return f;
}

inline std::vector<std::uint8_t> encode_pgm(int width, int height,
                                            std::span<const std::uint8_t> pixels) {
  const std::string header = "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), pixels.begin(), pixels.end());
  return out;
}

inline std::vector<Timestamp> read_timestamps(const std::filesystem::path& path) {
  std::vector<Timestamp> ts;
  const auto lines = detail::read_lines(path);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (detail::trim(lines[i]).empty()) continue;
    const auto v = detail::parse_number<Timestamp>(lines[i]);
    if (!v || *v < 0) throw FormatError("bad timestamp", i + 1);
    ts.push_back(*v);
  }
  return ts;
}

// Frames are the *.pgm files of `dir` in lexicographic filename order,
// paired one-to-one with the timestamps file.
inline std::vector<IntensityFrame> read_frame_directory(const std::filesystem::path& dir,
                                                        const std::filesystem::path& timestamps) {
  if (!std::filesystem::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  const auto ts = read_timestamps(timestamps);
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".pgm") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  if (files.size() != ts.size()) {
    throw ValidationError(std::to_string(files.size()) + " frames but " +
                          std::to_string(ts.size()) + " timestamps");
  }
  std::vector<IntensityFrame> frames;
  frames.reserve(files.size());
  for (std::size_t i = 0; i < files.size(); ++i) {
    frames.push_back(parse_pgm(detail::read_bytes(files[i]), ts[i]));
  }
  return frames;
}

}  // namespace evpose
