#pragma once

// Fixed-count event windows and the two synchronous representations built
// from them: constant-count frames and spatio-temporal voxel grids.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "evpose/detail/io_util.hpp"
#include "evpose/errors.hpp"
#include "evpose/events_io.hpp"
#include "evpose/tensor_io.hpp"

namespace evpose {

inline constexpr std::size_t kDefaultWindowEvents = 7500;
inline constexpr int kDefaultVoxelBins = 4;

// A view into an EventStream; it must not outlive the stream's storage.
struct EventWindow {
  std::span<const Event> events;
  std::uint16_t width = 0;
  std::uint16_t height = 0;
  Timestamp t_start = 0;
  Timestamp t_end = 0;
  std::size_t index = 0;
};

inline EventWindow make_window(std::span<const Event> events, std::uint16_t width,
                               std::uint16_t height, std::size_t index = 0) {
  if (events.empty()) throw ValidationError("event window is empty");
  for (std::size_t i = 1; i < events.size(); ++i) {
    if (events[i].t < events[i - 1].t) throw OrderError("window events out of order");
  }
  return {events, width, height, events.front().t, events.back().t, index};
}

// Consecutive non-overlapping windows of exactly `n` events; a trailing
// remainder shorter than `n` is dropped.
inline std::vector<EventWindow> window_stream(const EventStream& stream, std::size_t n) {
  if (n == 0) throw ConfigError("window size must be >= 1");
  std::vector<EventWindow> windows;
  const std::size_t count = stream.events.size() / n;
  windows.reserve(count);
  const std::span<const Event> all(stream.events);
  for (std::size_t w = 0; w < count; ++w) {
    windows.push_back(make_window(all.subspan(w * n, n), stream.width, stream.height, w));
  }
  return windows;
}

// ---------------------------------------------------------------------------
// Constant-count frames

enum class CountMode { unsigned_count, signed_sum, two_channel };

inline std::string_view to_string(CountMode m) {
  switch (m) {
    case CountMode::unsigned_count: return "unsigned-count";
    case CountMode::signed_sum: return "signed-sum";
    case CountMode::two_channel: return "two-channel";
  }
  return "unknown";
}

inline CountMode parse_count_mode(std::string_view s) {
  if (s == "unsigned-count") return CountMode::unsigned_count;
  if (s == "signed-sum") return CountMode::signed_sum;
  if (s == "two-channel") return CountMode::two_channel;
  throw ConfigError("unknown count mode '" + std::string(s) + "'");
}

struct ConstantCountFrame {
  int width = 0;
  int height = 0;
  CountMode mode = CountMode::unsigned_count;
  int channels = 1;  // 2 for two-channel: [0] positive, [1] negative
  std::vector<double> values;  // channel-major, then row-major
  Timestamp t_start = 0;
  Timestamp t_end = 0;
  std::size_t event_count = 0;
  double norm_max = 0.0;  // max |value|, for display scaling

  double at(int channel, int x, int y) const {
    return values[(static_cast<std::size_t>(channel) * height + y) * width + x];
  }
};

inline ConstantCountFrame constant_count(const EventWindow& window,
                                         CountMode mode = CountMode::unsigned_count) {
  ConstantCountFrame f;
  f.width = window.width;
  f.height = window.height;
  f.mode = mode;
  f.channels = mode == CountMode::two_channel ? 2 : 1;
  f.t_start = window.t_start;
  f.t_end = window.t_end;
  f.event_count = window.events.size();
  const std::size_t plane = static_cast<std::size_t>(f.width) * f.height;
  f.values.assign(plane * f.channels, 0.0);
  for (const Event& e : window.events) {
    const std::size_t px = static_cast<std::size_t>(e.y) * f.width + e.x;
    switch (mode) {
      case CountMode::unsigned_count: f.values[px] += 1.0; break;
      case CountMode::signed_sum: f.values[px] += e.p; break;
      case CountMode::two_channel: f.values[(e.p > 0 ? 0 : plane) + px] += 1.0; break;
    }
  }
  for (double v : f.values) f.norm_max = std::max(f.norm_max, std::abs(v));
  return f;
}

// ---------------------------------------------------------------------------
// Voxel grids

// Position of `t` inside [t0, tn] rescaled to [0, bins-1]; 0 when the
// window has zero duration.
inline double normalized_timestamp(Timestamp t, Timestamp t0, Timestamp tn, int bins) {
  if (tn == t0) return 0.0;
  return static_cast<double>(bins - 1) * static_cast<double>(t - t0) /
         static_cast<double>(tn - t0);
}

// The only two bins a unit tent centred on t_star touches. hi_bin is -1 when
// t_star sits exactly on the last bin.
struct TentWeights {
  int lo_bin = 0;
  double lo_weight = 1.0;
  int hi_bin = -1;
  double hi_weight = 0.0;
};

inline TentWeights tent_weights(double t_star, int bins) {
  const double clamped = std::clamp(t_star, 0.0, static_cast<double>(bins - 1));
  const int lo = std::min(static_cast<int>(std::floor(clamped)), bins - 1);
  const double frac = clamped - lo;
  TentWeights w{lo, 1.0 - frac, -1, 0.0};
  if (lo + 1 < bins) {
    w.hi_bin = lo + 1;
    w.hi_weight = frac;
  }
  return w;
}

struct VoxelGrid {
  int bins = kDefaultVoxelBins;
  int width = 0;
  int height = 0;
  std::vector<double> values;  // [bin][y][x]
  Timestamp t_start = 0;
  Timestamp t_end = 0;
  std::size_t event_count = 0;

  double at(int bin, int x, int y) const {
    return values[(static_cast<std::size_t>(bin) * height + y) * width + x];
  }
};

inline VoxelGrid voxelize(const EventWindow& window, int bins = kDefaultVoxelBins) {
  if (bins < 1) throw ConfigError("voxel bins must be >= 1");
  VoxelGrid g;
  g.bins = bins;
  g.width = window.width;
  g.height = window.height;
  g.t_start = window.t_start;
  g.t_end = window.t_end;
  g.event_count = window.events.size();
  const std::size_t plane = static_cast<std::size_t>(g.width) * g.height;
  g.values.assign(plane * bins, 0.0);
  for (const Event& e : window.events) {
    const auto w = tent_weights(normalized_timestamp(e.t, window.t_start, window.t_end, bins), bins);
    const std::size_t px = static_cast<std::size_t>(e.y) * g.width + e.x;
    g.values[static_cast<std::size_t>(w.lo_bin) * plane + px] += e.p * w.lo_weight;
    if (w.hi_bin >= 0) g.values[static_cast<std::size_t>(w.hi_bin) * plane + px] += e.p * w.hi_weight;
  }
  return g;
}

// Divides by the largest magnitude: non-negative input lands in [0,1],
// signed input in [-1,1]. All-zero input stays all-zero.
inline std::vector<double> normalize_for_input(std::span<const double> values) {
  if (values.empty()) throw ValidationError("normalize_for_input: empty tensor");
  double peak = 0.0;
  for (double v : values) peak = std::max(peak, std::abs(v));
  std::vector<double> out(values.begin(), values.end());
  if (peak == 0.0) return out;
  for (double& v : out) v /= peak;
  return out;
}

inline std::vector<double> normalize_for_input(const ConstantCountFrame& f) {
  return normalize_for_input(std::span<const double>(f.values));
}

inline std::vector<double> normalize_for_input(const VoxelGrid& g) {
  return normalize_for_input(std::span<const double>(g.values));
}

// ---------------------------------------------------------------------------
// Serialization

inline Tensor to_tensor(const ConstantCountFrame& f) {
  Tensor t;
  t.dims = {static_cast<std::size_t>(f.channels), static_cast<std::size_t>(f.height),
            static_cast<std::size_t>(f.width)};
  t.data = f.values;
  t.meta["kind"] = "count";
  t.meta["mode"] = std::string(to_string(f.mode));
  t.meta["N"] = std::to_string(f.event_count);
  t.meta["t_start"] = std::to_string(f.t_start);
  t.meta["t_end"] = std::to_string(f.t_end);
  t.meta["norm_max"] = detail::format_double(f.norm_max);
  return t;
}

inline Tensor to_tensor(const VoxelGrid& g) {
  Tensor t;
  t.dims = {static_cast<std::size_t>(g.bins), static_cast<std::size_t>(g.height),
            static_cast<std::size_t>(g.width)};
  t.data = g.values;
  t.meta["kind"] = "voxel";
  t.meta["B"] = std::to_string(g.bins);
  t.meta["N"] = std::to_string(g.event_count);
  t.meta["t_start"] = std::to_string(g.t_start);
  t.meta["t_end"] = std::to_string(g.t_end);
  return t;
}

}  // namespace evpose
