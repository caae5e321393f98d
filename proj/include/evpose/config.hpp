#pragma once

// Every tunable of the toolchain as one flat `key = value` configuration.
// Config files and command-line flags share key names one to one.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "evpose/detail/io_util.hpp"
#include "evpose/errors.hpp"
#include "evpose/evaluation.hpp"
#include "evpose/geometry.hpp"
#include "evpose/lifting.hpp"
#include "evpose/representations.hpp"
#include "evpose/simulator.hpp"

namespace evpose {

struct RunConfig {
  std::size_t window_events = kDefaultWindowEvents;
  int voxel_bins = kDefaultVoxelBins;
  CountMode count_mode = CountMode::unsigned_count;
  int heatmap_resolution = 64;
  double sigma = 2.0;
  double depth_half_extent = 1000.0;
  double temperature = 1.0;
  double epsilon = 1e-8;
  double geometric_weight = 1.0;
  double divergence_weight = 1.0;
  double cp = 0.2;
  double cn = 0.2;
  double log_eps = 1e-3;
  double refractory_period = 1e-4;
  double lr = 3e-4;
  std::uint64_t seed = 0;
  int epochs = 10;
  std::size_t batch_size = 32;
  double init_std = 1e-3;
  int pool = 32;
  int stages = 1;
  std::size_t frame_stride = 64;
  std::set<int> train_subjects;
  std::set<int> test_subjects;
  int sensor_width = 346;
  int sensor_height = 260;
  int threads = 1;

  struct Key {
    std::string name;
    std::string help;
    std::function<void(RunConfig&, std::string_view)> set;
    std::function<std::string(const RunConfig&)> get;
  };

  static const std::vector<Key>& keys();

  void set(std::string_view key, std::string_view value) {
    for (const auto& k : keys()) {
      if (k.name == key) {
        k.set(*this, detail::trim(value));
        return;
      }
    }
    throw ConfigError("unknown config key '" + std::string(key) + "'");
  }

  std::string get(std::string_view key) const {
    for (const auto& k : keys()) {
      if (k.name == key) return k.get(*this);
    }
    throw ConfigError("unknown config key '" + std::string(key) + "'");
  }

  void load_file(const std::filesystem::path& path) {
    std::map<std::string, std::string> kv;
    try {
      kv = detail::parse_key_values(detail::read_lines(path));
    } catch (const FormatError& e) {
      throw ConfigError(std::string("config file: ") + e.what());
    }
    for (const auto& [k, v] : kv) set(k, v);
  }

  std::string dump() const {
    std::string out;
    for (const auto& k : keys()) out += k.name + " = " + k.get(*this) + "\n";
    return out;
  }

  void validate() const {
    if (window_events < 1) throw ConfigError("window_events must be >= 1");
    if (voxel_bins < 1) throw ConfigError("voxel_bins must be >= 1");
    if (sensor_width < 1 || sensor_width > 65535 || sensor_height < 1 || sensor_height > 65535) {
      throw ConfigError("sensor size out of range");
    }
    if (pool < 1) throw ConfigError("pool must be >= 1");
    if (stages < 1) throw ConfigError("stages must be >= 1");
    if (threads < 1) throw ConfigError("threads must be >= 1");
    heatmap_spec().validate();
    simulator().validate();
    loss().validate();
    training().validate();
    protocol().validate();
  }

  HeatmapSpec heatmap_spec() const { return {heatmap_resolution, sigma}; }
  SimulatorConfig simulator() const { return {cp, cn, log_eps, refractory_period}; }
  LossConfig loss() const { return {temperature, epsilon, geometric_weight, divergence_weight}; }
  SensorSize sensor() const {
    return {static_cast<std::uint16_t>(sensor_width), static_cast<std::uint16_t>(sensor_height)};
  }
  ProtocolConfig protocol() const { return {train_subjects, test_subjects, frame_stride}; }
  TrainConfig training() const {
    TrainConfig t;
    t.epochs = epochs;
    t.batch_size = batch_size;
    t.adam.lr = lr;
    t.loss = loss();
    t.seed = seed;
    t.init_std = init_std;
    return t;
  }
};

namespace detail {

template <class T>
T config_number(std::string_view key, std::string_view text) {
  const auto v = parse_number<T>(text);
  if (!v) throw ConfigError("config key '" + std::string(key) + "': cannot parse '" + std::string(text) + "'");
  if constexpr (std::is_floating_point_v<T>) {
    if (!std::isfinite(*v)) throw ConfigError("config key '" + std::string(key) + "' must be finite");
  }
  return *v;
}

inline std::set<int> config_subjects(std::string_view key, std::string_view text) {
  std::set<int> out;
  if (trim(text).empty()) return out;
  for (auto tok : split(text, ',')) out.insert(config_number<int>(key, tok));
  return out;
}

inline std::string subjects_text(const std::set<int>& s) {
  std::string out;
  for (int v : s) out += (out.empty() ? "" : ",") + std::to_string(v);
  return out;
}

template <class T>
std::string number_text(T v) {
  if constexpr (std::is_floating_point_v<T>) {
    return format_double(v);
  } else {
    return std::to_string(v);
  }
}

}  // namespace detail

#define EVPOSE_NUMERIC_KEY(field, help)                                                   \
  RunConfig::Key {                                                                        \
    #field, help,                                                                         \
        [](RunConfig& c, std::string_view v) {                                            \
          c.field = detail::config_number<decltype(c.field)>(#field, v);                  \
        },                                                                                \
        [](const RunConfig& c) { return detail::number_text(c.field); }                   \
  }

inline const std::vector<RunConfig::Key>& RunConfig::keys() {
  static const std::vector<Key> table = {
      EVPOSE_NUMERIC_KEY(window_events, "events per window (N)"),
      EVPOSE_NUMERIC_KEY(voxel_bins, "temporal bins of the voxel grid (B)"),
      Key{"count_mode", "constant-count mode: unsigned-count | signed-sum | two-channel",
          [](RunConfig& c, std::string_view v) { c.count_mode = parse_count_mode(v); },
          [](const RunConfig& c) { return std::string(to_string(c.count_mode)); }},
      EVPOSE_NUMERIC_KEY(heatmap_resolution, "heatmap side length in pixels (R)"),
      EVPOSE_NUMERIC_KEY(sigma, "heatmap Gaussian std in pixels"),
      EVPOSE_NUMERIC_KEY(depth_half_extent, "half depth of the normalized cube, mm"),
      EVPOSE_NUMERIC_KEY(temperature, "softmax temperature"),
      EVPOSE_NUMERIC_KEY(epsilon, "per-cell smoothing of the divergence"),
      EVPOSE_NUMERIC_KEY(geometric_weight, "weight of the geometric loss term"),
      EVPOSE_NUMERIC_KEY(divergence_weight, "weight of the divergence loss terms"),
      EVPOSE_NUMERIC_KEY(cp, "positive contrast threshold"),
      EVPOSE_NUMERIC_KEY(cn, "negative contrast threshold"),
      EVPOSE_NUMERIC_KEY(log_eps, "constant added before the log transform"),
      EVPOSE_NUMERIC_KEY(refractory_period, "simulator refractory period, seconds"),
      EVPOSE_NUMERIC_KEY(lr, "Adam learning rate"),
      EVPOSE_NUMERIC_KEY(seed, "random seed"),
      EVPOSE_NUMERIC_KEY(epochs, "training epochs"),
      EVPOSE_NUMERIC_KEY(batch_size, "training batch size"),
      EVPOSE_NUMERIC_KEY(init_std, "std of the toy predictor's initial weights"),
      EVPOSE_NUMERIC_KEY(pool, "toy predictor input pooling size (pool x pool)"),
      EVPOSE_NUMERIC_KEY(stages, "stages emitted by the oracle predictor"),
      EVPOSE_NUMERIC_KEY(frame_stride, "test-frame sampling stride"),
      Key{"train_subjects", "comma-separated training subject ids",
          [](RunConfig& c, std::string_view v) { c.train_subjects = detail::config_subjects("train_subjects", v); },
          [](const RunConfig& c) { return detail::subjects_text(c.train_subjects); }},
      Key{"test_subjects", "comma-separated test subject ids",
          [](RunConfig& c, std::string_view v) { c.test_subjects = detail::config_subjects("test_subjects", v); },
          [](const RunConfig& c) { return detail::subjects_text(c.test_subjects); }},
      EVPOSE_NUMERIC_KEY(sensor_width, "sensor width for CSV event input"),
      EVPOSE_NUMERIC_KEY(sensor_height, "sensor height for CSV event input"),
      EVPOSE_NUMERIC_KEY(threads, "worker threads (outputs do not depend on it)"),
  };
  return table;
}

#undef EVPOSE_NUMERIC_KEY

}  // namespace evpose
