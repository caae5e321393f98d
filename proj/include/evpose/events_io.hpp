#pragma once

// Event, skeleton and calibration data model plus every on-disk format.
//
// Binary event file (little-endian):
//   offset 0   "EVL1"
//   offset 4   u16 sensor_width
//   offset 6   u16 sensor_height
//   offset 8   u64 event_count
//   offset 16  event_count records of 13 bytes: u16 x, u16 y, u64 t (us), i8 p
//
// CSV event file: header `x,y,t,p`, one event per line. The sensor size is
// not stored and must be supplied by the reader.
//
// Skeleton CSV: header `t,subject,movement,camera,j0x,j0y,j0z,...,j12z`,
// world coordinates in millimeters, joints in kJointNames order.
//
// Calibration: `key = values` with fx, fy, cx, cy, R (9 values, row-major,
// world to camera), t (3 values, mm) and optionally width, height (pixels).

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "evpose/detail/io_util.hpp"
#include "evpose/errors.hpp"
#include "evpose/types.hpp"

namespace evpose {

inline constexpr std::size_t kNumJoints = 13;

inline constexpr std::array<std::string_view, kNumJoints> kJointNames = {
    "head",   "shoulderR", "shoulderL", "elbowR", "elbowL", "hipR",  "hipL",
    "handR",  "handL",     "kneeR",     "kneeL",  "footR",  "footL"};

inline constexpr std::size_t kHeadJoint = 0;

inline std::optional<std::size_t> joint_index(std::string_view name) {
  for (std::size_t i = 0; i < kJointNames.size(); ++i) {
    if (kJointNames[i] == name) return i;
  }
  return std::nullopt;
}

struct SensorSize {
  std::uint16_t width = 346;
  std::uint16_t height = 260;
};

struct Event {
  std::uint16_t x = 0;
  std::uint16_t y = 0;
  Timestamp t = 0;
  std::int8_t p = 1;

  friend bool operator==(const Event&, const Event&) = default;
};

struct EventStream {
  std::uint16_t width = 346;
  std::uint16_t height = 260;
  std::vector<Event> events;

  friend bool operator==(const EventStream&, const EventStream&) = default;
};

enum class EventFormat { binary, csv };

inline EventFormat event_format_from_path(const std::filesystem::path& path) {
  return path.extension() == ".csv" ? EventFormat::csv : EventFormat::binary;
}

namespace detail {

inline constexpr std::array<std::uint8_t, 4> kEventMagic = {'E', 'V', 'L', '1'};
inline constexpr std::size_t kEventHeaderBytes = 16;
inline constexpr std::size_t kEventRecordBytes = 13;

// Shared per-event check; `where` is a line (csv) or byte offset (binary).
inline void check_event(const Event& e, std::uint16_t width, std::uint16_t height,
                        std::size_t where) {
  if (e.x >= width || e.y >= height) {
    throw FormatError("event coordinate (" + std::to_string(e.x) + "," + std::to_string(e.y) +
                          ") outside sensor " + std::to_string(width) + "x" +
                          std::to_string(height),
                      where);
  }
  if (e.p != 1 && e.p != -1) {
    throw FormatError("polarity must be -1 or +1, got " + std::to_string(e.p), where);
  }
  if (e.t < 0) throw FormatError("negative timestamp", where);
}

}  // namespace detail

// Throws FormatError / OrderError on the first violated invariant.
inline void validate(const EventStream& stream) {
  for (std::size_t i = 0; i < stream.events.size(); ++i) {
    detail::check_event(stream.events[i], stream.width, stream.height, i);
    if (i > 0 && stream.events[i].t < stream.events[i - 1].t) {
      throw OrderError("timestamp decreases at event " + std::to_string(i));
    }
  }
}

inline std::vector<std::uint8_t> encode_events_binary(const EventStream& stream) {
  validate(stream);
  std::vector<std::uint8_t> out(detail::kEventMagic.begin(), detail::kEventMagic.end());
  out.reserve(detail::kEventHeaderBytes + detail::kEventRecordBytes * stream.events.size());
  detail::put_le<std::uint16_t>(out, stream.width);
  detail::put_le<std::uint16_t>(out, stream.height);
  detail::put_le<std::uint64_t>(out, stream.events.size());
  for (const Event& e : stream.events) {
    detail::put_le<std::uint16_t>(out, e.x);
    detail::put_le<std::uint16_t>(out, e.y);
    detail::put_le<std::uint64_t>(out, static_cast<std::uint64_t>(e.t));
    detail::put_le<std::int8_t>(out, e.p);
  }
  return out;
}

inline EventStream decode_events_binary(std::span<const std::uint8_t> bytes) {
  EventStream stream;
  if (bytes.empty()) return stream;
  if (bytes.size() < detail::kEventHeaderBytes) {
    throw FormatError("truncated header", bytes.size());
  }
  if (!std::equal(detail::kEventMagic.begin(), detail::kEventMagic.end(), bytes.begin())) {
    throw FormatError("bad magic, expected EVL1", 0);
  }
  stream.width = detail::get_le<std::uint16_t>(bytes, 4);
  stream.height = detail::get_le<std::uint16_t>(bytes, 6);
  const auto count = detail::get_le<std::uint64_t>(bytes, 8);
  const std::size_t payload = bytes.size() - detail::kEventHeaderBytes;
  if (payload % detail::kEventRecordBytes != 0 || payload / detail::kEventRecordBytes != count) {
    throw FormatError("event_count " + std::to_string(count) + " disagrees with file size " +
                          std::to_string(bytes.size()),
                      8);
  }
  stream.events.reserve(count);
  Timestamp previous = 0;
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t off = detail::kEventHeaderBytes + i * detail::kEventRecordBytes;
    const auto raw_t = detail::get_le<std::uint64_t>(bytes, off + 4);
    if (raw_t > static_cast<std::uint64_t>(INT64_MAX)) throw FormatError("timestamp overflow", off + 4);
    Event e{detail::get_le<std::uint16_t>(bytes, off), detail::get_le<std::uint16_t>(bytes, off + 2),
            static_cast<Timestamp>(raw_t), detail::get_le<std::int8_t>(bytes, off + 12)};
    detail::check_event(e, stream.width, stream.height, off);
    if (i > 0 && e.t < previous) {
      throw OrderError("timestamp decreases at byte offset " + std::to_string(off));
    }
    previous = e.t;
    stream.events.push_back(e);
  }
  return stream;
}

inline std::string encode_events_csv(const EventStream& stream) {
  validate(stream);
  std::string out = "x,y,t,p\n";
  out.reserve(out.size() + stream.events.size() * 20);
  for (const Event& e : stream.events) {
    out += std::to_string(e.x);
    out += ',';
    out += std::to_string(e.y);
    out += ',';
    out += std::to_string(e.t);
    out += ',';
    out += std::to_string(static_cast<int>(e.p));
    out += '\n';
  }
  return out;
}

inline EventStream decode_events_csv(const std::vector<std::string>& lines, SensorSize sensor) {
  EventStream stream{sensor.width, sensor.height, {}};
  if (lines.empty()) return stream;
  if (detail::trim(lines.front()) != "x,y,t,p") throw FormatError("expected header x,y,t,p", 1);
  stream.events.reserve(lines.size() - 1);
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const std::size_t line_no = i + 1;
    const auto fields = detail::split(lines[i], ',');
    if (fields.size() != 4) throw FormatError("expected 4 fields", line_no);
    const auto x = detail::parse_number<std::int64_t>(fields[0]);
    const auto y = detail::parse_number<std::int64_t>(fields[1]);
    const auto t = detail::parse_number<std::int64_t>(fields[2]);
    const auto p = detail::parse_number<std::int64_t>(fields[3]);
    if (!x || !y || !t || !p) throw FormatError("malformed integer field", line_no);
    if (*x < 0 || *y < 0 || *x >= sensor.width || *y >= sensor.height) {
      throw FormatError("event coordinate outside sensor", line_no);
    }
    if (*p != 1 && *p != -1) throw FormatError("polarity must be -1 or +1", line_no);
    Event e{static_cast<std::uint16_t>(*x), static_cast<std::uint16_t>(*y), *t,
            static_cast<std::int8_t>(*p)};
    detail::check_event(e, sensor.width, sensor.height, line_no);
    if (!stream.events.empty() && e.t < stream.events.back().t) {
      throw OrderError("timestamp decreases at line " + std::to_string(line_no));
    }
    stream.events.push_back(e);
  }
  return stream;
}

// `sensor` is only consulted for CSV input; binary files carry their own.
inline EventStream read_events(const std::filesystem::path& path, EventFormat format,
                               SensorSize sensor = {}) {
  if (format == EventFormat::binary) return decode_events_binary(detail::read_bytes(path));
  return decode_events_csv(detail::read_lines(path), sensor);
}

inline void write_events(const EventStream& stream, const std::filesystem::path& path,
                         EventFormat format) {
  if (format == EventFormat::binary) {
    detail::write_bytes(path, encode_events_binary(stream));
  } else {
    detail::write_text(path, encode_events_csv(stream));
  }
}

// ---------------------------------------------------------------------------
// Skeletons

struct SkeletonSample {
  Timestamp t = 0;
  int subject_id = 0;
  std::string movement;
  int camera_id = 0;
  std::array<Vec3, kNumJoints> joints{};

  friend bool operator==(const SkeletonSample&, const SkeletonSample&) = default;
};

inline std::string skeleton_csv_header() {
  std::string header = "t,subject,movement,camera";
  for (std::size_t j = 0; j < kNumJoints; ++j) {
    for (char axis : {'x', 'y', 'z'}) {
      header += ",j" + std::to_string(j) + axis;
    }
  }
  return header;
}

inline std::vector<SkeletonSample> parse_skeletons(const std::vector<std::string>& lines) {
  constexpr std::size_t kFields = 4 + 3 * kNumJoints;
  if (lines.empty()) throw FormatError("missing skeleton header", 1);
  const auto header_fields = detail::split(detail::trim(lines.front()), ',');
  if (header_fields.size() != kFields) {
    throw JointCountError("skeleton header has " + std::to_string(header_fields.size()) +
                          " columns, expected " + std::to_string(kFields));
  }
  if (detail::trim(lines.front()) != skeleton_csv_header()) {
    throw FormatError("unexpected skeleton header", 1);
  }
  std::vector<SkeletonSample> samples;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const std::size_t line_no = i + 1;
    if (detail::trim(lines[i]).empty()) {
      if (i + 1 == lines.size()) break;
      throw FormatError("blank line", line_no);
    }
    const auto fields = detail::split(lines[i], ',');
    if (fields.size() != kFields) {
      throw JointCountError("line " + std::to_string(line_no) + " has " +
                            std::to_string(fields.size()) + " fields, expected " +
                            std::to_string(kFields));
    }
    SkeletonSample s;
    const auto t = detail::parse_number<std::int64_t>(fields[0]);
    const auto subject = detail::parse_number<int>(fields[1]);
    const auto camera = detail::parse_number<int>(fields[3]);
    if (!t || !subject || !camera) throw FormatError("malformed skeleton metadata", line_no);
    s.t = *t;
    s.subject_id = *subject;
    s.movement = std::string(detail::trim(fields[2]));
    s.camera_id = *camera;
    for (std::size_t j = 0; j < kNumJoints; ++j) {
      std::array<double, 3> c{};
      for (std::size_t a = 0; a < 3; ++a) {
        const auto v = detail::parse_number<double>(fields[4 + 3 * j + a]);
        if (!v || !std::isfinite(*v)) throw FormatError("non-finite joint coordinate", line_no);
        c[a] = *v;
      }
      s.joints[j] = {c[0], c[1], c[2]};
    }
    samples.push_back(std::move(s));
  }
  std::stable_sort(samples.begin(), samples.end(),
                   [](const SkeletonSample& a, const SkeletonSample& b) { return a.t < b.t; });
  return samples;
}

inline std::vector<SkeletonSample> read_skeletons(const std::filesystem::path& path) {
  return parse_skeletons(detail::read_lines(path));
}

inline void write_skeletons(std::span<const SkeletonSample> samples,
                            const std::filesystem::path& path) {
  std::string out = skeleton_csv_header() + "\n";
  for (const auto& s : samples) {
    if (s.movement.find(',') != std::string::npos) {
      throw ValidationError("movement label may not contain ','");
    }
    out += std::to_string(s.t) + "," + std::to_string(s.subject_id) + "," + s.movement + "," +
           std::to_string(s.camera_id);
    for (const Vec3& j : s.joints) {
      out += "," + detail::format_double(j.x) + "," + detail::format_double(j.y) + "," +
             detail::format_double(j.z);
    }
    out += '\n';
  }
  detail::write_text(path, out);
}

// Per-joint, per-axis linear interpolation between the bracketing samples.
// Metadata comes from the earlier bracketing sample; the result carries t_query.
inline SkeletonSample interpolate_joints(std::span<const SkeletonSample> samples,
                                         Timestamp t_query) {
  if (samples.empty()) throw ValidationError("interpolate_joints: no samples");
  if (t_query < samples.front().t || t_query > samples.back().t) {
    throw OutOfRangeError("t=" + std::to_string(t_query) + " outside ground-truth span [" +
                          std::to_string(samples.front().t) + ", " +
                          std::to_string(samples.back().t) + "]");
  }
  const auto hit = std::lower_bound(
      samples.begin(), samples.end(), t_query,
      [](const SkeletonSample& s, Timestamp t) { return s.t < t; });
  if (hit->t == t_query) return *hit;
  const SkeletonSample& hi = *hit;
  const SkeletonSample& lo = *(hit - 1);
  const double alpha = static_cast<double>(t_query - lo.t) / static_cast<double>(hi.t - lo.t);
  SkeletonSample out = lo;
  out.t = t_query;
  for (std::size_t j = 0; j < kNumJoints; ++j) {
    out.joints[j] = lo.joints[j] + alpha * (hi.joints[j] - lo.joints[j]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Calibration

struct CameraCalibration {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  Mat3 R{};
  Vec3 tvec{};
  int width = 346;
  int height = 260;

  friend bool operator==(const CameraCalibration&, const CameraCalibration&) = default;
};

inline void validate(const CameraCalibration& c) {
  if (!(c.fx > 0.0) || !(c.fy > 0.0)) throw ValidationError("focal lengths must be positive");
  if (c.width <= 0 || c.height <= 0) throw ValidationError("image size must be positive");
  if (c.R.orthonormality_error() > 1e-6 || std::abs(c.R.determinant() - 1.0) > 1e-6) {
    throw ValidationError("R must be a rotation (orthonormal, det +1)");
  }
}

inline CameraCalibration parse_calibration(const std::vector<std::string>& lines) {
  const auto kv = detail::parse_key_values(lines);
  auto values = [&](const std::string& key, std::size_t count, bool required) {
    std::vector<double> out;
    const auto it = kv.find(key);
    if (it == kv.end()) {
      if (required) throw FormatError("calibration missing key '" + key + "'", 0);
      return out;
    }
    for (auto token : detail::split_ws(it->second)) {
      const auto v = detail::parse_number<double>(token);
      if (!v || !std::isfinite(*v)) throw FormatError("bad number for '" + key + "'", 0);
      out.push_back(*v);
    }
    if (out.size() != count) {
      throw FormatError("calibration key '" + key + "' expects " + std::to_string(count) +
                            " values",
                        0);
    }
    return out;
  };
  for (const auto& [key, _] : kv) {
    static constexpr std::array<std::string_view, 8> known = {"fx", "fy", "cx", "cy",
                                                              "R",  "t",  "width", "height"};
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw FormatError("unknown calibration key '" + key + "'", 0);
    }
  }
  CameraCalibration c;
  c.fx = values("fx", 1, true)[0];
  c.fy = values("fy", 1, true)[0];
  c.cx = values("cx", 1, true)[0];
  c.cy = values("cy", 1, true)[0];
  const auto r = values("R", 9, true);
  std::copy(r.begin(), r.end(), c.R.m.begin());
  const auto t = values("t", 3, true);
  c.tvec = {t[0], t[1], t[2]};
  if (const auto w = values("width", 1, false); !w.empty()) c.width = static_cast<int>(w[0]);
  if (const auto h = values("height", 1, false); !h.empty()) c.height = static_cast<int>(h[0]);
  validate(c);
  return c;
}

inline CameraCalibration read_calibration(const std::filesystem::path& path) {
  return parse_calibration(detail::read_lines(path));
}

inline void write_calibration(const CameraCalibration& c, const std::filesystem::path& path) {
  using detail::format_double;
  std::string out;
  out += "fx = " + format_double(c.fx) + "\n";
  out += "fy = " + format_double(c.fy) + "\n";
  out += "cx = " + format_double(c.cx) + "\n";
  out += "cy = " + format_double(c.cy) + "\n";
  out += "R =";
  for (double v : c.R.m) out += " " + format_double(v);
  out += "\nt = " + format_double(c.tvec.x) + " " + format_double(c.tvec.y) + " " +
         format_double(c.tvec.z) + "\n";
  out += "width = " + std::to_string(c.width) + "\n";
  out += "height = " + std::to_string(c.height) + "\n";
  detail::write_text(path, out);
}

// ---------------------------------------------------------------------------
// Recording manifest: `key = value` with events, skeletons, calibration,
// subject, movement, camera. Relative paths resolve against the manifest.

struct RecordingManifest {
  std::filesystem::path events;
  std::filesystem::path skeletons;
  std::filesystem::path calibration;
  int subject_id = 0;
  std::string movement;
  int camera_id = 0;
};

inline RecordingManifest read_manifest(const std::filesystem::path& path) {
  const auto kv = detail::parse_key_values(detail::read_lines(path));
  auto get = [&](const std::string& key) -> const std::string& {
    const auto it = kv.find(key);
    if (it == kv.end()) throw FormatError("manifest missing key '" + key + "'", 0);
    return it->second;
  };
  const auto base = path.parent_path();
  auto resolve = [&](const std::string& p) {
    std::filesystem::path fp(p);
    return fp.is_absolute() ? fp : base / fp;
  };
  RecordingManifest m;
  m.events = resolve(get("events"));
  m.skeletons = resolve(get("skeletons"));
  m.calibration = resolve(get("calibration"));
  const auto subject = detail::parse_number<int>(get("subject"));
  const auto camera = detail::parse_number<int>(get("camera"));
  if (!subject || !camera) throw FormatError("manifest subject/camera must be integers", 0);
  m.subject_id = *subject;
  m.camera_id = *camera;
  m.movement = get("movement");
  return m;
}

// Confirms the referenced files exist and parse.
inline void validate(const RecordingManifest& m, SensorSize csv_sensor = {}) {
  for (const auto* p : {&m.events, &m.skeletons, &m.calibration}) {
    if (!std::filesystem::exists(*p)) throw IoError("manifest references missing file " + p->string());
  }
  (void)read_events(m.events, event_format_from_path(m.events), csv_sensor);
  (void)read_skeletons(m.skeletons);
  (void)read_calibration(m.calibration);
}

}  // namespace evpose
