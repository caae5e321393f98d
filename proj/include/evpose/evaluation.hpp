#pragma once

// MPJPE in millimeters, cross-subject split with frame striding, and
// per-movement aggregation with report emission (CSV, JSON lines, SVG bars).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "evpose/detail/io_util.hpp"
#include "evpose/errors.hpp"
#include "evpose/events_io.hpp"
#include "evpose/geometry.hpp"

namespace evpose {

struct MpjpeResult {
  double mean_mm = 0.0;
  std::vector<std::optional<double>> per_joint_mm;  // nullopt for masked joints
  std::size_t valid_joints = 0;
};

// Denormalizes `pred` with the ground-truth depth anchor in `ctx`, then
// averages the Euclidean error over joints selected by `mask`.
inline MpjpeResult mpjpe(const NdcPose& pred, const JointSet& gt_mm,
                         const NormalizationContext& ctx, const JointMask& mask) {
  if (pred.size() != gt_mm.size() || mask.size() != gt_mm.size()) {
    throw ShapeMismatchError("mpjpe: joint counts differ");
  }
  const JointSet pred_mm = ndc_denormalize(pred, ctx);
  MpjpeResult r;
  r.per_joint_mm.assign(gt_mm.size(), std::nullopt);
  double acc = 0.0;
  for (std::size_t j = 0; j < gt_mm.size(); ++j) {
    if (!mask[j]) continue;
    const double e = norm(pred_mm.joints[j] - gt_mm.joints[j]);
    r.per_joint_mm[j] = e;
    acc += e;
    ++r.valid_joints;
  }
  if (r.valid_joints == 0) throw AllMaskedError("mpjpe: every joint is masked");
  r.mean_mm = acc / static_cast<double>(r.valid_joints);
  return r;
}

// ---------------------------------------------------------------------------
// Records

struct EvalRecord {
  int subject_id = 0;
  std::string movement;
  int camera_id = 0;
  std::size_t frame_index = 0;
  std::vector<std::optional<double>> per_joint_mm;
  double mean_mm = 0.0;
};

inline std::string encode_records_csv(std::span<const EvalRecord> records) {
  std::size_t joints = 0;
  for (const auto& r : records) joints = std::max(joints, r.per_joint_mm.size());
  std::string out = "subject,movement,camera,frame,mean_mm";
  for (std::size_t j = 0; j < joints; ++j) out += ",j" + std::to_string(j) + "_mm";
  out += "\n";
  for (const auto& r : records) {
    if (r.movement.find(',') != std::string::npos) throw ValidationError("movement contains ','");
    out += std::to_string(r.subject_id) + "," + r.movement + "," + std::to_string(r.camera_id) +
           "," + std::to_string(r.frame_index) + "," + detail::format_double(r.mean_mm);
    for (std::size_t j = 0; j < joints; ++j) {
      out += ",";
      if (j < r.per_joint_mm.size() && r.per_joint_mm[j]) out += detail::format_double(*r.per_joint_mm[j]);
    }
    out += "\n";
  }
  return out;
}

inline void write_records(std::span<const EvalRecord> records, const std::filesystem::path& path) {
  detail::write_text(path, encode_records_csv(records));
}

// Columns are located by header name; only `movement` and `mean_mm` are
// required, the rest default to 0 / empty.
inline std::vector<EvalRecord> parse_records(const std::vector<std::string>& lines) {
  if (lines.empty()) throw FormatError("records file is empty", 1);
  const auto header = detail::split(detail::trim(lines[0]), ',');
  std::map<std::string, std::size_t> col;
  std::vector<std::pair<std::size_t, std::size_t>> joint_cols;  // (joint, column)
  for (std::size_t i = 0; i < header.size(); ++i) {
    const std::string name(detail::trim(header[i]));
    col[name] = i;
    if (name.size() > 4 && name.front() == 'j' && name.ends_with("_mm")) {
      if (const auto j = detail::parse_number<std::size_t>(name.substr(1, name.size() - 4))) {
        joint_cols.emplace_back(*j, i);
      }
    }
  }
  if (!col.contains("movement") || !col.contains("mean_mm")) {
    throw FormatError("records header needs movement and mean_mm columns", 1);
  }
  std::vector<EvalRecord> records;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (detail::trim(lines[i]).empty()) continue;
    const auto f = detail::split(lines[i], ',');
    if (f.size() != header.size()) throw FormatError("field count differs from header", i + 1);
    EvalRecord r;
    r.movement = std::string(detail::trim(f[col["movement"]]));
    const auto mean = detail::parse_number<double>(f[col["mean_mm"]]);
    if (!mean || !(*mean >= 0.0)) throw FormatError("mean_mm must be a non-negative number", i + 1);
    r.mean_mm = *mean;
    auto int_field = [&](const char* name, auto& dst) {
      if (const auto it = col.find(name); it != col.end()) {
        const auto v = detail::parse_number<std::int64_t>(f[it->second]);
        if (!v) throw FormatError(std::string("bad integer in column ") + name, i + 1);
        dst = static_cast<std::remove_reference_t<decltype(dst)>>(*v);
      }
    };
    int_field("subject", r.subject_id);
    int_field("camera", r.camera_id);
    int_field("frame", r.frame_index);
    for (const auto& [j, c] : joint_cols) {
      if (r.per_joint_mm.size() <= j) r.per_joint_mm.resize(j + 1);
      if (detail::trim(f[c]).empty()) continue;
      const auto v = detail::parse_number<double>(f[c]);
      if (!v || !(*v >= 0.0)) throw FormatError("bad per-joint error", i + 1);
      r.per_joint_mm[j] = *v;
    }
    records.push_back(std::move(r));
  }
  return records;
}

inline std::vector<EvalRecord> read_records(const std::filesystem::path& path) {
  return parse_records(detail::read_lines(path));
}

// ---------------------------------------------------------------------------
// Protocol

struct ProtocolConfig {
  std::set<int> train_subjects;
  std::set<int> test_subjects;
  std::size_t frame_stride = 64;

  void validate() const {
    if (frame_stride < 1) throw ConfigError("frame_stride must be >= 1");
    for (int s : train_subjects) {
      if (test_subjects.contains(s)) {
        throw OverlapError("subject " + std::to_string(s) + " is in both train and test sets");
      }
    }
  }
};

struct Recording {
  RecordingManifest manifest;
  std::size_t frame_count = 0;
};

struct FrameRef {
  std::size_t recording = 0;
  std::size_t frame = 0;

  friend bool operator==(const FrameRef&, const FrameRef&) = default;
};

struct ProtocolSplit {
  std::vector<FrameRef> train;
  std::vector<FrameRef> test;
};

// Frame indices 0, stride, 2*stride, ... below `total`.
inline std::vector<std::size_t> stride_sample(std::size_t total, std::size_t stride) {
  if (stride < 1) throw ConfigError("stride must be >= 1");
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < total; i += stride) out.push_back(i);
  return out;
}

// Train: every frame of train subjects. Test: strided frames of test
// subjects. Recordings of other subjects are left out.
inline ProtocolSplit apply_protocol(std::span<const Recording> recordings, const ProtocolConfig& cfg) {
  cfg.validate();
  ProtocolSplit split;
  for (std::size_t r = 0; r < recordings.size(); ++r) {
    const int subject = recordings[r].manifest.subject_id;
    if (cfg.train_subjects.contains(subject)) {
      for (std::size_t f = 0; f < recordings[r].frame_count; ++f) split.train.push_back({r, f});
    } else if (cfg.test_subjects.contains(subject)) {
      for (std::size_t f : stride_sample(recordings[r].frame_count, cfg.frame_stride)) {
        split.test.push_back({r, f});
      }
    }
  }
  return split;
}

// ---------------------------------------------------------------------------
// Per-movement report

struct MovementRow {
  std::string movement;
  std::size_t count = 0;
  double mean_mm = 0.0;
  double std_mm = 0.0;  // population std of the movement's records
};

struct MovementReport {
  std::vector<MovementRow> rows;  // movement name ascending
  std::size_t total_count = 0;
  double mean_mm = 0.0;         // unweighted mean of the per-movement means
  double std_population = 0.0;  // over the per-movement means
  double std_sample = 0.0;      // 0 with fewer than two movements
};

namespace detail {
// Sorted before summation so the result does not depend on record order.
inline double ordered_mean(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  double acc = 0.0;
  for (double x : v) acc += x;
  return acc / static_cast<double>(v.size());
}

inline double ordered_sum_sq(const std::vector<double>& v, double mean) {
  std::vector<double> sq;
  sq.reserve(v.size());
  for (double x : v) sq.push_back((x - mean) * (x - mean));
  std::sort(sq.begin(), sq.end());
  double acc = 0.0;
  for (double x : sq) acc += x;
  return acc;
}
}  // namespace detail

inline MovementReport per_movement_report(std::span<const EvalRecord> records) {
  if (records.empty()) throw EmptyError("per_movement_report: no records");
  std::map<std::string, std::vector<double>> groups;
  for (const auto& r : records) {
    if (!(r.mean_mm >= 0.0)) throw ValidationError("record error must be >= 0");
    groups[r.movement].push_back(r.mean_mm);
  }
  MovementReport rep;
  std::vector<double> means;
  for (auto& [movement, values] : groups) {
    const double m = detail::ordered_mean(values);
    const double sd = std::sqrt(detail::ordered_sum_sq(values, m) / static_cast<double>(values.size()));
    rep.rows.push_back({movement, values.size(), m, sd});
    rep.total_count += values.size();
    means.push_back(m);
  }
  rep.mean_mm = detail::ordered_mean(means);
  const double ss = detail::ordered_sum_sq(means, rep.mean_mm);
  rep.std_population = std::sqrt(ss / static_cast<double>(means.size()));
  rep.std_sample = means.size() > 1 ? std::sqrt(ss / static_cast<double>(means.size() - 1)) : 0.0;
  return rep;
}

enum class ReportFormat { csv, json_lines, svg_bars };

inline ReportFormat parse_report_format(std::string_view s) {
  if (s == "csv") return ReportFormat::csv;
  if (s == "json-lines" || s == "jsonl") return ReportFormat::json_lines;
  if (s == "svg-bars" || s == "svg") return ReportFormat::svg_bars;
  throw ConfigError("unknown report format '" + std::string(s) + "'");
}

namespace detail {

inline std::string xml_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

inline std::string report_csv(const MovementReport& rep) {
  std::string out = "# std=population\nmovement,count,mean_mm,std_mm\n";
  for (const auto& row : rep.rows) {
    if (row.movement.find(',') != std::string::npos) throw ValidationError("movement contains ','");
    out += row.movement + "," + std::to_string(row.count) + "," + format_fixed(row.mean_mm, 4) +
           "," + format_fixed(row.std_mm, 4) + "\n";
  }
  // summary: unweighted mean of movement means, std across those means
  out += "MEAN," + std::to_string(rep.total_count) + "," + format_fixed(rep.mean_mm, 4) + "," +
         format_fixed(rep.std_population, 4) + "\n";
  return out;
}

inline std::string report_json_lines(const MovementReport& rep) {
  std::string out;
  for (const auto& row : rep.rows) {
    nlohmann::ordered_json j;
    j["movement"] = row.movement;
    j["count"] = row.count;
    j["mean_mm"] = row.mean_mm;
    j["std_mm"] = row.std_mm;
    out += j.dump() + "\n";
  }
  nlohmann::ordered_json s;
  s["summary"] = "MEAN";
  s["count"] = rep.total_count;
  s["mean_mm"] = rep.mean_mm;
  s["std_mm"] = rep.std_population;
  s["std_kind"] = "population";
  s["std_sample_mm"] = rep.std_sample;
  out += s.dump() + "\n";
  return out;
}

inline std::string report_svg(const MovementReport& rep) {
  constexpr int kBar = 18;
  constexpr int kGap = 4;
  constexpr int kLabel = 220;
  constexpr int kPlot = 480;
  double peak = rep.mean_mm;
  for (const auto& row : rep.rows) peak = std::max(peak, row.mean_mm);
  if (peak <= 0.0) peak = 1.0;
  const int height = 40 + static_cast<int>(rep.rows.size()) * (kBar + kGap) + 30;
  const int width = kLabel + kPlot + 90;
  std::string out = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(width) +
                    "\" height=\"" + std::to_string(height) + "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  out += "<text x=\"10\" y=\"20\">MPJPE per movement (mm); mean " + format_fixed(rep.mean_mm, 2) +
         " std " + format_fixed(rep.std_population, 2) + " (population)</text>\n";
  int y = 40;
  for (const auto& row : rep.rows) {
    const double w = row.mean_mm / peak * kPlot;
    out += "<text x=\"" + std::to_string(kLabel - 6) + "\" y=\"" + std::to_string(y + kBar - 5) +
           "\" text-anchor=\"end\">" + xml_escape(row.movement) + "</text>\n";
    out += "<rect x=\"" + std::to_string(kLabel) + "\" y=\"" + std::to_string(y) + "\" width=\"" +
           format_fixed(w, 2) + "\" height=\"" + std::to_string(kBar) + "\" fill=\"#4a7ab5\"/>\n";
    out += "<text x=\"" + format_fixed(kLabel + w + 4, 2) + "\" y=\"" + std::to_string(y + kBar - 5) +
           "\">" + format_fixed(row.mean_mm, 2) + "</text>\n";
    y += kBar + kGap;
  }
  const double mx = kLabel + rep.mean_mm / peak * kPlot;
  out += "<line x1=\"" + format_fixed(mx, 2) + "\" y1=\"36\" x2=\"" + format_fixed(mx, 2) +
         "\" y2=\"" + std::to_string(y) + "\" stroke=\"#c0392b\" stroke-dasharray=\"4 3\"/>\n";
  out += "</svg>\n";
  return out;
}

}  // namespace detail

inline std::string encode_report(const MovementReport& rep, ReportFormat format) {
  if (rep.rows.empty()) throw EmptyError("report has no movements");
  switch (format) {
    case ReportFormat::csv: return detail::report_csv(rep);
    case ReportFormat::json_lines: return detail::report_json_lines(rep);
    case ReportFormat::svg_bars: return detail::report_svg(rep);
  }
  throw ConfigError("unknown report format");
}

// Validates and encodes fully before touching the filesystem.
inline void emit_report(const MovementReport& rep, const std::filesystem::path& path,
                        ReportFormat format) {
  const std::string text = encode_report(rep, format);
  detail::write_text(path, text);
}

}  // namespace evpose
