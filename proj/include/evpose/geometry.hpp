#pragma once

// Camera-space skeletons, the normalized device cube [-1,1]^3 and the
// per-joint marginal heatmaps rendered on its three faces.
//
// Face conventions (u = column axis, v = row axis):
//   xy: u = x, v = y      xz: u = x, v = z      zy: u = z, v = y
// Cell (row, col) of an R x R plane sits at NDC (2*col/(R-1) - 1, 2*row/(R-1) - 1).

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "evpose/detail/io_util.hpp"
#include "evpose/errors.hpp"
#include "evpose/events_io.hpp"
#include "evpose/tensor_io.hpp"
#include "evpose/types.hpp"

namespace evpose {

using JointMask = std::vector<bool>;

enum class Face : int { xy = 0, xz = 1, zy = 2 };
inline constexpr std::array<Face, 3> kFaces = {Face::xy, Face::xz, Face::zy};
inline constexpr std::array<std::string_view, 3> kFaceNames = {"xy", "xz", "zy"};

// (u axis, v axis) of each face, as Vec3 axis indices.
inline constexpr std::array<std::pair<int, int>, 3> kFaceAxes = {
    std::pair{0, 1}, std::pair{0, 2}, std::pair{2, 1}};

struct Plane {
  int size = 0;
  std::vector<double> values;  // row-major size x size

  Plane() = default;
  explicit Plane(int r, double fill = 0.0)
      : size(r), values(static_cast<std::size_t>(r) * r, fill) {}

  double& at(int row, int col) { return values[static_cast<std::size_t>(row) * size + col]; }
  double at(int row, int col) const { return values[static_cast<std::size_t>(row) * size + col]; }

  friend bool operator==(const Plane&, const Plane&) = default;
};

inline double pixel_to_ndc(double pixel, int resolution) {
  return 2.0 * pixel / static_cast<double>(resolution - 1) - 1.0;
}

inline double ndc_to_pixel(double ndc, int resolution) {
  return (ndc + 1.0) / 2.0 * static_cast<double>(resolution - 1);
}

struct JointSet {
  std::vector<Vec3> joints;  // camera coordinates, mm
  JointMask valid;

  std::size_t size() const { return joints.size(); }
};

struct NdcPose {
  std::vector<Vec3> coords;
  JointMask valid;

  std::size_t size() const { return coords.size(); }
  std::size_t valid_count() const {
    return static_cast<std::size_t>(std::count(valid.begin(), valid.end(), true));
  }
};

struct NormalizationContext {
  double z_ref = 0.0;
  CameraCalibration calib{};
  double depth_half_extent = 1000.0;

  void validate() const {
    if (!(z_ref > 0.0)) throw ValidationError("z_ref must be > 0");
    if (!(depth_half_extent > 0.0)) throw ValidationError("depth_half_extent must be > 0");
    evpose::validate(calib);
  }
};

inline JointSet world_to_camera(std::span<const Vec3> world, const CameraCalibration& calib) {
  JointSet out;
  out.joints.reserve(world.size());
  out.valid.reserve(world.size());
  for (const Vec3& w : world) {
    const Vec3 c = calib.R * w + calib.tvec;
    out.joints.push_back(c);
    out.valid.push_back(c.z > 0.0);
  }
  return out;
}

inline JointSet world_to_camera(const SkeletonSample& sample, const CameraCalibration& calib) {
  return world_to_camera(std::span<const Vec3>(sample.joints), calib);
}

// z_ref taken from `reference_joint` (the head by default).
inline NormalizationContext make_context(const JointSet& camera, const CameraCalibration& calib,
                                         double depth_half_extent,
                                         std::size_t reference_joint = kHeadJoint) {
  if (reference_joint >= camera.size()) throw ValidationError("reference joint out of range");
  NormalizationContext ctx{camera.joints[reference_joint].z, calib, depth_half_extent};
  ctx.validate();
  return ctx;
}

namespace detail {
inline bool in_cube(const Vec3& p) {
  return std::abs(p.x) <= 1.0 && std::abs(p.y) <= 1.0 && std::abs(p.z) <= 1.0;
}
}  // namespace detail

// Joints leaving the cube are masked, never clamped.
inline NdcPose ndc_normalize(const JointSet& camera, const NormalizationContext& ctx) {
  const auto& k = ctx.calib;
  NdcPose out;
  out.coords.reserve(camera.size());
  out.valid.reserve(camera.size());
  for (std::size_t j = 0; j < camera.size(); ++j) {
    const Vec3& p = camera.joints[j];
    const bool was_valid = j < camera.valid.size() ? camera.valid[j] : true;
    if (!(p.z > 0.0)) {
      out.coords.push_back({0.0, 0.0, 0.0});
      out.valid.push_back(false);
      continue;
    }
    const double u = k.fx * p.x / p.z + k.cx;
    const double v = k.fy * p.y / p.z + k.cy;
    const Vec3 n{2.0 * u / k.width - 1.0, 2.0 * v / k.height - 1.0,
                 (p.z - ctx.z_ref) / ctx.depth_half_extent};
    out.coords.push_back(n);
    out.valid.push_back(was_valid && std::isfinite(n.x) && std::isfinite(n.y) &&
                        std::isfinite(n.z) && detail::in_cube(n));
  }
  return out;
}

inline JointSet ndc_denormalize(const NdcPose& pose, const NormalizationContext& ctx) {
  const auto& k = ctx.calib;
  JointSet out;
  out.joints.reserve(pose.size());
  for (const Vec3& n : pose.coords) {
    const double z = ctx.z_ref + n.z * ctx.depth_half_extent;
    const double u = (n.x + 1.0) * k.width / 2.0;
    const double v = (n.y + 1.0) * k.height / 2.0;
    out.joints.push_back({(u - k.cx) * z / k.fx, (v - k.cy) * z / k.fy, z});
  }
  out.valid = pose.valid;
  return out;
}

// ---------------------------------------------------------------------------
// Heatmaps

struct HeatmapSpec {
  int resolution = 64;
  double sigma = 2.0;  // pixels

  void validate() const {
    if (resolution < 8) throw ConfigError("heatmap resolution must be >= 8");
    if (!(sigma > 0.0)) throw ConfigError("sigma must be > 0");
  }
};

struct MarginalHeatmaps {
  int resolution = 0;
  double sigma = 0.0;
  std::vector<std::array<Plane, 3>> planes;  // [joint][face]
  JointMask valid;

  std::size_t joint_count() const { return planes.size(); }
  const Plane& plane(std::size_t joint, Face f) const { return planes[joint][static_cast<int>(f)]; }
};

// Isotropic Gaussian centred at continuous pixel (u_px, v_px), truncated at
// 4 sigma, no normalization.
inline Plane gaussian_plane(double u_px, double v_px, int resolution, double sigma) {
  Plane p(resolution);
  const double cutoff2 = 16.0 * sigma * sigma;
  const double inv = 1.0 / (2.0 * sigma * sigma);
  for (int row = 0; row < resolution; ++row) {
    const double dv = row - v_px;
    for (int col = 0; col < resolution; ++col) {
      const double du = col - u_px;
      const double d2 = du * du + dv * dv;
      if (d2 <= cutoff2) p.at(row, col) = std::exp(-d2 * inv);
    }
  }
  return p;
}

// Rendered plane for NDC centre (u, v), summing to 1.
inline Plane render_plane(double u, double v, int resolution, double sigma) {
  Plane p = gaussian_plane(ndc_to_pixel(u, resolution), ndc_to_pixel(v, resolution), resolution,
                           sigma);
  double total = 0.0;
  for (double x : p.values) total += x;
  if (total > 0.0) {
    for (double& x : p.values) x /= total;
  }
  return p;
}

inline MarginalHeatmaps render_heatmaps(const NdcPose& pose, const HeatmapSpec& spec) {
  spec.validate();
  MarginalHeatmaps hm;
  hm.resolution = spec.resolution;
  hm.sigma = spec.sigma;
  hm.valid = pose.valid;
  hm.planes.reserve(pose.size());
  for (std::size_t j = 0; j < pose.size(); ++j) {
    std::array<Plane, 3> faces{Plane(spec.resolution), Plane(spec.resolution),
                               Plane(spec.resolution)};
    if (pose.valid[j]) {
      for (std::size_t f = 0; f < 3; ++f) {
        const auto [ua, va] = kFaceAxes[f];
        faces[f] = render_plane(pose.coords[j][ua], pose.coords[j][va], spec.resolution, spec.sigma);
      }
    }
    hm.planes.push_back(std::move(faces));
  }
  return hm;
}

// ---------------------------------------------------------------------------
// Serialization

inline std::string encode_mask(const JointMask& m) {
  std::string s;
  for (bool b : m) s += b ? '1' : '0';
  return s;
}

inline JointMask decode_mask(std::string_view s) {
  JointMask m;
  for (char c : s) {
    if (c != '0' && c != '1') throw FormatError("bad validity mask", 0);
    m.push_back(c == '1');
  }
  return m;
}

inline Tensor to_tensor(const MarginalHeatmaps& hm) {
  Tensor t;
  const auto r = static_cast<std::size_t>(hm.resolution);
  t.dims = {hm.joint_count(), 3, r, r};
  t.data.reserve(hm.joint_count() * 3 * r * r);
  for (const auto& faces : hm.planes) {
    for (const auto& p : faces) t.data.insert(t.data.end(), p.values.begin(), p.values.end());
  }
  t.meta["kind"] = "heatmaps";
  t.meta["R"] = std::to_string(hm.resolution);
  t.meta["sigma"] = detail::format_double(hm.sigma);
  t.meta["valid"] = encode_mask(hm.valid);
  return t;
}

inline MarginalHeatmaps heatmaps_from_tensor(const Tensor& t) {
  if (t.dims.size() != 4 || t.dims[1] != 3 || t.dims[2] != t.dims[3]) {
    throw FormatError("heatmap tensor must have dims J 3 R R", 0);
  }
  MarginalHeatmaps hm;
  hm.resolution = static_cast<int>(t.dims[2]);
  hm.sigma = t.require_double("sigma");
  hm.valid = decode_mask(t.require("valid"));
  if (hm.valid.size() != t.dims[0]) throw FormatError("validity mask length mismatch", 0);
  const std::size_t plane = t.dims[2] * t.dims[3];
  for (std::size_t j = 0; j < t.dims[0]; ++j) {
    std::array<Plane, 3> faces;
    for (std::size_t f = 0; f < 3; ++f) {
      faces[f] = Plane(hm.resolution);
      const auto begin = t.data.begin() + static_cast<std::ptrdiff_t>((j * 3 + f) * plane);
      std::copy(begin, begin + static_cast<std::ptrdiff_t>(plane), faces[f].values.begin());
    }
    hm.planes.push_back(std::move(faces));
  }
  return hm;
}

// CSV `joint,x,y,z,valid`; used for NDC poses and camera-space joints alike.
inline std::string encode_pose_csv(std::span<const Vec3> coords, const JointMask& valid) {
  std::string out = "joint,x,y,z,valid\n";
  for (std::size_t j = 0; j < coords.size(); ++j) {
    out += std::to_string(j) + "," + detail::format_double(coords[j].x) + "," +
           detail::format_double(coords[j].y) + "," + detail::format_double(coords[j].z) + "," +
           (valid[j] ? "1" : "0") + "\n";
  }
  return out;
}

inline std::pair<std::vector<Vec3>, JointMask> decode_pose_csv(const std::vector<std::string>& lines) {
  if (lines.empty() || detail::trim(lines[0]) != "joint,x,y,z,valid") {
    throw FormatError("expected header joint,x,y,z,valid", 1);
  }
  std::vector<Vec3> coords;
  JointMask valid;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (detail::trim(lines[i]).empty()) continue;
    const auto f = detail::split(lines[i], ',');
    if (f.size() != 5) throw FormatError("expected 5 fields", i + 1);
    const auto idx = detail::parse_number<std::size_t>(f[0]);
    const auto x = detail::parse_number<double>(f[1]);
    const auto y = detail::parse_number<double>(f[2]);
    const auto z = detail::parse_number<double>(f[3]);
    const auto v = detail::parse_number<int>(f[4]);
    if (!idx || !x || !y || !z || !v || (*v != 0 && *v != 1) || *idx != coords.size()) {
      throw FormatError("malformed pose row", i + 1);
    }
    coords.push_back({*x, *y, *z});
    valid.push_back(*v == 1);
  }
  return {std::move(coords), std::move(valid)};
}

inline void write_ndc_pose(const NdcPose& pose, const std::filesystem::path& path) {
  detail::write_text(path, encode_pose_csv(pose.coords, pose.valid));
}

inline NdcPose read_ndc_pose(const std::filesystem::path& path) {
  auto [coords, valid] = decode_pose_csv(detail::read_lines(path));
  return {std::move(coords), std::move(valid)};
}

inline void write_joint_set(const JointSet& joints, const std::filesystem::path& path) {
  detail::write_text(path, encode_pose_csv(joints.joints, joints.valid));
}

inline JointSet read_joint_set(const std::filesystem::path& path) {
  auto [coords, valid] = decode_pose_csv(detail::read_lines(path));
  return {std::move(coords), std::move(valid)};
}

}  // namespace evpose
