#pragma once

// Differentiable lifting head: per-plane softmax and soft-argmax, fusion of
// the three planar reads into a 3D NDC joint, the symmetric KL divergence and
// geometric losses summed over stages, and their closed-form gradients with
// respect to the pre-softmax logits.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "evpose/detail/io_util.hpp"
#include "evpose/errors.hpp"
#include "evpose/geometry.hpp"
#include "evpose/representations.hpp"
#include "evpose/tensor_io.hpp"

namespace evpose {

struct LossConfig {
  double temperature = 1.0;
  double epsilon = 1e-8;
  double geometric_weight = 1.0;
  double divergence_weight = 1.0;

  void validate() const {
    if (!(temperature > 0.0)) throw ConfigError("temperature must be > 0");
    if (!(epsilon >= 0.0)) throw ConfigError("epsilon must be >= 0");
    if (!(geometric_weight >= 0.0) || !(divergence_weight >= 0.0)) {
      throw ConfigError("loss weights must be >= 0");
    }
  }
};

namespace detail {

inline void softmax_into(std::span<const double> logits, double temperature,
                         std::span<double> out) {
  const double peak = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp((logits[i] - peak) / temperature);
    total += out[i];
  }
  for (double& v : out) v /= total;
}

// (u, v) expectation over the NDC lattice of a size x size plane.
inline std::pair<double, double> expectation(std::span<const double> prob, int size) {
  double u = 0.0;
  double v = 0.0;
  for (int row = 0; row < size; ++row) {
    const double vc = pixel_to_ndc(row, size);
    double row_mass = 0.0;
    for (int col = 0; col < size; ++col) {
      const double p = prob[static_cast<std::size_t>(row) * size + col];
      row_mass += p;
      u += p * pixel_to_ndc(col, size);
    }
    v += row_mass * vc;
  }
  return {u, v};
}

inline std::vector<double> smoothed(std::span<const double> p, double eps) {
  std::vector<double> out(p.begin(), p.end());
  double total = 0.0;
  for (double& v : out) {
    v += eps;
    total += v;
  }
  for (double& v : out) v /= total;
  return out;
}

inline double sym_kl_smoothed(std::span<const double> h, std::span<const double> q) {
  // 1/2 KL(h||q) + 1/2 KL(q||h) == 1/2 sum (h - q)(log h - log q)
  double acc = 0.0;
  for (std::size_t i = 0; i < h.size(); ++i) {
    if (h[i] == q[i]) continue;
    acc += (h[i] - q[i]) * (std::log(h[i]) - std::log(q[i]));
  }
  return 0.5 * acc;
}

}  // namespace detail

inline Plane softmax_plane(const Plane& logits, double temperature = 1.0) {
  if (!(temperature > 0.0)) throw ConfigError("temperature must be > 0");
  for (double v : logits.values) {
    if (!std::isfinite(v)) throw ValidationError("softmax_plane: non-finite logit");
  }
  Plane out(logits.size);
  detail::softmax_into(logits.values, temperature, out.values);
  return out;
}

struct PlanarPoint {
  double u = 0.0;
  double v = 0.0;
};

inline PlanarPoint soft_argmax(const Plane& prob) {
  double total = 0.0;
  for (double p : prob.values) {
    if (p < 0.0) throw ValidationError("soft_argmax: negative probability");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-6) throw ValidationError("soft_argmax: plane does not sum to 1");
  const auto [u, v] = detail::expectation(prob.values, prob.size);
  return {u, v};
}

struct PlanarReads {
  PlanarPoint xy;  // (x, y)
  PlanarPoint xz;  // (x, z)
  PlanarPoint zy;  // (z, y)
};

struct FusedJoint {
  Vec3 p;
  double x_xy = 0.0;
  double y_xy = 0.0;
  double z_xz = 0.0;
  double z_zy = 0.0;
};

inline FusedJoint fuse(const PlanarReads& r) {
  FusedJoint j;
  j.x_xy = r.xy.u;
  j.y_xy = r.xy.v;
  j.z_xz = r.xz.v;
  j.z_zy = r.zy.u;
  j.p = {j.x_xy, j.y_xy, (j.z_xz + j.z_zy) / 2.0};
  return j;
}

struct FusedPose {
  std::vector<FusedJoint> joints;

  NdcPose to_ndc(const JointMask& valid) const {
    NdcPose out;
    for (const auto& j : joints) out.coords.push_back(j.p);
    out.valid = valid;
    return out;
  }
};

// Both planes are smoothed by `epsilon` per cell and renormalized first.
inline double sym_kl(std::span<const double> h, std::span<const double> q, double epsilon) {
  if (h.size() != q.size()) throw ShapeMismatchError("sym_kl: size mismatch");
  const auto hs = detail::smoothed(h, epsilon);
  const auto qs = detail::smoothed(q, epsilon);
  return detail::sym_kl_smoothed(hs, qs);
}

inline double sym_kl(const Plane& h, const Plane& q, double epsilon) {
  return sym_kl(std::span<const double>(h.values), std::span<const double>(q.values), epsilon);
}

// Mean Euclidean distance over valid joints.
inline double geometric_loss(std::span<const Vec3> pred, std::span<const Vec3> gt,
                             const JointMask& mask) {
  if (pred.size() != gt.size() || mask.size() != gt.size()) {
    throw ShapeMismatchError("geometric_loss: pose sizes differ");
  }
  double acc = 0.0;
  std::size_t n = 0;
  for (std::size_t j = 0; j < gt.size(); ++j) {
    if (!mask[j]) continue;
    acc += norm(pred[j] - gt[j]);
    ++n;
  }
  if (n == 0) throw AllMaskedError("geometric_loss: every joint is masked");
  return acc / static_cast<double>(n);
}

// ---------------------------------------------------------------------------
// Stage predictions

// Logits for S stages x J joints x 3 faces x R x R, stored contiguously in
// that order.
class StagePrediction {
 public:
  StagePrediction() = default;
  StagePrediction(int stages, int joints, int resolution, double fill = 0.0)
      : stages_(stages),
        joints_(joints),
        resolution_(resolution),
        values_(static_cast<std::size_t>(stages) * joints * 3 * resolution * resolution, fill) {
    if (stages < 1 || joints < 1 || resolution < 2) {
      throw ValidationError("StagePrediction: stages, joints >= 1 and resolution >= 2 required");
    }
  }

  int stages() const { return stages_; }
  int joints() const { return joints_; }
  int resolution() const { return resolution_; }
  std::size_t plane_cells() const { return static_cast<std::size_t>(resolution_) * resolution_; }
  std::size_t stage_size() const { return static_cast<std::size_t>(joints_) * 3 * plane_cells(); }

  std::span<double> plane(int stage, int joint, Face f) {
    return {values_.data() + offset(stage, joint, f), plane_cells()};
  }
  std::span<const double> plane(int stage, int joint, Face f) const {
    return {values_.data() + offset(stage, joint, f), plane_cells()};
  }
  std::span<double> stage(int s) { return {values_.data() + s * stage_size(), stage_size()}; }
  std::span<const double> stage(int s) const {
    return {values_.data() + s * stage_size(), stage_size()};
  }

  Plane plane_copy(int stage, int joint, Face f) const {
    Plane p(resolution_);
    const auto src = plane(stage, joint, f);
    std::copy(src.begin(), src.end(), p.values.begin());
    return p;
  }

  std::vector<double>& values() { return values_; }
  const std::vector<double>& values() const { return values_; }

  friend bool operator==(const StagePrediction&, const StagePrediction&) = default;

 private:
  std::size_t offset(int stage, int joint, Face f) const {
    return ((static_cast<std::size_t>(stage) * joints_ + joint) * 3 + static_cast<int>(f)) *
           plane_cells();
  }

  int stages_ = 0;
  int joints_ = 0;
  int resolution_ = 0;
  std::vector<double> values_;
};

inline FusedPose predict_pose(const StagePrediction& pred, int stage, double temperature = 1.0) {
  FusedPose out;
  std::vector<double> prob(pred.plane_cells());
  for (int j = 0; j < pred.joints(); ++j) {
    std::array<PlanarPoint, 3> reads{};
    for (std::size_t f = 0; f < 3; ++f) {
      detail::softmax_into(pred.plane(stage, j, kFaces[f]), temperature, prob);
      const auto [u, v] = detail::expectation(prob, pred.resolution());
      reads[f] = {u, v};
    }
    out.joints.push_back(fuse({reads[0], reads[1], reads[2]}));
  }
  return out;
}

struct StageLoss {
  double geometric = 0.0;
  double jsd_xy = 0.0;
  double jsd_xz = 0.0;
  double jsd_zy = 0.0;

  double sum() const { return geometric + jsd_xy + jsd_xz + jsd_zy; }
};

struct LossBreakdown {
  std::vector<StageLoss> stages;
  double total = 0.0;
};

namespace detail {

inline JointMask loss_mask(const MarginalHeatmaps& gt, const NdcPose& pose) {
  JointMask m(pose.size(), false);
  for (std::size_t j = 0; j < pose.size(); ++j) m[j] = pose.valid[j] && gt.valid[j];
  return m;
}

inline void check_targets(const StagePrediction& pred, const MarginalHeatmaps& gt,
                          const NdcPose& pose) {
  if (gt.joint_count() != static_cast<std::size_t>(pred.joints()) ||
      pose.size() != static_cast<std::size_t>(pred.joints()) || gt.valid.size() != pose.size() ||
      pose.valid.size() != pose.size()) {
    throw ShapeMismatchError("prediction, heatmaps and pose disagree on joint count");
  }
  if (gt.resolution != pred.resolution()) {
    throw ShapeMismatchError("prediction and heatmaps disagree on resolution");
  }
}

// One pass over a stage. When `grad` is non-empty it receives dL/dlogits for
// that stage (same layout as StagePrediction::stage).
inline StageLoss stage_loss(const StagePrediction& pred, int s, const MarginalHeatmaps& gt,
                            const NdcPose& pose, const JointMask& mask, std::size_t n_valid,
                            const LossConfig& cfg, std::span<double> grad) {
  const int r = pred.resolution();
  const std::size_t cells = pred.plane_cells();
  const double inv_n = 1.0 / static_cast<double>(n_valid);
  StageLoss loss;
  std::array<std::vector<double>, 3> prob;
  for (auto& p : prob) p.resize(cells);
  std::vector<double> g(cells);
  std::vector<double> gq(cells);
  for (int j = 0; j < pred.joints(); ++j) {
    if (!mask[static_cast<std::size_t>(j)]) continue;
    std::array<PlanarPoint, 3> reads{};
    std::array<double, 3> div{};
    for (std::size_t f = 0; f < 3; ++f) {
      softmax_into(pred.plane(s, j, kFaces[f]), cfg.temperature, prob[f]);
      const auto [u, v] = expectation(prob[f], r);
      reads[f] = {u, v};
      div[f] = sym_kl(std::span<const double>(gt.planes[static_cast<std::size_t>(j)][f].values),
                      std::span<const double>(prob[f]), cfg.epsilon);
    }
    const FusedJoint fj = fuse({reads[0], reads[1], reads[2]});
    const Vec3 d = fj.p - pose.coords[static_cast<std::size_t>(j)];
    const double dist = norm(d);
    loss.geometric += dist * inv_n;
    loss.jsd_xy += div[0] * inv_n;
    loss.jsd_xz += div[1] * inv_n;
    loss.jsd_zy += div[2] * inv_n;
    if (grad.empty()) continue;

    // dL/d(p_hat); zero at the kink where prediction equals ground truth.
    const Vec3 gp = dist > 0.0 ? (cfg.geometric_weight * inv_n / dist) * d : Vec3{};
    // dL/du, dL/dv per face through the fusion of the planar reads.
    const std::array<PlanarPoint, 3> gread = {PlanarPoint{gp.x, gp.y}, PlanarPoint{0.0, gp.z / 2.0},
                                              PlanarPoint{gp.z / 2.0, 0.0}};
    const double wd = cfg.divergence_weight * inv_n;
    for (std::size_t f = 0; f < 3; ++f) {
      const auto& q = prob[f];
      // Divergence branch through the epsilon smoothing.
      const auto hs = smoothed(gt.planes[static_cast<std::size_t>(j)][f].values, cfg.epsilon);
      double qsum = 0.0;
      for (double v : q) qsum += v + cfg.epsilon;
      double mean_gs = 0.0;
      for (std::size_t i = 0; i < cells; ++i) {
        const double qs = (q[i] + cfg.epsilon) / qsum;
        gq[i] = 0.5 * (std::log(qs / hs[i]) + 1.0 - hs[i] / qs);
        mean_gs += gq[i] * qs;
      }
      for (int row = 0; row < r; ++row) {
        const double vc = pixel_to_ndc(row, r);
        for (int col = 0; col < r; ++col) {
          const std::size_t i = static_cast<std::size_t>(row) * r + col;
          g[i] = wd * (gq[i] - mean_gs) / qsum + gread[f].u * pixel_to_ndc(col, r) +
                 gread[f].v * vc;
        }
      }
      // Softmax backward.
      double mean_g = 0.0;
      for (std::size_t i = 0; i < cells; ++i) mean_g += g[i] * q[i];
      const std::size_t base =
          ((static_cast<std::size_t>(j) * 3) + f) * cells;
      for (std::size_t i = 0; i < cells; ++i) {
        grad[base + i] = q[i] * (g[i] - mean_g) / cfg.temperature;
      }
    }
  }
  return loss;
}

inline std::size_t count_valid(const JointMask& m) {
  return static_cast<std::size_t>(std::count(m.begin(), m.end(), true));
}

}  // namespace detail

inline LossBreakdown total_loss(const StagePrediction& pred, const MarginalHeatmaps& gt,
                                const NdcPose& pose, const LossConfig& cfg = {}) {
  cfg.validate();
  detail::check_targets(pred, gt, pose);
  const JointMask mask = detail::loss_mask(gt, pose);
  const std::size_t n = detail::count_valid(mask);
  if (n == 0) throw AllMaskedError("total_loss: every joint is masked");
  LossBreakdown out;
  for (int s = 0; s < pred.stages(); ++s) {
    const StageLoss sl = detail::stage_loss(pred, s, gt, pose, mask, n, cfg, {});
    out.total += cfg.geometric_weight * sl.geometric +
                 cfg.divergence_weight * (sl.jsd_xy + sl.jsd_xz + sl.jsd_zy);
    out.stages.push_back(sl);
  }
  return out;
}

struct LossGradients {
  LossBreakdown loss;
  StagePrediction gradient;  // dL/dlogits, same shape as the prediction
};

inline LossGradients loss_gradients(const StagePrediction& pred, const MarginalHeatmaps& gt,
                                    const NdcPose& pose, const LossConfig& cfg = {}) {
  cfg.validate();
  detail::check_targets(pred, gt, pose);
  const JointMask mask = detail::loss_mask(gt, pose);
  const std::size_t n = detail::count_valid(mask);
  if (n == 0) throw AllMaskedError("loss_gradients: every joint is masked");
  LossGradients out{{}, StagePrediction(pred.stages(), pred.joints(), pred.resolution())};
  for (int s = 0; s < pred.stages(); ++s) {
    const StageLoss sl = detail::stage_loss(pred, s, gt, pose, mask, n, cfg, out.gradient.stage(s));
    out.loss.total += cfg.geometric_weight * sl.geometric +
                      cfg.divergence_weight * (sl.jsd_xy + sl.jsd_xz + sl.jsd_zy);
    out.loss.stages.push_back(sl);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Oracle predictor: renders the ground-truth pose, optionally jittered per
// joint by N(0, noise_std^2) in NDC units (clamped to the cube), and returns
// log(heatmap + epsilon) as logits for every stage.

inline StagePrediction oracle_predict(const NdcPose& gt_pose, const HeatmapSpec& spec,
                                      double noise_std, std::uint64_t seed, int stages = 1,
                                      double epsilon = 1e-8) {
  spec.validate();
  if (!(noise_std >= 0.0)) throw ConfigError("noise_std must be >= 0");
  if (!(epsilon > 0.0)) throw ConfigError("oracle epsilon must be > 0");
  std::mt19937_64 rng(seed);
  NdcPose jittered = gt_pose;
  if (noise_std > 0.0) {
    std::normal_distribution<double> noise(0.0, noise_std);
    for (auto& c : jittered.coords) {
      const double dx = noise(rng);
      const double dy = noise(rng);
      const double dz = noise(rng);
      c = {std::clamp(c.x + dx, -1.0, 1.0), std::clamp(c.y + dy, -1.0, 1.0),
           std::clamp(c.z + dz, -1.0, 1.0)};
    }
  }
  const MarginalHeatmaps hm = render_heatmaps(jittered, spec);
  StagePrediction pred(stages, static_cast<int>(gt_pose.size()), spec.resolution);
  for (int s = 0; s < stages; ++s) {
    for (std::size_t j = 0; j < gt_pose.size(); ++j) {
      for (std::size_t f = 0; f < 3; ++f) {
        auto dst = pred.plane(s, static_cast<int>(j), kFaces[f]);
        const auto& src = hm.planes[j][f].values;
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = std::log(src[i] + epsilon);
      }
    }
  }
  return pred;
}

// ---------------------------------------------------------------------------
// Toy predictor: one affine map from pooled input features to a single stage
// of logits. Weights are stored input-major so sparse inputs touch few rows.

// Normalizes a C x H x W tensor by its peak magnitude, then average-pools
// each channel to pool x pool (adaptive bins) and flattens channel-major.
inline std::vector<double> pool_features(std::span<const double> values, int channels, int height,
                                         int width, int pool) {
  if (pool < 1) throw ConfigError("pool size must be >= 1");
  if (values.size() != static_cast<std::size_t>(channels) * height * width) {
    throw ShapeMismatchError("pool_features: value count does not match dims");
  }
  const auto norm_values = normalize_for_input(values);
  std::vector<double> out(static_cast<std::size_t>(channels) * pool * pool, 0.0);
  for (int c = 0; c < channels; ++c) {
    for (int py = 0; py < pool; ++py) {
      const int y0 = py * height / pool;
      const int y1 = std::max(y0 + 1, ((py + 1) * height + pool - 1) / pool);
      for (int px = 0; px < pool; ++px) {
        const int x0 = px * width / pool;
        const int x1 = std::max(x0 + 1, ((px + 1) * width + pool - 1) / pool);
        double acc = 0.0;
        for (int y = y0; y < y1; ++y) {
          for (int x = x0; x < x1; ++x) {
            acc += norm_values[(static_cast<std::size_t>(c) * height + y) * width + x];
          }
        }
        out[(static_cast<std::size_t>(c) * pool + py) * pool + px] =
            acc / static_cast<double>((y1 - y0) * (x1 - x0));
      }
    }
  }
  return out;
}

class ToyPredictor {
 public:
  ToyPredictor() = default;
  ToyPredictor(std::size_t inputs, int joints, int resolution, double init_std, std::uint64_t seed)
      : inputs_(inputs), joints_(joints), resolution_(resolution), seed_(seed) {
    if (inputs == 0 || joints < 1 || resolution < 2) throw ConfigError("bad toy predictor shape");
    weights_.assign(inputs_ * outputs(), 0.0);
    bias_.assign(outputs(), 0.0);
    if (init_std > 0.0) {
      std::mt19937_64 rng(seed);
      std::normal_distribution<double> dist(0.0, init_std);
      for (double& w : weights_) w = dist(rng);
    }
  }

  std::size_t inputs() const { return inputs_; }
  std::size_t outputs() const {
    return static_cast<std::size_t>(joints_) * 3 * resolution_ * resolution_;
  }
  int joints() const { return joints_; }
  int resolution() const { return resolution_; }
  std::uint64_t seed() const { return seed_; }
  std::uint64_t step() const { return step_; }
  void set_step(std::uint64_t s) { step_ = s; }

  std::vector<double>& weights() { return weights_; }
  const std::vector<double>& weights() const { return weights_; }
  std::vector<double>& bias() { return bias_; }
  const std::vector<double>& bias() const { return bias_; }

  StagePrediction predict(std::span<const double> features) const {
    if (features.size() != inputs_) throw ShapeMismatchError("toy predictor: wrong input size");
    StagePrediction out(1, joints_, resolution_);
    auto& y = out.values();
    std::copy(bias_.begin(), bias_.end(), y.begin());
    const std::size_t n_out = outputs();
    for (std::size_t i = 0; i < inputs_; ++i) {
      const double x = features[i];
      if (x == 0.0) continue;
      const double* row = weights_.data() + i * n_out;
      for (std::size_t o = 0; o < n_out; ++o) y[o] += x * row[o];
    }
    return out;
  }

  friend bool operator==(const ToyPredictor&, const ToyPredictor&) = default;

 private:
  std::size_t inputs_ = 0;
  int joints_ = 0;
  int resolution_ = 0;
  std::uint64_t seed_ = 0;
  std::uint64_t step_ = 0;
  std::vector<double> weights_;  // [input][output]
  std::vector<double> bias_;
};

struct AdamConfig {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  explicit Adam(std::size_t params, AdamConfig cfg = {})
      : cfg_(cfg), m_(params, 0.0), v_(params, 0.0) {}

  // Call once per step, before update() on each parameter slice.
  void begin_step() {
    ++t_;
    c1_ = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    c2_ = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  }

  // `offset` locates the slice inside the optimizer's moment vectors.
  void update(std::span<double> params, std::span<const double> grad, std::size_t offset) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      double& m = m_[offset + i];
      double& v = v_[offset + i];
      m = cfg_.beta1 * m + (1.0 - cfg_.beta1) * grad[i];
      v = cfg_.beta2 * v + (1.0 - cfg_.beta2) * grad[i] * grad[i];
      params[i] -= cfg_.lr * (m / c1_) / (std::sqrt(v / c2_) + cfg_.eps);
    }
  }

  std::uint64_t steps() const { return t_; }

 private:
  AdamConfig cfg_;
  std::vector<double> m_;
  std::vector<double> v_;
  std::uint64_t t_ = 0;
  double c1_ = 1.0;
  double c2_ = 1.0;
};

struct TrainSample {
  std::vector<double> features;
  MarginalHeatmaps heatmaps;
  NdcPose pose;
};

struct TrainConfig {
  int epochs = 10;
  std::size_t batch_size = 32;
  AdamConfig adam{};
  LossConfig loss{};
  std::uint64_t seed = 0;
  double init_std = 1e-3;
  bool shuffle = true;

  void validate() const {
    if (epochs < 0) throw ConfigError("epochs must be >= 0");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (!(adam.lr >= 0.0)) throw ConfigError("lr must be >= 0");
    loss.validate();
  }
};

struct EpochLoss {
  int epoch = 0;
  double total = 0.0;
  double geometric = 0.0;
  double jsd_xy = 0.0;
  double jsd_xz = 0.0;
  double jsd_zy = 0.0;
};

struct TrainResult {
  ToyPredictor predictor;
  std::vector<EpochLoss> curve;  // mean training loss seen during each epoch
};

inline ToyPredictor make_toy_predictor(std::span<const TrainSample> dataset,
                                       const TrainConfig& cfg) {
  if (dataset.empty()) throw EmptyDatasetError("toy predictor needs at least one sample");
  const auto& first = dataset.front();
  return ToyPredictor(first.features.size(), static_cast<int>(first.pose.size()),
                      first.heatmaps.resolution, cfg.init_std, cfg.seed);
}

// Continues training `predictor` in place.
inline std::vector<EpochLoss> train_toy_epochs(ToyPredictor& predictor,
                                               std::span<const TrainSample> dataset,
                                               const TrainConfig& cfg) {
  cfg.validate();
  if (dataset.empty()) throw EmptyDatasetError("train_toy: empty dataset");
  const std::size_t n_out = predictor.outputs();
  const std::size_t n_in = predictor.inputs();
  Adam adam(n_in * n_out + n_out, cfg.adam);
  std::vector<double> grad_w(n_in * n_out, 0.0);
  std::vector<double> grad_b(n_out, 0.0);
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(cfg.seed ^ 0x9E3779B97F4A7C15ULL);
  std::vector<EpochLoss> curve;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    if (cfg.shuffle) {
      for (std::size_t i = order.size(); i > 1; --i) {
        const std::size_t k = static_cast<std::size_t>(rng() % i);
        std::swap(order[i - 1], order[k]);
      }
    }
    EpochLoss el;
    el.epoch = epoch;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      const double inv_b = 1.0 / static_cast<double>(end - start);
      std::fill(grad_w.begin(), grad_w.end(), 0.0);
      std::fill(grad_b.begin(), grad_b.end(), 0.0);
      for (std::size_t k = start; k < end; ++k) {
        const TrainSample& sample = dataset[order[k]];
        const StagePrediction pred = predictor.predict(sample.features);
        const LossGradients lg = loss_gradients(pred, sample.heatmaps, sample.pose, cfg.loss);
        const auto& g = lg.gradient.values();
        for (std::size_t o = 0; o < n_out; ++o) grad_b[o] += g[o] * inv_b;
        for (std::size_t i = 0; i < n_in; ++i) {
          const double x = sample.features[i];
          if (x == 0.0) continue;
          double* row = grad_w.data() + i * n_out;
          const double s = x * inv_b;
          for (std::size_t o = 0; o < n_out; ++o) row[o] += s * g[o];
        }
        el.total += lg.loss.total;
        el.geometric += lg.loss.stages[0].geometric;
        el.jsd_xy += lg.loss.stages[0].jsd_xy;
        el.jsd_xz += lg.loss.stages[0].jsd_xz;
        el.jsd_zy += lg.loss.stages[0].jsd_zy;
      }
      adam.begin_step();
      adam.update(predictor.weights(), grad_w, 0);
      adam.update(predictor.bias(), grad_b, n_in * n_out);
      predictor.set_step(predictor.step() + 1);
    }
    const double inv_n = 1.0 / static_cast<double>(dataset.size());
    el.total *= inv_n;
    el.geometric *= inv_n;
    el.jsd_xy *= inv_n;
    el.jsd_xz *= inv_n;
    el.jsd_zy *= inv_n;
    curve.push_back(el);
  }
  return curve;
}

inline TrainResult train_toy(std::span<const TrainSample> dataset, const TrainConfig& cfg) {
  cfg.validate();
  if (dataset.empty()) throw EmptyDatasetError("train_toy: empty dataset");
  TrainResult result{make_toy_predictor(dataset, cfg), {}};
  result.curve = train_toy_epochs(result.predictor, dataset, cfg);
  return result;
}

// Mean over samples of the NDC-space geometric error of the fused prediction.
inline double mean_normalized_error(const ToyPredictor& predictor,
                                    std::span<const TrainSample> dataset,
                                    double temperature = 1.0) {
  if (dataset.empty()) throw EmptyDatasetError("mean_normalized_error: empty dataset");
  double acc = 0.0;
  for (const auto& s : dataset) {
    const FusedPose fp = predict_pose(predictor.predict(s.features), 0, temperature);
    const NdcPose p = fp.to_ndc(s.pose.valid);
    acc += geometric_loss(p.coords, s.pose.coords, s.pose.valid);
  }
  return acc / static_cast<double>(dataset.size());
}

// ---------------------------------------------------------------------------
// Checkpoints and loss curves

inline Tensor to_tensor(const ToyPredictor& p) {
  Tensor t;
  t.dims = {p.inputs() + 1, p.outputs()};
  t.data = p.weights();
  t.data.insert(t.data.end(), p.bias().begin(), p.bias().end());
  t.meta["kind"] = "toy-predictor";
  t.meta["inputs"] = std::to_string(p.inputs());
  t.meta["joints"] = std::to_string(p.joints());
  t.meta["R"] = std::to_string(p.resolution());
  t.meta["seed"] = std::to_string(p.seed());
  t.meta["step"] = std::to_string(p.step());
  return t;
}

inline ToyPredictor toy_predictor_from_tensor(const Tensor& t) {
  if (t.require("kind") != "toy-predictor" || t.dims.size() != 2) {
    throw FormatError("not a toy predictor checkpoint", 0);
  }
  const auto inputs = static_cast<std::size_t>(t.require_int("inputs"));
  ToyPredictor p(inputs, static_cast<int>(t.require_int("joints")),
                 static_cast<int>(t.require_int("R")), 0.0,
                 static_cast<std::uint64_t>(t.require_int("seed")));
  if (t.dims[0] != inputs + 1 || t.dims[1] != p.outputs()) {
    throw FormatError("checkpoint dims disagree with sidecar", 0);
  }
  std::copy(t.data.begin(), t.data.begin() + static_cast<std::ptrdiff_t>(inputs * p.outputs()),
            p.weights().begin());
  std::copy(t.data.begin() + static_cast<std::ptrdiff_t>(inputs * p.outputs()), t.data.end(),
            p.bias().begin());
  p.set_step(static_cast<std::uint64_t>(t.require_int("step")));
  return p;
}

inline std::string encode_loss_curve(std::span<const EpochLoss> curve) {
  using detail::format_double;
  std::string out = "epoch,total,geometric,jsd_xy,jsd_xz,jsd_zy\n";
  for (const auto& e : curve) {
    out += std::to_string(e.epoch) + "," + format_double(e.total) + "," +
           format_double(e.geometric) + "," + format_double(e.jsd_xy) + "," +
           format_double(e.jsd_xz) + "," + format_double(e.jsd_zy) + "\n";
  }
  return out;
}

}  // namespace evpose
