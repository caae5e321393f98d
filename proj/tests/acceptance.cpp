// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <sstream>

#include "support/cli_harness.hpp"
#include "support/oracles.hpp"

using namespace evpose;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  std::string name;
  double limit_s;  // 0 means no runtime limit
  std::function<Outcome()> run;
};

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

Outcome movement_means() {
  const fs::path data(EVPOSE_TEST_DATA);
  const auto cc = per_movement_report(read_records(data / "movement_means_count.csv"));
  const auto vx = per_movement_report(read_records(data / "movement_means_voxel.csv"));
  const bool ok = cc.rows.size() == 33 && vx.rows.size() == 33 &&
                  std::abs(cc.mean_mm - 92.09) <= 0.01 && std::abs(cc.std_population - 14.49) <= 0.05 &&
                  std::abs(vx.mean_mm - 95.51) <= 0.05 && std::abs(vx.std_population - 15.30) <= 0.05;
  return {ok, "count " + fmt(cc.mean_mm) + " (" + fmt(cc.std_population) + "), voxel " +
                  fmt(vx.mean_mm) + " (" + fmt(vx.std_population) + ")"};
}

Outcome voxel_mass() {
  constexpr std::size_t kN = 7500;
  constexpr int kBins = 4;
  double worst = 0.0;
  bool tents_exact = true;
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    const EventStream s = evpose::testing::random_stream(seed, kN, 64, 48);
    const EventWindow w = make_window(s.events, s.width, s.height);
    const VoxelGrid g = voxelize(w, kBins);
    double total = 0.0;
    for (double v : g.values) total += v;
    double polarity = 0.0;
    for (const auto& e : w.events) {
      polarity += e.p;
      const auto tw = tent_weights(normalized_timestamp(e.t, w.t_start, w.t_end, kBins), kBins);
      if (tw.lo_weight + tw.hi_weight != 1.0) tents_exact = false;
    }
    worst = std::max(worst, std::abs(total - polarity));
  }
  return {worst <= 1e-9 * kN && tents_exact,
          "max |sum V - sum p| = " + fmt(worst) + (tents_exact ? ", tents exact" : ", tent sum off")};
}

Outcome gradient_gate() {
  std::mt19937_64 rng(50);
  double worst = 0.0;
  for (int inst = 0; inst < 50; ++inst) {
    const NdcPose pose = evpose::testing::random_ndc_pose(rng, 2, 0.9);
    const MarginalHeatmaps hm = render_heatmaps(pose, HeatmapSpec{8, 1.0});
    StagePrediction pred(1, 2, 8);
    std::normal_distribution<double> n01(0.0, 1.0);
    for (auto& v : pred.values()) v = n01(rng);
    const auto lg = loss_gradients(pred, hm, pose);
    auto f = [&](const std::vector<double>& x) {
      StagePrediction p = pred;
      p.values() = x;
      return total_loss(p, hm, pose).total;
    };
    const auto num = oracle::central_differences(f, pred.values(), 1e-5);
    worst = std::max(worst, oracle::max_relative_error(lg.gradient.values(), num));
  }
  return {worst < 1e-4, "max relative error " + fmt(worst)};
}

Outcome oracle_loop() {
  const HeatmapSpec spec{64, 2.0};
  const NormalizationContext ctx{evpose::testing::kDhp19ZRef, evpose::testing::dhp19_like_calibration(),
                                 1000.0};
  const double bound = 2.0 * ctx.depth_half_extent / (spec.resolution - 1);
  std::mt19937_64 rng(500);
  std::vector<double> errs;
  for (int trial = 0; trial < 500; ++trial) {
    const NdcPose gt = evpose::testing::random_ndc_pose(rng, kNumJoints, 0.9);
    const JointSet gt_mm = ndc_denormalize(gt, ctx);
    const StagePrediction pred = oracle_predict(gt, spec, 0.0, static_cast<std::uint64_t>(trial));
    const NdcPose p = predict_pose(pred, 0).to_ndc(gt.valid);
    errs.push_back(mpjpe(p, gt_mm, ctx, gt.valid).mean_mm);
  }
  std::sort(errs.begin(), errs.end());
  const double worst = errs.back();
  const double median = errs[errs.size() / 2];
  return {worst < bound && median < 0.5 * bound,
          "max " + fmt(worst) + " mm, median " + fmt(median) + " mm, bound " + fmt(bound) + " mm"};
}

Outcome simulator_oracle() {
  const SimulatorConfig cfg;
  auto plane = [](double v, Timestamp t) { return LogPlane{3, 2, std::vector<double>(6, v), t}; };
  std::vector<LogPlane> flat = {plane(-0.7, 0), plane(-0.7, 5000), plane(-0.7, 10000)};
  const std::size_t constant = simulate_log_sequence(flat, cfg).events.size();

  auto per_pixel_ok = [&](double delta, std::size_t expect, std::string& note) {
    const std::vector<LogPlane> ramp = {plane(0.0, 0), plane(delta, 10000)};
    const EventStream s = simulate_log_sequence(ramp, cfg);
    bool ok = true;
    for (int y = 0; y < 2; ++y) {
      for (int x = 0; x < 3; ++x) {
        std::vector<Timestamp> ts;
        for (const auto& e : s.events) {
          if (e.x == x && e.y == y) {
            ts.push_back(e.t);
            ok = ok && e.p == 1;
          }
        }
        ok = ok && ts.size() == expect;
        for (std::size_t i = 1; i < ts.size(); ++i) ok = ok && ts[i] - ts[i - 1] >= 100;
      }
    }
    note += " ramp " + fmt(delta) + ": " + std::to_string(s.events.size() / 6) + "/px";
    return ok;
  };
  std::string note = "constant: " + std::to_string(constant) + " events;";
  const bool a = per_pixel_ok(1.0, 5, note);
  const bool b = per_pixel_ok(0.45, 2, note);
  return {constant == 0 && a && b, note};
}

Outcome ndc_round_trip() {
  const NormalizationContext ctx{evpose::testing::kDhp19ZRef, evpose::testing::dhp19_like_calibration(),
                                 1000.0};
  std::mt19937_64 rng(10000);
  const NdcPose p = evpose::testing::random_ndc_pose(rng, 10000, 1.0);
  const JointSet cam = ndc_denormalize(p, ctx);
  const NdcPose back = ndc_normalize(cam, ctx);
  const JointSet cam2 = ndc_denormalize(back, ctx);
  double worst = 0.0;
  for (std::size_t j = 0; j < p.size(); ++j) {
    worst = std::max(worst, norm(back.coords[j] - p.coords[j]) / std::max(norm(p.coords[j]), 1e-300));
    worst = std::max(worst, norm(cam2.joints[j] - cam.joints[j]) / norm(cam.joints[j]));
  }
  return {worst < 1e-9 && back.valid_count() == p.size(), "max relative error " + fmt(worst)};
}

Outcome toy_end_to_end() {
  const evpose::testing::MovingDotConfig mc;
  const auto data = evpose::testing::make_moving_dot(mc);
  TrainConfig tc;
  tc.epochs = 20;
  tc.batch_size = 1;
  tc.seed = 7;
  tc.adam.lr = 3e-4;
  auto mean_loss = [&](const ToyPredictor& pr) {
    double acc = 0.0;
    for (const auto& s : data.samples) acc += total_loss(pr.predict(s.features), s.heatmaps, s.pose).total;
    return acc / static_cast<double>(data.samples.size());
  };
  const ToyPredictor init = make_toy_predictor(data.samples, tc);
  const double loss0 = mean_loss(init);
  const double err0 = mean_normalized_error(init, data.samples);
  const TrainResult r = train_toy(data.samples, tc);
  const double loss1 = mean_loss(r.predictor);
  const double err1 = mean_normalized_error(r.predictor, data.samples);
  return {data.samples.size() == 200 && loss1 <= 0.5 * loss0 && err1 < 0.5 * err0,
          "loss " + fmt(loss0) + " -> " + fmt(loss1) + ", NDC MPJPE " + fmt(err0) + " -> " + fmt(err1)};
}

Outcome protocol_arithmetic() {
  const bool stride_ok = stride_sample(130, 64) == std::vector<std::size_t>{0, 64, 128};
  const std::set<int> train = {1, 3, 5, 7, 8};
  const std::set<int> test = {9, 11};
  std::vector<Recording> recs;
  for (int s = 1; s <= 17; ++s) {
    Recording r;
    r.manifest.subject_id = s;
    r.frame_count = 130;
    recs.push_back(r);
  }
  const auto split = apply_protocol(recs, ProtocolConfig{train, test, 64});
  std::set<int> seen_train, seen_test;
  for (const auto& f : split.train) seen_train.insert(recs[f.recording].manifest.subject_id);
  for (const auto& f : split.test) seen_test.insert(recs[f.recording].manifest.subject_id);
  std::set<int> overlap;
  std::set_intersection(seen_train.begin(), seen_train.end(), seen_test.begin(), seen_test.end(),
                        std::inserter(overlap, overlap.begin()));
  const bool split_ok = seen_train == train && seen_test == test && overlap.empty() &&
                        split.train.size() == 5 * 130 && split.test.size() == 2 * 3;
  return {stride_ok && split_ok, "train " + std::to_string(split.train.size()) + " frames, test " +
                                     std::to_string(split.test.size()) + " frames, overlap " +
                                     std::to_string(overlap.size())};
}

Outcome cli_determinism() {
  evpose::testing::TempDir dir("evpose_accept");
  const auto in = evpose::testing::write_pipeline_inputs(dir.path());
  for (const auto& [name, threads] : {std::pair{"a", 1}, std::pair{"b", 1}, std::pair{"c", 3}}) {
    const auto r = evpose::testing::run_full_pipeline(in, dir / name, threads);
    if (r.code != 0) return {false, "pipeline failed: " + r.output};
  }
  const auto a = evpose::testing::snapshot(dir / "a");
  const bool same = a == evpose::testing::snapshot(dir / "b") && a == evpose::testing::snapshot(dir / "c");
  return {same && !a.empty(), std::to_string(a.size()) + " files compared across reruns and 1 vs 3 threads"};
}

}  // namespace

int main() {
  const std::vector<Criterion> criteria = {
      {1, "per-movement report aggregation", 1.0, movement_means},
      {2, "voxel mass conservation", 10.0, voxel_mass},
      {3, "loss gradient vs finite differences", 30.0, gradient_gate},
      {4, "oracle closed loop within quantization", 30.0, oracle_loop},
      {5, "simulator closed-form ramps", 5.0, simulator_oracle},
      {6, "NDC round trip", 1.0, ndc_round_trip},
      {7, "toy moving-dot training", 120.0, toy_end_to_end},
      {8, "protocol stride and subject split", 1.0, protocol_arithmetic},
      {9, "CLI determinism", 0.0, cli_determinism},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool in_time = c.limit_s <= 0.0 || secs < c.limit_s;
    const bool pass = o.pass && in_time;
    if (!pass) ++failures;
    std::printf("%s criterion %d: %s: %s [%.2f s%s]\n", pass ? "PASS" : "FAIL", c.id, c.name.c_str(),
                o.detail.c_str(), secs, in_time ? "" : ", over time limit");
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
