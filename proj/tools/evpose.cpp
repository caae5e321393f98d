// evpose: batch front end for the event-to-pose toolkit.

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "evpose/evpose.hpp"

namespace fs = std::filesystem;
using namespace evpose;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;
constexpr int kExitValidation = 4;

std::string window_name(std::size_t index, std::string_view suffix = "") {
  char buf[32];
  std::snprintf(buf, sizeof buf, "window_%06zu", index);
  return std::string(buf) + std::string(suffix);
}

void ensure_directory(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create directory " + dir.string());
}

void require_file(const fs::path& p) {
  if (!fs::is_regular_file(p)) throw IoError("no such file: " + p.string());
}

// Runs fn(i) for i in [0, n) on up to `threads` workers. If any call throws,
// the exception of the lowest failing index is rethrown, so failures do not
// depend on scheduling either.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn) {
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(std::max(threads, 1)), n);
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

// Number of consecutive windows starting at 0 for which `probe` exists.
std::size_t count_windows(const fs::path& dir, std::string_view suffix) {
  if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  std::size_t n = 0;
  while (fs::is_regular_file(dir / window_name(n, suffix))) ++n;
  return n;
}

EventStream load_events(const fs::path& path, const RunConfig& cfg) {
  require_file(path);
  return read_events(path, event_format_from_path(path), cfg.sensor());
}

std::vector<double> features_of(const Tensor& t, int pool) {
  if (t.dims.size() != 3) throw ShapeMismatchError("input tensor must be C x H x W");
  return pool_features(t.data, static_cast<int>(t.dims[0]), static_cast<int>(t.dims[1]),
                       static_cast<int>(t.dims[2]), pool);
}

struct Target {
  MarginalHeatmaps heatmaps;
  NdcPose pose;
  JointSet joints_mm;
  double z_ref = 0.0;
  int subject = 0;
  std::string movement;
  int camera = 0;
};

Target load_target(const fs::path& dir, std::size_t index) {
  Target t;
  const Tensor hm = read_tensor(dir / window_name(index, ".heatmaps"));
  t.heatmaps = heatmaps_from_tensor(hm);
  t.z_ref = hm.require_double("z_ref");
  t.subject = static_cast<int>(hm.require_int("subject"));
  t.movement = hm.require("movement");
  t.camera = static_cast<int>(hm.require_int("camera"));
  t.pose = read_ndc_pose(dir / window_name(index, ".ndc.csv"));
  t.joints_mm = read_joint_set(dir / window_name(index, ".joints.csv"));
  return t;
}

// ---------------------------------------------------------------------------

int cmd_simulate(const RunConfig& cfg, const fs::path& frames, const fs::path& timestamps,
                 const fs::path& out) {
  require_file(timestamps);
  const auto seq = read_frame_directory(frames, timestamps);
  const EventStream stream = simulate_sequence(seq, cfg.simulator());
  write_events(stream, out, event_format_from_path(out));
  std::cerr << "simulate: " << stream.events.size() << " events\n";
  return kExitOk;
}

int cmd_aggregate(const RunConfig& cfg, const fs::path& events, const fs::path& out,
                  const std::string& repr) {
  if (repr != "count" && repr != "voxel") throw ConfigError("--repr must be count or voxel");
  const EventStream stream = load_events(events, cfg);
  const auto windows = window_stream(stream, cfg.window_events);
  ensure_directory(out);
  parallel_for(windows.size(), cfg.threads, [&](std::size_t i) {
    const Tensor t = repr == "count" ? to_tensor(constant_count(windows[i], cfg.count_mode))
                                     : to_tensor(voxelize(windows[i], cfg.voxel_bins));
    write_tensor(t, out / window_name(i));
  });
  std::cerr << "aggregate: " << windows.size() << " windows\n";
  return kExitOk;
}

int cmd_render_gt(const RunConfig& cfg, const fs::path& skeletons, const fs::path& calib_path,
                  const fs::path& events, const fs::path& out) {
  require_file(skeletons);
  require_file(calib_path);
  const auto samples = read_skeletons(skeletons);
  const CameraCalibration calib = read_calibration(calib_path);
  const EventStream stream = load_events(events, cfg);
  const auto windows = window_stream(stream, cfg.window_events);
  const HeatmapSpec spec = cfg.heatmap_spec();
  ensure_directory(out);
  parallel_for(windows.size(), cfg.threads, [&](std::size_t i) {
    const SkeletonSample s = interpolate_joints(samples, windows[i].t_end);
    const JointSet cam = world_to_camera(s, calib);
    const NormalizationContext ctx = make_context(cam, calib, cfg.depth_half_extent);
    const NdcPose ndc = ndc_normalize(cam, ctx);
    Tensor t = to_tensor(render_heatmaps(ndc, spec));
    t.meta["z_ref"] = detail::format_double(ctx.z_ref);
    t.meta["t_end"] = std::to_string(windows[i].t_end);
    t.meta["subject"] = std::to_string(s.subject_id);
    t.meta["movement"] = s.movement;
    t.meta["camera"] = std::to_string(s.camera_id);
    write_tensor(t, out / window_name(i, ".heatmaps"));
    write_ndc_pose(ndc, out / window_name(i, ".ndc.csv"));
    write_joint_set(cam, out / window_name(i, ".joints.csv"));
  });
  std::cerr << "render-gt: " << windows.size() << " windows\n";
  return kExitOk;
}

int cmd_train_toy(const RunConfig& cfg, const fs::path& inputs, const fs::path& targets,
                  const fs::path& out, fs::path curve_path) {
  const std::size_t n = count_windows(inputs, ".txt");
  if (n == 0) throw EmptyDatasetError("no input windows in " + inputs.string());
  if (count_windows(targets, ".heatmaps.txt") < n) {
    throw ShapeMismatchError("fewer target windows than input windows");
  }
  std::vector<TrainSample> data(n);
  parallel_for(n, cfg.threads, [&](std::size_t i) {
    data[i].features = features_of(read_tensor(inputs / window_name(i)), cfg.pool);
    const Target t = load_target(targets, i);
    data[i].heatmaps = t.heatmaps;
    data[i].pose = t.pose;
  });
  const TrainResult result = train_toy(data, cfg.training());
  if (curve_path.empty()) curve_path = out.string() + ".loss.csv";
  write_tensor(to_tensor(result.predictor), out);
  detail::write_text(curve_path, encode_loss_curve(result.curve));
  if (!result.curve.empty()) {
    std::cerr << "train-toy: epoch 1 loss " << result.curve.front().total << ", epoch "
              << result.curve.back().epoch << " loss " << result.curve.back().total << "\n";
  }
  return kExitOk;
}

int cmd_eval(const RunConfig& cfg, const fs::path& inputs, const fs::path& targets,
             const fs::path& calib_path, const fs::path& checkpoint,
             std::optional<double> oracle_noise, const fs::path& out) {
  if (checkpoint.empty() == !oracle_noise) {
    throw ConfigError("eval needs exactly one of --checkpoint or --oracle");
  }
  require_file(calib_path);
  const CameraCalibration calib = read_calibration(calib_path);
  std::optional<ToyPredictor> predictor;
  if (!checkpoint.empty()) {
    predictor = toy_predictor_from_tensor(read_tensor(checkpoint));
    if (inputs.empty()) throw ConfigError("--checkpoint needs --inputs");
  }
  const ProtocolConfig protocol = cfg.protocol();
  protocol.validate();
  const std::size_t n = count_windows(targets, ".heatmaps.txt");
  const auto frames = stride_sample(n, protocol.frame_stride);
  std::vector<std::optional<EvalRecord>> records(frames.size());
  parallel_for(frames.size(), cfg.threads, [&](std::size_t k) {
    const std::size_t i = frames[k];
    const Target t = load_target(targets, i);
    if (!protocol.test_subjects.empty() && !protocol.test_subjects.contains(t.subject)) return;
    if (t.pose.valid_count() == 0) return;
    StagePrediction pred;
    if (predictor) {
      pred = predictor->predict(features_of(read_tensor(inputs / window_name(i)), cfg.pool));
    } else {
      const HeatmapSpec spec{t.heatmaps.resolution, t.heatmaps.sigma};
      pred = oracle_predict(t.pose, spec, *oracle_noise, cfg.seed + i, cfg.stages, cfg.epsilon);
    }
    const NdcPose p = predict_pose(pred, pred.stages() - 1, cfg.temperature).to_ndc(t.pose.valid);
    const NormalizationContext ctx{t.z_ref, calib, cfg.depth_half_extent};
    const MpjpeResult m = mpjpe(p, t.joints_mm, ctx, t.pose.valid);
    records[k] = EvalRecord{t.subject, t.movement, t.camera, i, m.per_joint_mm, m.mean_mm};
  });
  std::vector<EvalRecord> kept;
  for (auto& r : records) {
    if (r) kept.push_back(std::move(*r));
  }
  write_records(kept, out);
  std::cerr << "eval: " << kept.size() << " records\n";
  return kExitOk;
}

int cmd_report(const fs::path& records_path, const fs::path& out, const std::string& format) {
  const ReportFormat f = parse_report_format(format);
  require_file(records_path);
  const auto records = read_records(records_path);
  const MovementReport rep = per_movement_report(records);
  emit_report(rep, out, f);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"evpose: event-camera 3D human pose toolkit"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", "evpose 1.0.0");

  std::string config_file;
  app.add_option("--config", config_file, "key = value config file; flags override it");
  std::map<std::string, std::string> flag_values;
  const RunConfig defaults;
  for (const auto& key : RunConfig::keys()) {
    app.add_option("--" + key.name, flag_values[key.name],
                   key.help + " [default: " + key.get(defaults) + "]")
        ->type_name("VALUE")
        ->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  }

  fs::path frames, timestamps, sim_out;
  auto* sim = app.add_subcommand("simulate", "intensity frames -> events");
  sim->add_option("--frames", frames, "directory of P5 .pgm frames")->required();
  sim->add_option("--timestamps", timestamps, "one timestamp (us) per frame")->required();
  sim->add_option("--out", sim_out, "event file (.bin or .csv)")->required();

  fs::path agg_events, agg_out;
  std::string repr = "count";
  auto* agg = app.add_subcommand("aggregate", "events -> one tensor per window");
  agg->add_option("--events", agg_events, "event file")->required();
  agg->add_option("--out", agg_out, "output directory")->required();
  agg->add_option("--repr", repr, "count | voxel")->capture_default_str();

  fs::path gt_skel, gt_calib, gt_events, gt_out;
  auto* gt = app.add_subcommand("render-gt", "skeletons -> heatmaps and NDC poses per window");
  gt->add_option("--skeletons", gt_skel, "skeleton CSV")->required();
  gt->add_option("--calib", gt_calib, "camera calibration")->required();
  gt->add_option("--events", gt_events, "event file defining the windows")->required();
  gt->add_option("--out", gt_out, "output directory")->required();

  fs::path tr_inputs, tr_targets, tr_out, tr_curve;
  auto* tr = app.add_subcommand("train-toy", "train the toy predictor");
  tr->add_option("--inputs", tr_inputs, "aggregate output directory")->required();
  tr->add_option("--targets", tr_targets, "render-gt output directory")->required();
  tr->add_option("--out", tr_out, "checkpoint stem")->required();
  tr->add_option("--loss-curve", tr_curve, "loss curve CSV [default: <out>.loss.csv]");

  fs::path ev_inputs, ev_targets, ev_calib, ev_ckpt, ev_out;
  std::optional<double> ev_oracle;
  auto* ev = app.add_subcommand("eval", "per-frame MPJPE records");
  ev->add_option("--inputs", ev_inputs, "aggregate output directory");
  ev->add_option("--targets", ev_targets, "render-gt output directory")->required();
  ev->add_option("--calib", ev_calib, "camera calibration")->required();
  ev->add_option("--checkpoint", ev_ckpt, "toy predictor checkpoint stem");
  ev->add_option("--oracle", ev_oracle, "use the oracle predictor with this NDC noise std");
  ev->add_option("--out", ev_out, "records CSV")->required();

  fs::path rp_records, rp_out;
  std::string rp_format = "csv";
  auto* rp = app.add_subcommand("report", "per-movement summary of eval records");
  rp->add_option("--records", rp_records, "records CSV")->required();
  rp->add_option("--out", rp_out, "report file")->required();
  rp->add_option("--format", rp_format, "csv | jsonl | svg")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    RunConfig cfg;
    if (!config_file.empty()) {
      require_file(config_file);
      cfg.load_file(config_file);
    }
    for (const auto& key : RunConfig::keys()) {
      if (app.count("--" + key.name) > 0) cfg.set(key.name, flag_values[key.name]);
    }
    try {
      cfg.validate();
    } catch (const OverlapError& e) {
      throw ConfigError(e.what());
    }

    if (sim->parsed()) return cmd_simulate(cfg, frames, timestamps, sim_out);
    if (agg->parsed()) return cmd_aggregate(cfg, agg_events, agg_out, repr);
    if (gt->parsed()) return cmd_render_gt(cfg, gt_skel, gt_calib, gt_events, gt_out);
    if (tr->parsed()) return cmd_train_toy(cfg, tr_inputs, tr_targets, tr_out, tr_curve);
    if (ev->parsed()) {
      return cmd_eval(cfg, ev_inputs, ev_targets, ev_calib, ev_ckpt, ev_oracle, ev_out);
    }
    if (rp->parsed()) return cmd_report(rp_records, rp_out, rp_format);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kExitIo;
  } catch (const ValidationError& e) {
    std::cerr << "invalid input: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return kExitConfig;
}
