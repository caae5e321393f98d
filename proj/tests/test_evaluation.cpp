#include <gtest/gtest.h>

#include <algorithm>
#include <fstream>

#include <json.hpp>

#include "support/fixtures.hpp"
#include "support/oracles.hpp"

using namespace evpose;
using evpose::testing::TempDir;

namespace {

NormalizationContext context() {
  return {evpose::testing::kDhp19ZRef, evpose::testing::dhp19_like_calibration(), 1000.0};
}

std::vector<EvalRecord> fixture_records(const std::string& name) {
  return read_records(std::filesystem::path(EVPOSE_TEST_DATA) / name);
}

}  // namespace

TEST(Mpjpe, ExactPredictionIsZero) {
  std::mt19937_64 rng(1);
  const auto ctx = context();
  const NdcPose p = evpose::testing::random_ndc_pose(rng, kNumJoints, 0.9);
  const JointSet gt = ndc_denormalize(p, ctx);
  const NdcPose pred = ndc_normalize(gt, ctx);
  EXPECT_LT(mpjpe(pred, gt, ctx, p.valid).mean_mm, 1e-9);
}

TEST(Mpjpe, OneJointDisplacedByThreeFourFive) {
  std::mt19937_64 rng(2);
  const auto ctx = context();
  const NdcPose p = evpose::testing::random_ndc_pose(rng, kNumJoints, 0.5);
  const JointSet gt = ndc_denormalize(p, ctx);
  JointSet moved = gt;
  moved.joints[4] = moved.joints[4] + Vec3{3, 4, 0};
  const NdcPose pred = ndc_normalize(moved, ctx);
  const auto r = mpjpe(pred, gt, ctx, p.valid);
  EXPECT_NEAR(r.mean_mm, 5.0 / 13.0, 1e-9);
  EXPECT_EQ(r.valid_joints, 13u);
  EXPECT_NEAR(*r.per_joint_mm[4], 5.0, 1e-9);
}

TEST(Mpjpe, MatchesIndependentBackProjection) {
  std::mt19937_64 rng(3);
  const auto ctx = context();
  for (int trial = 0; trial < 100; ++trial) {
    const NdcPose gt_ndc = evpose::testing::random_ndc_pose(rng, kNumJoints, 0.9);
    const NdcPose pred = evpose::testing::random_ndc_pose(rng, kNumJoints, 0.9);
    const JointSet gt = ndc_denormalize(gt_ndc, ctx);
    JointMask m(kNumJoints, true);
    m[trial % kNumJoints] = false;
    double acc = 0.0;
    for (std::size_t j = 0; j < kNumJoints; ++j) {
      if (!m[j]) continue;
      const Vec3 a = oracle::backproject(pred.coords[j], ctx.calib, ctx.z_ref, 1000.0);
      const Vec3 b = oracle::backproject(gt_ndc.coords[j], ctx.calib, ctx.z_ref, 1000.0);
      acc += norm(a - b);
    }
    const double expect = acc / 12.0;
    EXPECT_NEAR(mpjpe(pred, gt, ctx, m).mean_mm, expect, 1e-9 * expect);
  }
  const NdcPose p = evpose::testing::random_ndc_pose(rng, 2, 0.5);
  EXPECT_THROW(mpjpe(p, ndc_denormalize(p, ctx), ctx, {false, false}), AllMaskedError);
}

TEST(Records, RoundTrip) {
  TempDir dir;
  std::vector<EvalRecord> recs = {{9, "clap", 2, 0, {1.5, std::nullopt}, 1.5},
                                  {11, "walk", 3, 64, {2.0, 4.0}, 3.0}};
  write_records(recs, dir / "r.csv");
  const auto back = read_records(dir / "r.csv");
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].subject_id, 9);
  EXPECT_EQ(back[0].movement, "clap");
  EXPECT_EQ(back[1].frame_index, 64u);
  EXPECT_EQ(back[0].per_joint_mm[1], std::nullopt);
  EXPECT_EQ(back[1].per_joint_mm[1], 4.0);
  EXPECT_THROW(parse_records({"subject,frame"}), FormatError);
  EXPECT_THROW(parse_records({"movement,mean_mm", "x,-1"}), FormatError);
}

TEST(Protocol, StrideSampling) {
  EXPECT_EQ(stride_sample(130, 64), (std::vector<std::size_t>{0, 64, 128}));
  EXPECT_EQ(stride_sample(5, 1), (std::vector<std::size_t>{0, 1, 2, 3, 4}));
  EXPECT_EQ(stride_sample(64, 64), (std::vector<std::size_t>{0}));
  EXPECT_THROW(stride_sample(5, 0), ConfigError);
}

TEST(Protocol, SubjectSplitMatchesSetFilter) {
  const std::set<int> train = {1, 3, 5, 7, 8};
  const std::set<int> test = {9, 11};
  std::vector<Recording> recs;
  for (int s = 1; s <= 11; ++s) {
    for (int cam = 0; cam < 2; ++cam) {
      Recording r;
      r.manifest.subject_id = s;
      r.manifest.camera_id = cam;
      r.frame_count = 100 + 10 * static_cast<std::size_t>(s);
      recs.push_back(r);
    }
  }
  const auto split = apply_protocol(recs, ProtocolConfig{train, test, 64});
  std::vector<FrameRef> exp_train, exp_test;
  for (std::size_t r = 0; r < recs.size(); ++r) {
    const int s = recs[r].manifest.subject_id;
    for (std::size_t f = 0; f < recs[r].frame_count; ++f) {
      if (std::find(train.begin(), train.end(), s) != train.end()) exp_train.push_back({r, f});
      if (std::find(test.begin(), test.end(), s) != test.end() && f % 64 == 0) exp_test.push_back({r, f});
    }
  }
  EXPECT_EQ(split.train, exp_train);
  EXPECT_EQ(split.test, exp_test);
  for (const auto& a : split.train) {
    for (const auto& b : split.test) {
      EXPECT_NE(recs[a.recording].manifest.subject_id, recs[b.recording].manifest.subject_id);
    }
  }
  EXPECT_THROW(apply_protocol(recs, ProtocolConfig{{1, 9}, {9, 11}, 64}), OverlapError);
}

TEST(Report, ConstantCountMovementMeans) {
  const auto rep = per_movement_report(fixture_records("movement_means_count.csv"));
  EXPECT_EQ(rep.rows.size(), 33u);
  EXPECT_NEAR(rep.mean_mm, 92.09, 0.01);
  EXPECT_NEAR(rep.std_population, 14.49, 0.05);
}

TEST(Report, VoxelMovementMeans) {
  const auto rep = per_movement_report(fixture_records("movement_means_voxel.csv"));
  EXPECT_EQ(rep.rows.size(), 33u);
  EXPECT_NEAR(rep.mean_mm, 95.51, 0.05);
  EXPECT_NEAR(rep.std_population, 15.30, 0.05);
}

TEST(Report, IndependentOfRecordOrder) {
  auto recs = fixture_records("movement_means_voxel.csv");
  const std::string a = encode_report(per_movement_report(recs), ReportFormat::csv);
  std::reverse(recs.begin(), recs.end());
  std::mt19937_64 rng(4);
  std::shuffle(recs.begin() + 3, recs.end(), rng);
  EXPECT_EQ(encode_report(per_movement_report(recs), ReportFormat::csv), a);
}

TEST(Report, SingleGroup) {
  std::vector<EvalRecord> recs = {{1, "clap", 0, 0, {}, 10.0}, {1, "clap", 0, 1, {}, 20.0}};
  const auto rep = per_movement_report(recs);
  ASSERT_EQ(rep.rows.size(), 1u);
  EXPECT_EQ(rep.mean_mm, 15.0);
  EXPECT_EQ(rep.std_population, 0.0);
  EXPECT_EQ(rep.rows[0].count, 2u);
  EXPECT_EQ(rep.rows[0].std_mm, 5.0);
}

TEST(Report, TwoMovementCsvShape) {
  std::vector<EvalRecord> recs = {{1, "b", 0, 0, {}, 10.0}, {1, "a", 0, 1, {}, 20.0}};
  const std::string csv = encode_report(per_movement_report(recs), ReportFormat::csv);
  EXPECT_EQ(csv,
            "# std=population\n"
            "movement,count,mean_mm,std_mm\n"
            "a,1,20.0000,0.0000\n"
            "b,1,10.0000,0.0000\n"
            "MEAN,2,15.0000,5.0000\n");
}

TEST(Report, EmptyIsErrorAndWritesNothing) {
  TempDir dir;
  EXPECT_THROW(per_movement_report(std::vector<EvalRecord>{}), EmptyError);
  EXPECT_THROW(emit_report(MovementReport{}, dir / "r.csv", ReportFormat::csv), EmptyError);
  EXPECT_FALSE(std::filesystem::exists(dir / "r.csv"));
}

TEST(Report, GoldenFile) {
  const auto rep = per_movement_report(fixture_records("movement_means_count.csv"));
  const auto golden = detail::read_bytes(std::filesystem::path(EVPOSE_TEST_DATA) / "movement_means_count.report.csv");
  const std::string text = encode_report(rep, ReportFormat::csv);
  EXPECT_EQ(std::string(golden.begin(), golden.end()), text);
}

TEST(Report, JsonLinesAndSvg) {
  const auto rep = per_movement_report(fixture_records("movement_means_count.csv"));
  const std::string jl = encode_report(rep, ReportFormat::json_lines);
  std::vector<nlohmann::json> lines;
  std::size_t start = 0;
  while (start < jl.size()) {
    const auto end = jl.find('\n', start);
    lines.push_back(nlohmann::json::parse(jl.substr(start, end - start)));
    start = end + 1;
  }
  ASSERT_EQ(lines.size(), 34u);
  EXPECT_EQ(lines.back()["summary"], "MEAN");
  EXPECT_NEAR(lines.back()["mean_mm"].get<double>(), 92.09, 0.01);
  EXPECT_EQ(lines.back()["std_kind"], "population");
  const std::string svg = encode_report(rep, ReportFormat::svg_bars);
  EXPECT_TRUE(svg.starts_with("<svg"));
  EXPECT_EQ(std::count(svg.begin(), svg.end(), '\n'), 1 + 1 + 33 * 3 + 1 + 1);
  EXPECT_EQ(parse_report_format("jsonl"), ReportFormat::json_lines);
  EXPECT_THROW(parse_report_format("pdf"), ConfigError);
}
