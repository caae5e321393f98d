#include <gtest/gtest.h>

#include "support/fixtures.hpp"
#include "support/oracles.hpp"

using namespace evpose;
using evpose::testing::random_stream;
using evpose::testing::TempDir;

TEST(Windows, ExactDivisionAndRemainder) {
  EXPECT_EQ(window_stream(random_stream(1, 15000), 7500).size(), 2u);
  EXPECT_EQ(window_stream(random_stream(2, 7499), 7500).size(), 0u);
  EXPECT_THROW(window_stream(random_stream(2, 10), 0), ConfigError);
}

TEST(Windows, IndexBookkeeping) {
  const auto s = random_stream(3, 20000);
  const auto w = window_stream(s, 7500);
  ASSERT_EQ(w.size(), 2u);
  for (std::size_t k = 0; k < 2; ++k) {
    EXPECT_EQ(w[k].index, k);
    EXPECT_EQ(w[k].events.size(), 7500u);
    EXPECT_EQ(w[k].events.data(), s.events.data() + 7500 * k);
    EXPECT_EQ(w[k].t_start, s.events[7500 * k].t);
    EXPECT_EQ(w[k].t_end, s.events[7500 * k + 7499].t);
  }
}

TEST(ConstantCount, SinglePixelHoldsN) {
  std::vector<Event> ev(7500, Event{5, 7, 100, 1});
  for (std::size_t i = 0; i < ev.size(); ++i) ev[i].t = static_cast<Timestamp>(i);
  const auto f = constant_count(make_window(ev, 16, 16), CountMode::unsigned_count);
  for (int y = 0; y < 16; ++y) {
    for (int x = 0; x < 16; ++x) EXPECT_EQ(f.at(0, x, y), (x == 5 && y == 7) ? 7500.0 : 0.0);
  }
  EXPECT_EQ(f.norm_max, 7500.0);
}

TEST(ConstantCount, SignedSumCancels) {
  std::vector<Event> ev = {{3, 3, 0, 1}, {3, 3, 1, -1}};
  const auto f = constant_count(make_window(ev, 8, 8), CountMode::signed_sum);
  EXPECT_EQ(f.at(0, 3, 3), 0.0);
}

TEST(ConstantCount, MatchesTallyOracleInEveryMode) {
  const auto s = random_stream(77, 7500, 40, 30);
  const auto w = window_stream(s, 7500).at(0);
  for (CountMode mode : {CountMode::unsigned_count, CountMode::signed_sum, CountMode::two_channel}) {
    const auto f = constant_count(w, mode);
    const auto expect = oracle::tally(w.events, mode);
    ASSERT_EQ(f.channels, mode == CountMode::two_channel ? 2 : 1);
    for (int c = 0; c < f.channels; ++c) {
      for (int y = 0; y < 30; ++y) {
        for (int x = 0; x < 40; ++x) {
          const auto it = expect.find({c, y, x});
          EXPECT_EQ(f.at(c, x, y), it == expect.end() ? 0.0 : it->second);
        }
      }
    }
  }
}

TEST(CountMode, Names) {
  EXPECT_EQ(parse_count_mode("unsigned-count"), CountMode::unsigned_count);
  EXPECT_EQ(parse_count_mode("signed-sum"), CountMode::signed_sum);
  EXPECT_EQ(parse_count_mode("two-channel"), CountMode::two_channel);
  EXPECT_EQ(to_string(CountMode::two_channel), "two-channel");
  EXPECT_THROW(parse_count_mode("log"), ConfigError);
}

TEST(Voxel, FirstEventLandsInBinZero) {
  const auto w = tent_weights(0.0, 4);
  EXPECT_EQ(w.lo_bin, 0);
  EXPECT_EQ(w.lo_weight, 1.0);
  EXPECT_EQ(w.hi_weight, 0.0);
  std::vector<Event> ev = {{1, 1, 10, 1}};
  const auto g = voxelize(make_window(ev, 4, 4), 4);
  EXPECT_EQ(g.at(0, 1, 1), 1.0);
  double others = 0.0;
  for (double v : g.values) others += std::abs(v);
  EXPECT_EQ(others, 1.0);
}

TEST(Voxel, HalfwayBetweenBins) {
  const auto w = tent_weights(1.5, 4);
  EXPECT_EQ(w.lo_bin, 1);
  EXPECT_EQ(w.hi_bin, 2);
  EXPECT_EQ(w.lo_weight, 0.5);
  EXPECT_EQ(w.hi_weight, 0.5);
  // t* = 3 * (t - 0) / 6 = 1.5 for the middle event
  std::vector<Event> ev = {{0, 0, 0, -1}, {2, 1, 3, 1}, {0, 0, 6, -1}};
  const auto g = voxelize(make_window(ev, 4, 2), 4);
  EXPECT_EQ(g.at(1, 2, 1), 0.5);
  EXPECT_EQ(g.at(2, 2, 1), 0.5);
  EXPECT_EQ(g.at(0, 2, 1), 0.0);
  EXPECT_EQ(g.at(3, 2, 1), 0.0);
}

TEST(Voxel, LastBinAndPartitionOfUnity) {
  const auto last = tent_weights(3.0, 4);
  EXPECT_EQ(last.lo_bin, 3);
  EXPECT_EQ(last.hi_bin, -1);
  EXPECT_EQ(last.lo_weight, 1.0);
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 3.0);
  for (int i = 0; i < 1000; ++i) {
    const auto w = tent_weights(u(rng), 4);
    EXPECT_NEAR(std::abs(w.lo_weight) + std::abs(w.hi_weight), 1.0, 1e-15);
  }
}

TEST(Voxel, MatchesDirectTentEvaluation) {
  const auto s = random_stream(21, 7500, 30, 20);
  const auto w = window_stream(s, 7500).at(0);
  for (int bins : {1, 2, 4, 7}) {
    const auto g = voxelize(w, bins);
    const auto expect = oracle::voxel_direct(w.events, 30, 20, bins);
    ASSERT_EQ(g.values.size(), expect.size());
    for (std::size_t i = 0; i < expect.size(); ++i) ASSERT_NEAR(g.values[i], expect[i], 1e-9) << i;
  }
}

TEST(Voxel, MassConservation) {
  const auto s = random_stream(8, 7500 * 4);
  for (const auto& w : window_stream(s, 7500)) {
    const auto g = voxelize(w, 4);
    double total = 0.0, polarity = 0.0;
    for (double v : g.values) total += v;
    for (const auto& e : w.events) polarity += e.p;
    EXPECT_LE(std::abs(total - polarity), 1e-9 * 7500);
  }
}

TEST(Voxel, ZeroDurationWindow) {
  std::vector<Event> ev = {{0, 0, 5, 1}, {1, 0, 5, 1}};
  const auto g = voxelize(make_window(ev, 2, 1), 4);
  EXPECT_EQ(g.at(0, 0, 0), 1.0);
  EXPECT_EQ(g.at(0, 1, 0), 1.0);
  EXPECT_THROW(voxelize(make_window(ev, 2, 1), 0), ConfigError);
}

TEST(Normalize, DegenerateAndSingle) {
  std::vector<double> zeros(6, 0.0);
  EXPECT_EQ(normalize_for_input(zeros), zeros);
  std::vector<double> one(6, 0.0);
  one[2] = 5.0;
  EXPECT_EQ(normalize_for_input(one)[2], 1.0);
  EXPECT_THROW(normalize_for_input(std::span<const double>{}), ValidationError);
}

TEST(Normalize, RandomMatchesRecomputation) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-3.0, 2.0);
  std::vector<double> v(100);
  for (auto& x : v) x = u(rng);
  double peak = 0.0;
  for (double x : v) peak = std::max(peak, std::abs(x));
  const auto n = normalize_for_input(v);
  for (std::size_t i = 0; i < v.size(); ++i) EXPECT_DOUBLE_EQ(n[i], v[i] / peak);
  double npeak = 0.0;
  for (double x : n) npeak = std::max(npeak, std::abs(x));
  EXPECT_EQ(npeak, 1.0);
}

TEST(TensorIo, RoundTripBothKinds) {
  TempDir dir;
  const auto s = random_stream(5, 300, 12, 9);
  const auto w = window_stream(s, 300).at(0);
  const Tensor a = to_tensor(constant_count(w, CountMode::two_channel));
  write_tensor(a, dir / "a");
  const Tensor a2 = read_tensor(dir / "a");
  EXPECT_EQ(a2.dims, (std::vector<std::size_t>{2, 9, 12}));
  EXPECT_EQ(a2.data, a.data);
  EXPECT_EQ(a2.meta, a.meta);
  EXPECT_EQ(a2.require("mode"), "two-channel");
  const Tensor b = to_tensor(voxelize(w, 4));
  write_tensor(b, dir / "b");
  const Tensor b2 = read_tensor(dir / "b");
  EXPECT_EQ(b2.require_int("B"), 4);
  EXPECT_EQ(b2.require_int("t_end"), w.t_end);
  EXPECT_EQ(b2.data, b.data);
  EXPECT_THROW(read_tensor(dir / "missing"), IoError);
}
