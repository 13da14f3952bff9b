#include <gtest/gtest.h>

#include <boost/math/special_functions/gamma.hpp>

#include <cmath>
#include <vector>

#include "csr/mac.hpp"

using namespace csr;

namespace {

double chi_square_sf(double x, double dof) { return boost::math::gamma_q(dof / 2.0, x / 2.0); }

}  // namespace

TEST(Timing, DefaultsAndValidation) {
  MacTiming t;
  EXPECT_NO_THROW(t.validate());
  EXPECT_EQ(t.transmission_slots(), 126);
  EXPECT_NEAR(t.packet_slots * t.slot_us, 1080.0, 1e-9);
  EXPECT_NEAR(t.ack_slots * t.slot_us, 36.0, 1e-9);
  t.cw_min = 30;
  EXPECT_THROW(t.validate(), std::invalid_argument);
  t = {};
  t.cw_max = 31;
  EXPECT_THROW(t.validate(), std::invalid_argument);
  t = {};
  t.sifs_slots = 0;
  EXPECT_THROW(t.validate(), std::invalid_argument);
}

TEST(Backoff, DoublingSequenceCaps) {
  std::vector<int> seq{31};
  for (int i = 0; i < 7; ++i) seq.push_back(next_contention_window(seq.back(), 1023));
  EXPECT_EQ(seq, (std::vector<int>{31, 63, 127, 255, 511, 1023, 1023, 1023}));
}

TEST(Backoff, UniformChiSquarePerWindow) {
  Rng rng(42);
  for (int w : {31, 63, 127, 255, 511, 1023}) {
    const int n = 10000;
    std::vector<int> counts(w + 1, 0);
    for (int i = 0; i < n; ++i) {
      const int b = draw_backoff(w, rng);
      ASSERT_GE(b, 0);
      ASSERT_LE(b, w);
      ++counts[b];
    }
    const double expected = static_cast<double>(n) / (w + 1);
    double chi = 0.0;
    for (int c : counts) chi += (c - expected) * (c - expected) / expected;
    EXPECT_GT(chi_square_sf(chi, w), 0.01) << "cw " << w;
  }
}

TEST(Contention, SoleContenderWinsWithinDifsPlusCwMin) {
  MacTiming t;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    TxopState s(3, t);
    Rng rng(seed);
    const std::vector<std::uint8_t> idle(3, 1), traffic{0, 1, 0};
    int slots = 0;
    while (s.phase == Phase::Contention) {
      contention_step(s, t, idle, traffic, rng);
      ++slots;
      ASSERT_LE(slots, t.difs_slots + t.cw_min + 1);
    }
    EXPECT_EQ(s.phase, Phase::Polling);
    EXPECT_EQ(s.sharing_ap, 1u);
    EXPECT_EQ(s.contenders[1].cw, t.cw_min);
  }
}

TEST(Contention, BusyChannelFreezesBackoff) {
  MacTiming t;
  TxopState s(1, t);
  Rng rng(1);
  const std::vector<std::uint8_t> busy{0}, idle{1}, traffic{1};
  contention_step(s, t, busy, traffic, rng);
  const int b = s.contenders[0].backoff;
  for (int i = 0; i < 20; ++i) contention_step(s, t, busy, traffic, rng);
  EXPECT_EQ(s.contenders[0].backoff, b);
  EXPECT_EQ(s.contenders[0].idle_run, 0);
  for (int i = 0; i < t.difs_slots; ++i) contention_step(s, t, idle, traffic, rng);
  EXPECT_EQ(s.contenders[0].backoff, b);
  if (b > 0) {
    contention_step(s, t, idle, traffic, rng);
    EXPECT_EQ(s.contenders[0].backoff, b - 1);
  }
}

TEST(Contention, ForcedCollisionsWalkTheWindowSequence) {
  MacTiming t;
  TxopState s(2, t);
  Rng rng(9);
  const std::vector<std::uint8_t> idle(2, 1), traffic(2, 1);
  std::vector<int> seen{s.contenders[0].cw};
  for (int round = 0; round < 7; ++round) {
    for (auto& c : s.contenders) {
      c.armed = true;
      c.backoff = 0;
      c.idle_run = t.difs_slots;
    }
    const auto res = contention_step(s, t, idle, traffic, rng);
    ASSERT_TRUE(res.collision());
    EXPECT_EQ(s.phase, Phase::Contention);
    EXPECT_FALSE(s.sharing_ap.has_value());
    EXPECT_EQ(s.contenders[0].cw, s.contenders[1].cw);
    seen.push_back(s.contenders[0].cw);
  }
  EXPECT_EQ(seen, (std::vector<int>{31, 63, 127, 255, 511, 1023, 1023, 1023}));
}

TEST(Contention, RejectsWrongPhase) {
  MacTiming t;
  TxopState s(1, t);
  s.phase = Phase::Polling;
  Rng rng(1);
  const std::vector<std::uint8_t> one{1};
  EXPECT_THROW(contention_step(s, t, one, one, rng), std::logic_error);
}
