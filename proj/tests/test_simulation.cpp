#include <gtest/gtest.h>

#include <map>
#include <sstream>
#include <vector>

#include "csr/simulation.hpp"

using namespace csr;

namespace {

Topology single_ap(std::size_t stas = 1) {
  Topology t;
  t.rooms = {{0, 0, 10, 10}};
  t.ap_positions = {{5, 5}};
  t.sta_positions = {{}};
  for (std::size_t s = 0; s < stas; ++s) t.sta_positions[0].push_back({6.0, 5.0 + 0.5 * static_cast<double>(s)});
  return t;
}

Topology isolated_pair() {
  Topology t;
  t.rooms = {{0, 0, 10, 10}, {10, 0, 20, 10}};
  t.ap_positions = {{5, 5}, {15, 5}};
  t.sta_positions = {{{6, 5}}, {{14, 5}}};
  t.walls = {{{10, 0}, {10, 10}}};
  return t;
}

SimulationConfig base_config(Topology t) {
  SimulationConfig c;
  c.topology = std::move(t);
  c.radio.shadowing_std_db = 0.0;
  c.channel_seed = 11;
  c.traffic_seed = 12;
  return c;
}

class ZeroPowerController final : public Controller {
 public:
  std::vector<double> poll(std::size_t, const Observation&, const TxopInfo&) override {
    return std::vector<double>(kMessageDim, 0.0);
  }
  void broadcast(std::size_t, std::span<const double>, const TxopInfo&) override {}
  TxChoice decide(std::size_t, const Observation&, const TxopInfo&, std::optional<std::size_t> f) override {
    return {f ? f : std::optional<std::size_t>(0), 4};
  }
  void outcome(std::size_t, const TxopInfo&, const ApTransmission&, double, double) override {}
  void txop_end(std::size_t, const TxopInfo&) override {}
};

// Records the call order and the broadcast contents.
class RecordingController final : public Controller {
 public:
  std::vector<std::string> calls;
  std::vector<std::vector<double>> broadcasts;
  std::vector<double> r_tot;

  std::vector<double> poll(std::size_t ap, const Observation&, const TxopInfo&) override {
    calls.push_back("poll" + std::to_string(ap));
    return std::vector<double>(kMessageDim, 1.0 + static_cast<double>(ap));
  }
  void broadcast(std::size_t ap, std::span<const double> m, const TxopInfo&) override {
    calls.push_back("bcast" + std::to_string(ap));
    broadcasts.emplace_back(m.begin(), m.end());
  }
  TxChoice decide(std::size_t ap, const Observation& z, const TxopInfo&, std::optional<std::size_t> f) override {
    calls.push_back("decide" + std::to_string(ap));
    return {f ? f : std::optional<std::size_t>(z.sta_offsets.size() - 1), 0};
  }
  void outcome(std::size_t ap, const TxopInfo&, const ApTransmission&, double rt, double) override {
    calls.push_back("outcome" + std::to_string(ap));
    r_tot.push_back(rt);
  }
  void txop_end(std::size_t ap, const TxopInfo&) override { calls.push_back("end" + std::to_string(ap)); }
};

}  // namespace

TEST(Simulation, EmptyNetworkOnlyCountsSlots) {
  auto c = base_config(single_ap());
  c.traffic.arrival_rate_per_slot = 0.0;
  FullPowerController ctl(1);
  Simulation sim(c, &ctl);
  sim.run_slots(10000);
  EXPECT_EQ(sim.now(), 10000);
  EXPECT_TRUE(sim.records().empty());
  EXPECT_EQ(sim.completed_txops(), 0u);
}

TEST(Simulation, SingleApAirtimeMatchesSchedule) {
  auto c = base_config(single_ap());
  FullPowerController ctl(1);
  Simulation sim(c, &ctl);
  const std::int64_t n = 1000000;
  sim.run_slots(n);
  const auto m = sim.metrics(n / 10);
  const MacTiming& t = c.timing;
  const double expected = t.e0 * t.packet_slots /
                          (t.difs_slots + t.cw_min / 2.0 + t.polling_slots + t.e0 * t.transmission_slots());
  EXPECT_NEAR(m.throughput, expected, 0.02);
  for (const auto& r : sim.records()) ASSERT_TRUE(r.aps[0].success());
}

TEST(Simulation, SingleApPeriodIsDifsBackoffPollingAndTransmissions) {
  auto c = base_config(single_ap());
  FullPowerController ctl(1);
  Simulation sim(c, &ctl);
  sim.run_slots(20000);
  const auto& recs = sim.records();
  ASSERT_GT(recs.size(), 30u);
  const MacTiming& t = c.timing;
  for (std::size_t i = 0; i + 1 < recs.size(); ++i) {
    if (recs[i].txop_index == recs[i + 1].txop_index) {
      EXPECT_EQ(recs[i + 1].slot_start, recs[i].slot_end);
    } else {
      const std::int64_t gap = recs[i + 1].slot_start - recs[i].slot_end;
      EXPECT_GE(gap, t.difs_slots + t.polling_slots);
      EXPECT_LE(gap, t.difs_slots + t.cw_min + t.polling_slots);
    }
  }
}

TEST(Simulation, SaturationAndLittlesLaw) {
  auto c = base_config(single_ap(2));
  FullPowerController ctl(1);
  Simulation sim(c, &ctl);
  const std::int64_t warm = 100000, n = 600000;
  sim.run_slots(warm);
  double queue_sum = 0.0;
  std::int64_t empty_slots = 0;
  for (std::int64_t i = 0; i < n; ++i) {
    sim.step();
    const std::size_t len = sim.queue(0, 0).size() + sim.queue(0, 1).size();
    queue_sum += static_cast<double>(len);
    empty_slots += sim.queue(0, 0).empty() || sim.queue(0, 1).empty();
  }
  EXPECT_LT(static_cast<double>(empty_slots) / n, 0.01);
  std::size_t served = 0;
  double delay_sum = 0.0;
  for (const auto& d : sim.delays())
    if (d.slot >= warm) {
      ++served;
      delay_sum += static_cast<double>(d.delay_slots);
    }
  const double lambda = static_cast<double>(served) / n;
  const double w = delay_sum / static_cast<double>(served);
  EXPECT_NEAR(queue_sum / n / lambda, w, 0.05 * w);
}

TEST(Simulation, ParallelIsolatedApsDoubleThroughput) {
  auto c = base_config(isolated_pair());
  c.radio.wall_loss_db = 120.0;
  FullPowerController ctl(2);
  Simulation sim(c, &ctl);
  sim.run_slots(400000);
  const auto m = sim.metrics(40000);
  const MacTiming& t = c.timing;
  // two contenders: E[min of two uniform backoffs] replaces E[backoff]
  EXPECT_GT(m.throughput, 1.75);
  EXPECT_LT(m.throughput, 2.0 * t.e0 * t.packet_slots / (t.difs_slots + t.polling_slots + t.e0 * t.transmission_slots()));
}

TEST(Simulation, RoundRobinPersistsAcrossTxops) {
  auto c = base_config(single_ap(2));
  FullPowerController ctl(1);
  Simulation sim(c, &ctl);
  sim.run_slots(5000);
  const auto& recs = sim.records();
  ASSERT_GE(recs.size(), 6u);
  for (std::size_t i = 0; i < 6; ++i) EXPECT_EQ(*recs[i].aps[0].sta, i % 2);
}

TEST(Simulation, ZeroPowerEverywhereProducesNoSamples) {
  auto c = base_config(isolated_pair());
  ZeroPowerController ctl;
  Simulation sim(c, &ctl);
  sim.run_slots(20000);
  ASSERT_FALSE(sim.records().empty());
  for (const auto& r : sim.records())
    for (const auto& a : r.aps) {
      EXPECT_FALSE(a.sinr.has_value());
      EXPECT_FALSE(a.success());
    }
  EXPECT_TRUE(sim.delays().empty());
}

TEST(Simulation, RecordInvariantsAndCallOrder) {
  auto c = base_config(isolated_pair());
  c.radio.wall_loss_db = 0.0;
  RecordingController ctl;
  Simulation sim(c, &ctl);
  sim.run_slots(3000);
  ASSERT_GE(sim.completed_txops(), 2u);
  std::map<std::size_t, int> per_txop;
  for (const auto& r : sim.records()) {
    ++per_txop[r.txop_index];
    EXPECT_EQ(r.slot_end - r.slot_start, c.timing.transmission_slots());
    for (const auto& a : r.aps)
      if (a.transmitted) {
        EXPECT_TRUE(a.sta.has_value());
      }
  }
  for (std::size_t k = 1; k <= sim.completed_txops(); ++k) EXPECT_EQ(per_txop[k], c.timing.e0);
  // poll both, broadcast both, then (decide x2, outcome x2) x E0, then end x2
  std::vector<std::string> first(ctl.calls.begin(), ctl.calls.begin() + 18);
  EXPECT_EQ(first[0].substr(0, 4), "poll");
  EXPECT_EQ(first[1].substr(0, 4), "poll");
  EXPECT_EQ(first[2].substr(0, 5), "bcast");
  EXPECT_EQ(first[4].substr(0, 6), "decide");
  EXPECT_EQ(first[6].substr(0, 7), "outcome");
  EXPECT_EQ(first[16].substr(0, 3), "end");
  ASSERT_FALSE(ctl.broadcasts.empty());
  EXPECT_EQ(ctl.broadcasts[0], (std::vector<double>{1, 1, 1, 1, 2, 2, 2, 2}));
  for (double r : ctl.r_tot) EXPECT_GE(r, 0.0);
}

TEST(Simulation, LegacyTxopSendsZeroMessagesAndSilencesLearners) {
  auto c = base_config(isolated_pair());
  c.roles = {ApRole::Learning, ApRole::Legacy};
  RecordingController ctl;
  Simulation sim(c, &ctl);
  sim.run_slots(200000);
  bool saw_legacy = false;
  for (const auto& r : sim.records()) {
    if (!r.legacy_txop) continue;
    saw_legacy = true;
    EXPECT_EQ(r.sharing_ap, 1u);
    EXPECT_FALSE(r.aps[0].transmitted);
    EXPECT_EQ(r.aps[1].power_level, 0u);
  }
  EXPECT_TRUE(saw_legacy);
  for (const auto& b : ctl.broadcasts)
    for (std::size_t d = 0; d < kMessageDim; ++d) EXPECT_EQ(b[kMessageDim + d], 0.0);
}

TEST(Simulation, DeterministicTraceAndFields) {
  auto run = [] {
    auto c = base_config(isolated_pair());
    c.radio.shadowing_std_db = 3.0;
    c.radio.wall_loss_db = 0.0;
    FullPowerController ctl(2);
    Simulation sim(c, &ctl);
    std::ostringstream out;
    sim.set_trace(&out);
    sim.run_slots(30000);
    return out.str();
  };
  const std::string a = run();
  EXPECT_EQ(a, run());
  std::istringstream in(a);
  std::string line;
  ASSERT_TRUE(std::getline(in, line));
  const auto j = nlohmann::json::parse(line);
  for (const char* key : {"txop_index", "sharing_ap", "participants", "transmissions"}) EXPECT_TRUE(j.contains(key));
  EXPECT_EQ(j["transmissions"].size(), 3u);
}

TEST(Simulation, AllLegacyMatchesPlainCsma) {
  auto c = base_config(isolated_pair());
  c.radio.wall_loss_db = 0.0;
  c.roles = {ApRole::Legacy, ApRole::Legacy};
  Simulation sim(c, nullptr);
  sim.run_slots(200000);
  for (const auto& r : sim.records()) {
    EXPECT_TRUE(r.legacy_txop);
    int tx = 0;
    for (const auto& a : r.aps) tx += a.transmitted;
    EXPECT_LE(tx, 1);
  }
  const auto m = sim.metrics(20000);
  const MacTiming& t = c.timing;
  EXPECT_GT(m.throughput, 0.8);
  EXPECT_LT(m.throughput, t.e0 * t.packet_slots / double(t.difs_slots + t.polling_slots + t.e0 * t.transmission_slots()));
}

TEST(Simulation, CollisionSetsAndFairnessTrace) {
  auto c = base_config(isolated_pair());
  c.radio.wall_loss_db = 0.0;
  c.radio.sinr_threshold_db = 60.0;  // only solo transmissions clear it
  FullPowerController ctl(2);
  Simulation sim(c, &ctl);
  sim.run_slots(100000);
  for (const auto& r : sim.records()) {
    int fails = 0;
    for (const auto& a : r.aps) fails += a.failed();
    if (r.aps[0].transmitted && r.aps[1].transmitted) {
      EXPECT_EQ(fails, 2);
    }
  }
  ASSERT_EQ(sim.fairness().size(), 2u * (100000 / c.fairness_interval_slots));
  for (const auto& f : sim.fairness()) {
    EXPECT_GE(f.windowed_throughput, 0.0);
    EXPECT_LE(f.windowed_throughput, 1.0);
  }
}
