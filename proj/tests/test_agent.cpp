#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <map>
#include <numeric>
#include <sstream>
#include <vector>

#include "agent_fixture.hpp"
#include "csr/agent.hpp"
#include "csr/hmarl.hpp"

using namespace csr;
using csr::testing::make_micro_world;
using csr::testing::micro_agent_config;

namespace {

ObservationLayout small_layout(std::size_t stas = 2) { return {2, stas, stas, 3, 5}; }

PolicyInput<double> random_input(const Agent<double>& a, Rng& rng, bool live_own = true) {
  PolicyInput<double> in;
  in.history.resize(a.history_size());
  in.messages.resize(a.messages_size());
  for (auto& v : in.history) v = uniform01(rng) * 2 - 1;
  for (auto& v : in.messages) v = uniform01(rng) * 2 - 1;
  in.own_observations.resize(a.config().history_length);
  if (live_own)
    for (auto& z : in.own_observations) {
      z.resize(a.layout().size());
      for (auto& v : z) v = uniform01(rng);
    }
  return in;
}

}  // namespace

TEST(Gae, OneStepWhenLambdaIsZero) {
  const std::vector<double> r{1.0, -2.0, 0.5, 3.0};
  const std::vector<double> v{0.3, 0.1, -0.4, 2.0};
  const auto a = gae_advantages(r, v, 0.5, 0.0);
  for (std::size_t t = 0; t < r.size(); ++t) {
    const double next = t + 1 < v.size() ? v[t + 1] : 0.0;
    EXPECT_NEAR(a[t], r[t] + 0.5 * next - v[t], 1e-15);
  }
}

TEST(Gae, GeometricSumOracle) {
  const std::vector<double> r(3, 1.0), v(3, 0.0);
  const auto a = gae_advantages(r, v, 0.5, 0.95);
  EXPECT_NEAR(a[0], 1.0 + 0.475 + 0.475 * 0.475, 1e-15);
  EXPECT_NEAR(a[0], 1.700625, 1e-15);
  EXPECT_NEAR(a[2], 1.0, 1e-15);
}

TEST(Gae, ConstantValueClosedForm) {
  const double c = 2.5, g = 0.5, l = 0.95;
  const std::size_t n = 6;
  const std::vector<double> r(n, 0.0), v(n, c);
  const auto a = gae_advantages(r, v, g, l);
  for (std::size_t t = 0; t < n; ++t) {
    // delta = (g - 1) c except the last, which bootstraps from 0: delta = -c
    double expect = 0.0, w = 1.0;
    for (std::size_t k = t; k < n; ++k, w *= g * l) expect += w * (k + 1 < n ? (g - 1) * c : -c);
    EXPECT_NEAR(a[t], expect, 1e-12);
  }
  EXPECT_THROW(gae_advantages(r, std::vector<double>(n - 1), g, l), std::invalid_argument);
}

TEST(Agent, EncoderDeterministicFourDimensional) {
  for (std::size_t k : {2u, 5u}) {
    Rng init(3);
    Agent<double> a({k, 3, 4, 3, 5}, 0, AgentConfig{}, init);
    std::vector<double> z(a.layout().size());
    for (std::size_t i = 0; i < z.size(); ++i) z[i] = std::sin(double(i));
    const auto m1 = a.encode(z), m2 = a.encode(z);
    ASSERT_EQ(m1.size(), kMessageDim);
    EXPECT_EQ(m1, m2);
    auto p = a.net(kEncoder).params();
    std::fill(p.begin(), p.end(), 0.0);
    for (double v : a.encode(z)) EXPECT_EQ(v, 0.0);
  }
}

TEST(Agent, ArchitectureWidths) {
  Rng init(1);
  Agent<double> a(small_layout(), 0, AgentConfig{}, init);
  const std::size_t base = a.history_size() + a.messages_size();
  EXPECT_EQ(a.net(kEncoder).widths(), (std::vector<std::size_t>{a.layout().size(), 16, 8, 4}));
  EXPECT_EQ(a.net(kHighActor).widths(), (std::vector<std::size_t>{base, 250, 120, 120, 2}));
  EXPECT_EQ(a.net(kLowActor).widths(), (std::vector<std::size_t>{base + 2, 250, 120, 120, 5}));
  for (NetId c : {kHighCriticTot, kHighCriticInd})
    EXPECT_EQ(a.net(c).widths(), (std::vector<std::size_t>{base, 250, 120, 120, 1}));
  for (NetId c : {kLowCriticTot, kLowCriticInd})
    EXPECT_EQ(a.net(c).widths(), (std::vector<std::size_t>{base + 2, 250, 120, 120, 1}));
  EXPECT_EQ(a.messages_size(), 5u * 2 * 4);

  AgentConfig flat;
  flat.structure = PolicyStructure::Flat;
  Rng init2(1);
  Agent<double> f(small_layout(), 0, flat, init2);
  EXPECT_FALSE(f.has_net(kHighActor));
  EXPECT_EQ(f.net(kLowActor).widths().back(), 10u);
}

TEST(Agent, SingleStaOptionIsCertain) {
  Rng init(2), rng(5);
  Agent<double> a(small_layout(1), 0, AgentConfig{}, init);
  const auto in = random_input(a, rng);
  for (int i = 0; i < 50; ++i) {
    const auto r = a.select_option(in, rng);
    EXPECT_EQ(r.index, 0u);
    EXPECT_NEAR(r.log_prob, 0.0, 1e-15);
  }
}

TEST(Agent, UniformOptionHeadIsFair) {
  Rng init(2), rng(6);
  Agent<double> a(small_layout(2), 0, AgentConfig{}, init);
  auto p = a.net(kHighActor).params();
  std::fill(p.begin(), p.end(), 0.0);
  const auto in = random_input(a, rng);
  const int n = 10000;
  int ones = 0;
  for (int i = 0; i < n; ++i) ones += a.select_option(in, rng).index == 1;
  EXPECT_NEAR(ones, n / 2, 3 * std::sqrt(n * 0.25));
}

TEST(Agent, PowerHeadFavoringMaxPicksIt) {
  Rng init(2), rng(7);
  Agent<double> a(small_layout(), 0, AgentConfig{}, init);
  auto& net = a.net(kLowActor);
  auto p = net.params();
  std::fill(p.begin(), p.end(), 0.0);
  // output bias block is the last five parameters
  p[p.size() - 5] = 5.0;
  const auto in = random_input(a, rng);
  const auto r = a.select_action(in, 1, false, rng, true);
  EXPECT_EQ(r.index, 0u);
  EXPECT_EQ(net.output_size(), 5u);
}

TEST(Agent, FlatForcedMaskStaysInRow) {
  AgentConfig c;
  c.structure = PolicyStructure::Flat;
  Rng init(4), rng(8);
  Agent<double> a(small_layout(), 0, c, init);
  const auto in = random_input(a, rng);
  for (int i = 0; i < 500; ++i) {
    const auto r = a.select_action(in, 1, true, rng);
    EXPECT_EQ(r.index / 5, 1u);
  }
}

TEST(Agent, FullGradientMatchesFiniteDifferences) {
  auto w = make_micro_world(micro_agent_config(), 12000);
  auto& a = w.controller->agent(0);
  ASSERT_GT(a.low_buffer().size(), 20u);
  ASSERT_GT(a.high_buffer().size(), 3u);
  csr::testing::jitter_parameters(a, 99);
  const auto check = csr::testing::finite_difference_check(a);
  EXPECT_LT(check.max_relative_error, 1e-4);
  EXPECT_LT(check.max_absolute_error, 1e-8);
  EXPECT_GT(check.compared, check.parameters / 2);
  for (std::size_t id = 0; id < kNumNets; ++id) EXPECT_GT(check.per_net[id], 0u) << kNetNames[id];
}

TEST(Agent, EncoderReceivesGradientOnlyThroughOwnSlot) {
  auto w = make_micro_world(micro_agent_config(), 20000);
  auto& a = w.controller->agent(1);
  const auto batch = a.prepare_batch();
  auto g = a.zero_grads();
  a.loss_and_gradients(batch, &g);
  double norm = 0.0;
  for (double v : g[kEncoder]) norm += v * v;
  EXPECT_GT(norm, 0.0);
  // without the own observations every message slot is a constant
  for (auto* buf : {&a.low_buffer(), &a.high_buffer()})
    for (auto& t : *buf) t.input.own_observations.assign(t.input.own_observations.size(), {});
  auto g2 = a.zero_grads();
  a.loss_and_gradients(batch, &g2);
  for (double v : g2[kEncoder]) EXPECT_EQ(v, 0.0);
}

TEST(Agent, RatioOneGivesPlainPolicyGradientAndSaturationGivesNone) {
  AgentConfig c = micro_agent_config();
  Rng init(9), rng(10);
  Agent<double> a(small_layout(), 0, c, init);
  const auto in = random_input(a, rng, false);
  const auto act = a.select_action(in, 0, false, rng);
  a.store_low({in, 0, act.index, 1.0, 0.0, act.log_prob, false});
  PreparedBatch<double> b;
  b.low_advantage = {2.0};
  b.low_target_tot = {0.0};
  b.low_target_ind = {0.0};
  auto g = a.zero_grads();
  const auto lb = a.loss_and_gradients(b, &g);
  EXPECT_NEAR(lb.actor_low, -2.0, 1e-12);
  // -A * grad log pi at ratio one
  std::vector<double> dlogits(5, 0.0);
  nn::Tape<double> tape;
  std::vector<double> x = in.history;
  x.insert(x.end(), in.messages.begin(), in.messages.end());
  x.insert(x.end(), {1.0, 0.0});
  a.net(kLowActor).forward(x, tape);
  const auto d = nn::softmax<double>(tape.output());
  nn::log_prob_gradient<double>(d, act.index, -2.0, dlogits);
  std::vector<double> expect(a.net(kLowActor).num_params(), 0.0);
  a.net(kLowActor).backward(tape, dlogits, expect);
  for (std::size_t i = 0; i < expect.size(); ++i) EXPECT_NEAR(g[kLowActor][i], expect[i], 1e-12);

  // ratio 1 + 2 eps with positive advantage: clipped branch, zero actor gradient
  Agent<double> s(small_layout(), 0, c, init);
  s.store_low({in, 0, act.index, 1.0, 0.0, s.select_action(in, 0, false, rng).log_prob, false});
  s.low_buffer()[0].action = act.index;
  {
    nn::Tape<double> t2;
    s.net(kLowActor).forward(x, t2);
    const double lp = nn::softmax<double>(t2.output()).log_probs[act.index];
    s.low_buffer()[0].old_log_prob = lp - std::log(1.0 + 2 * c.clip_epsilon);
  }
  auto g2 = s.zero_grads();
  const auto lb2 = s.loss_and_gradients(b, &g2);
  EXPECT_NEAR(lb2.actor_low, -(1.0 + c.clip_epsilon) * 2.0, 1e-12);
  for (double v : g2[kLowActor]) EXPECT_EQ(v, 0.0);
}

TEST(Agent, SurrogateContributionBoundedByClip) {
  auto w = make_micro_world(micro_agent_config(), 20000);
  auto& a = w.controller->agent(0);
  const double eps = a.config().clip_epsilon;
  Rng rng(12);
  for (auto& t : a.low_buffer()) t.old_log_prob += std::log(0.2 + 4.0 * uniform01(rng));
  const auto batch = a.prepare_batch();
  const auto all = a.low_buffer();
  a.high_buffer().clear();
  for (std::size_t i = 0; i < all.size(); ++i) {
    a.low_buffer() = {all[i]};
    PreparedBatch<double> b;
    b.low_advantage = {batch.low_advantage[i]};
    b.low_target_tot = {0.0};
    b.low_target_ind = {0.0};
    const auto lb = a.loss_and_gradients(b, nullptr);
    EXPECT_LE(std::abs(lb.actor_low), (1 + eps) * std::abs(batch.low_advantage[i]) + 1e-12);
  }
}

TEST(Agent, CriticsRegressToConstantReturn) {
  AgentConfig c = micro_agent_config();
  c.gamma = 0.0;
  Rng init(13), rng(14);
  Agent<double> a(small_layout(), 0, c, init);
  std::vector<Transition<double>> low, high;
  for (int i = 0; i < 8; ++i) {
    const auto in = random_input(a, rng);
    const std::size_t o = i % 2;
    const auto act = a.select_action(in, o, false, rng);
    low.push_back({in, o, act.index, 1.5, -0.5, act.log_prob, false});
    const auto opt = a.select_option(in, rng);
    high.push_back({in, opt.index, opt.index, 1.5, -0.5, opt.log_prob, false});
  }
  int steps = 0;
  for (; steps < 5000; steps += static_cast<int>(c.ppo_epochs)) {
    for (auto& t : low) a.store_low(t);
    for (auto& t : high) a.store_high(t);
    a.ppo_update();
    EXPECT_TRUE(a.low_buffer().empty());
    EXPECT_TRUE(a.high_buffer().empty());
  }
  auto value = [&](NetId id, const Transition<double>& t, bool opt) {
    std::vector<double> x = t.input.history;
    x.insert(x.end(), t.input.messages.begin(), t.input.messages.end());
    if (opt) {
      x.push_back(t.option == 0);
      x.push_back(t.option == 1);
    }
    return a.net(id).predict(x)[0];
  };
  for (const auto& t : low) {
    EXPECT_NEAR(value(kLowCriticTot, t, true), 1.5, 1e-2);
    EXPECT_NEAR(value(kLowCriticInd, t, true), -0.5, 1e-2);
  }
  for (const auto& t : high) {
    EXPECT_NEAR(value(kHighCriticTot, t, false), 1.5, 1e-2);
    EXPECT_NEAR(value(kHighCriticInd, t, false), -0.5, 1e-2);
  }
}

TEST(Agent, EmptyUpdateIsSkipped) {
  Rng init(1);
  Agent<double> a(small_layout(), 0, micro_agent_config(), init);
  const auto before = std::vector<double>(a.net(kLowActor).params().begin(), a.net(kLowActor).params().end());
  EXPECT_TRUE(a.ppo_update().skipped);
  EXPECT_TRUE(std::equal(before.begin(), before.end(), a.net(kLowActor).params().begin()));
}

TEST(Agent, CheckpointRoundTripAndShapeMismatch) {
  const auto dir = std::filesystem::temp_directory_path() / "csr_agent_ckpt";
  std::filesystem::remove_all(dir);
  Rng i1(1), i2(2), i3(3);
  Agent<double> a(small_layout(), 0, micro_agent_config(), i1);
  Agent<double> b(small_layout(), 0, micro_agent_config(), i2);
  a.save(dir);
  b.load(dir);
  for (std::size_t id = 0; id < kNumNets; ++id) EXPECT_TRUE(a.net(NetId(id)) == b.net(NetId(id)));
  Agent<double> c(small_layout(3), 0, micro_agent_config(), i3);
  EXPECT_THROW(c.load(dir), std::runtime_error);
  std::filesystem::remove_all(dir);
}

TEST(Controller, TransitionsPerTxopAndOptionConstancy) {
  auto cfg = micro_agent_config();
  cfg.update_interval_txops = 20;
  csr::testing::MicroWorld w;
  w.sim.topology = csr::testing::two_bss_topology();
  w.sim.roles.assign(2, ApRole::Learning);
  HmarlOptions o;
  o.agent = cfg;
  HmarlController ctl(w.sim.topology, w.sim.radio, w.sim.timing, w.sim.roles, o);
  std::ostringstream log;
  ctl.set_log(&log);
  Simulation sim(w.sim, &ctl);
  std::ostringstream trace;
  sim.set_trace(&trace);

  // first TXOP in which both APs participate: records per AP and reward aggregation
  std::size_t sharing = 0, shared = 0;
  for (;;) {
    const std::size_t done = sim.completed_txops();
    while (sim.completed_txops() == done) sim.step();
    const std::string text = trace.str();
    const auto last = text.find_last_of('\n', text.size() - 2);
    const auto j = nlohmann::json::parse(text.substr(last == std::string::npos ? 0 : last + 1));
    if (j["participants"].size() == 2) {
      sharing = j["sharing_ap"];
      shared = 1 - sharing;
      break;
    }
    ASSERT_LT(ctl.learning_txops(), 19u) << "no TXOP with both APs before the first update";
    for (std::size_t a = 0; a < 2; ++a) {
      ctl.agent(a).low_buffer().clear();
      ctl.agent(a).high_buffer().clear();
    }
  }
  EXPECT_EQ(ctl.agent(sharing).low_buffer().size(), 3u);
  EXPECT_EQ(ctl.agent(sharing).high_buffer().size(), 0u);
  EXPECT_EQ(ctl.agent(shared).low_buffer().size(), 3u);
  ASSERT_EQ(ctl.agent(shared).high_buffer().size(), 1u);
  double sum_tot = 0.0, sum_ind = 0.0;
  for (const auto& t : ctl.agent(shared).low_buffer()) {
    sum_tot += t.r_tot;
    sum_ind += t.r_ind;
    EXPECT_EQ(t.option, ctl.agent(shared).high_buffer()[0].option);
  }
  EXPECT_EQ(ctl.agent(shared).high_buffer()[0].r_tot, sum_tot);
  EXPECT_EQ(ctl.agent(shared).high_buffer()[0].r_ind, sum_ind);

  // the update fires on the 20th learning TXOP and leaves buffers empty
  while (ctl.learning_txops() < 19) sim.step();
  EXPECT_EQ(ctl.updates(), 0u);
  while (ctl.learning_txops() < 20) sim.step();
  EXPECT_EQ(ctl.updates(), 1u);
  for (std::size_t a = 0; a < 2; ++a) {
    EXPECT_TRUE(ctl.agent(a).low_buffer().empty());
    EXPECT_TRUE(ctl.agent(a).high_buffer().empty());
  }
  const auto line = nlohmann::json::parse(log.str().substr(0, log.str().find('\n')));
  EXPECT_EQ(line["update_index"], 0);
  EXPECT_EQ(line["agents"].size(), 2u);

  // option constancy across every traced TXOP
  sim.run_slots(50000);
  std::istringstream in(trace.str());
  std::string row;
  std::size_t checked = 0;
  while (std::getline(in, row)) {
    const auto j = nlohmann::json::parse(row);
    const std::size_t s = j["sharing_ap"];
    std::map<std::size_t, nlohmann::json> first;
    for (const auto& tx : j["transmissions"])
      for (const auto& ap : tx["aps"]) {
        const std::size_t id = ap["ap"];
        if (id == s) continue;
        if (!first.count(id)) first[id] = ap["sta"];
        EXPECT_EQ(ap["sta"], first[id]);
        ++checked;
      }
  }
  EXPECT_GT(checked, 100u);
}

TEST(Controller, SharingApMaxPowerFlagBypassesPolicy) {
  csr::testing::MicroWorld w;
  w.sim.topology = csr::testing::two_bss_topology();
  w.sim.roles.assign(2, ApRole::Learning);
  HmarlOptions o;
  o.agent = micro_agent_config();
  o.sharing_ap_max_power = true;
  HmarlController ctl(w.sim.topology, w.sim.radio, w.sim.timing, w.sim.roles, o);
  Simulation sim(w.sim, &ctl);
  while (sim.completed_txops() < 1) sim.step();
  const std::size_t sharing = sim.records()[0].sharing_ap;
  for (const auto& r : sim.records()) EXPECT_EQ(r.aps[sharing].power_level, 0u);
  EXPECT_TRUE(ctl.agent(sharing).low_buffer().empty());
}

TEST(Controller, IppoMessagesAreZero) {
  auto cfg = micro_agent_config();
  cfg.use_messages = false;
  auto w = make_micro_world(cfg, 20000);
  for (std::size_t a = 0; a < 2; ++a)
    for (const auto& t : w.controller->agent(a).low_buffer()) {
      for (double v : t.input.messages) EXPECT_EQ(v, 0.0);
      for (const auto& z : t.input.own_observations) EXPECT_TRUE(z.empty());
    }
}
