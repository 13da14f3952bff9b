#pragma once

// Controller that runs one Agent per learning AP: keeps each AP's
// observation and broadcast histories, picks options and power levels, turns
// transmission outcomes into replay records and fires the PPO update every
// update_interval_txops learning TXOPs.

#include <cstddef>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <memory>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <vector>

#include "csr/agent.hpp"
#include "csr/geometry.hpp"
#include "csr/random.hpp"
#include "csr/simulation.hpp"
#include "json.hpp"

namespace csr {

struct HmarlOptions {
  AgentConfig agent;
  bool training = true;
  bool greedy = false;                  // argmax instead of sampling
  bool sharing_ap_max_power = false;    // sharing AP bypasses its power policy
  std::uint64_t policy_seed = 4;
};

inline constexpr std::uint64_t kAgentInitStream = 100;
inline constexpr std::uint64_t kAgentActStream = 200;

class HmarlController final : public Controller {
 public:
  using Real = double;

  HmarlController(const Topology& topology, const RadioConfig& radio, const MacTiming& timing,
                  std::span<const ApRole> roles, HmarlOptions options)
      : opt_(std::move(options)), num_aps_(topology.num_aps()), levels_(radio.num_power_levels()) {
    opt_.agent.validate();
    if (roles.size() != num_aps_) throw std::invalid_argument("roles must list every AP");
    std::size_t max_stas = 0;
    for (std::size_t a = 0; a < num_aps_; ++a) max_stas = std::max(max_stas, topology.num_stas(a));
    slots_.resize(num_aps_);
    for (std::size_t a = 0; a < num_aps_; ++a) {
      if (roles[a] != ApRole::Learning) continue;
      const ObservationLayout lay{num_aps_, topology.num_stas(a), max_stas, static_cast<std::size_t>(timing.e0),
                                  levels_};
      Rng init = make_rng(opt_.policy_seed, kAgentInitStream + a);
      auto& s = slots_[a];
      s.agent = std::make_unique<Agent<Real>>(lay, a, opt_.agent, init);
      s.rng = make_rng(opt_.policy_seed, kAgentActStream + a);
      const std::size_t m = opt_.agent.history_length;
      s.history.assign(m, std::vector<Real>(lay.size(), Real(0)));
      s.messages.assign(m, std::vector<Real>(num_aps_ * kMessageDim, Real(0)));
      s.own_obs.assign(m, std::vector<Real>{});
    }
  }

  bool is_learning(std::size_t ap) const { return ap < num_aps_ && slots_[ap].agent != nullptr; }
  Agent<Real>& agent(std::size_t ap) { return *require(ap).agent; }
  const Agent<Real>& agent(std::size_t ap) const { return *slots_.at(ap).agent; }
  std::size_t updates() const { return updates_; }
  std::size_t learning_txops() const { return learning_txops_; }
  const HmarlOptions& options() const { return opt_; }
  void set_training(bool on) { opt_.training = on; }
  void set_greedy(bool on) { opt_.greedy = on; }
  void set_log(std::ostream* out) { log_ = out; }

  // STA chosen for the current TXOP; empty for the sharing AP and outside TXOPs
  std::optional<std::size_t> current_option(std::size_t ap) const {
    const auto& s = slots_.at(ap);
    return s.option_active ? std::optional<std::size_t>(s.option) : std::nullopt;
  }

  std::vector<double> poll(std::size_t ap, const Observation& z, const TxopInfo& info) override {
    auto& s = require(ap);
    (void)info;
    s.pending_obs = s.agent->layout().encode<Real>(z);
    push(s.history, s.pending_obs);
    if (!opt_.agent.use_messages) return std::vector<double>(kMessageDim, 0.0);
    return s.agent->encode(s.pending_obs);
  }

  void broadcast(std::size_t ap, std::span<const double> messages, const TxopInfo& info) override {
    auto& s = require(ap);
    std::vector<Real> m(messages.begin(), messages.end());
    if (!opt_.agent.use_messages) std::fill(m.begin(), m.end(), Real(0));
    push(s.messages, std::move(m));
    push(s.own_obs, opt_.agent.use_messages ? s.pending_obs : std::vector<Real>{});
    s.sum_r_tot = s.sum_r_ind = Real(0);
    s.option_active = false;
    if (info.sharing_ap == ap || !s.agent->hierarchical()) return;
    const auto input = snapshot(s);
    const auto r = s.agent->select_option(input, s.rng, opt_.greedy);
    s.option = r.index;
    s.option_active = true;
    if (opt_.training) {
      s.high_pending = Transition<Real>{input, r.index, r.index, 0, 0, r.log_prob, false};
    }
  }

  TxChoice decide(std::size_t ap, const Observation& z, const TxopInfo& info,
                  std::optional<std::size_t> forced) override {
    auto& s = require(ap);
    if (info.transmission_index > 1) push(s.history, s.agent->layout().encode<Real>(z));
    s.low_pending.reset();
    if (forced && opt_.sharing_ap_max_power) return {forced, 0};
    const auto input = snapshot(s);
    std::size_t option = 0;
    std::size_t action = 0;
    ActResult<Real> r;
    if (s.agent->hierarchical()) {
      if (forced) {
        option = *forced;
      } else if (s.option_active) {
        option = s.option;
      } else {
        throw std::logic_error("shared AP asked to decide before its option was chosen");
      }
      r = s.agent->select_action(input, option, false, s.rng, opt_.greedy);
      action = r.index;
    } else {
      r = s.agent->select_action(input, forced.value_or(0), forced.has_value(), s.rng, opt_.greedy);
      action = r.index;
      option = action / levels_;
    }
    if (opt_.training) s.low_pending = Transition<Real>{input, option, action, 0, 0, r.log_prob, forced.has_value()};
    return {option, s.agent->hierarchical() ? action : action % levels_};
  }

  void outcome(std::size_t ap, const TxopInfo&, const ApTransmission&, double r_tot, double r_ind) override {
    auto& s = require(ap);
    s.sum_r_tot += r_tot;
    s.sum_r_ind += r_ind;
    if (!s.low_pending) return;
    s.low_pending->r_tot = r_tot;
    s.low_pending->r_ind = r_ind;
    s.agent->store_low(std::move(*s.low_pending));
    s.low_pending.reset();
  }

  void txop_end(std::size_t ap, const TxopInfo&) override {
    auto& s = require(ap);
    if (s.high_pending) {
      s.high_pending->r_tot = s.sum_r_tot;
      s.high_pending->r_ind = s.sum_r_ind;
      s.agent->store_high(std::move(*s.high_pending));
      s.high_pending.reset();
    }
    s.option_active = false;
  }

  void txop_complete(bool learning_txop) override {
    if (!learning_txop || !opt_.training) return;
    if (++learning_txops_ % opt_.agent.update_interval_txops == 0) update_all();
  }

  void update_all() {
    nlohmann::json line{{"update_index", updates_}, {"learning_txops", learning_txops_}};
    auto agents = nlohmann::json::array();
    for (std::size_t a = 0; a < num_aps_; ++a) {
      if (!slots_[a].agent) continue;
      const UpdateReport rep = slots_[a].agent->ppo_update();
      const auto& lb = rep.first_epoch;
      auto mean = [](double v, std::size_t n) { return n ? v / static_cast<double>(n) : 0.0; };
      nlohmann::json j{{"ap", a},
                       {"skipped", rep.skipped},
                       {"low_buffer", rep.low_samples},
                       {"high_buffer", rep.high_samples}};
      if (rep.skipped) {
        j["warning"] = "empty replay buffers, update skipped";
      } else {
        j["actor_low_loss"] = mean(lb.actor_low, lb.low_samples);
        j["actor_high_loss"] = mean(lb.actor_high, lb.high_samples);
        j["critic_low_loss"] = mean(lb.critic_low, lb.low_samples);
        j["critic_high_loss"] = mean(lb.critic_high, lb.high_samples);
        j["entropy_low"] = mean(lb.entropy_low, lb.low_samples);
        j["entropy_high"] = mean(lb.entropy_high, lb.high_samples);
      }
      agents.push_back(std::move(j));
    }
    line["agents"] = std::move(agents);
    ++updates_;
    if (log_) *log_ << line.dump() << '\n';
  }

  void save(const std::filesystem::path& dir) const {
    for (const auto& s : slots_)
      if (s.agent) s.agent->save(dir);
  }

  void load(const std::filesystem::path& dir) {
    for (auto& s : slots_)
      if (s.agent) s.agent->load(dir);
  }

 private:
  struct Slot {
    std::unique_ptr<Agent<Real>> agent;
    Rng rng;
    std::deque<std::vector<Real>> history;   // oldest first
    std::deque<std::vector<Real>> messages;  // oldest first
    std::deque<std::vector<Real>> own_obs;   // encoder input behind each message entry
    std::vector<Real> pending_obs;
    std::size_t option = 0;
    bool option_active = false;
    Real sum_r_tot = 0;
    Real sum_r_ind = 0;
    std::optional<Transition<Real>> low_pending;
    std::optional<Transition<Real>> high_pending;
  };

  Slot& require(std::size_t ap) {
    if (!is_learning(ap)) throw std::logic_error("controller called for a non-learning AP");
    return slots_[ap];
  }

  static void push(std::deque<std::vector<Real>>& ring, std::vector<Real> v) {
    ring.pop_front();
    ring.push_back(std::move(v));
  }

  static PolicyInput<Real> snapshot(const Slot& s) {
    PolicyInput<Real> in;
    for (const auto& h : s.history) in.history.insert(in.history.end(), h.begin(), h.end());
    for (const auto& m : s.messages) in.messages.insert(in.messages.end(), m.begin(), m.end());
    in.own_observations.assign(s.own_obs.begin(), s.own_obs.end());
    return in;
  }

  HmarlOptions opt_;
  std::size_t num_aps_;
  std::size_t levels_;
  std::vector<Slot> slots_;
  std::size_t updates_ = 0;
  std::size_t learning_txops_ = 0;
  std::ostream* log_ = nullptr;
};

}  // namespace csr
