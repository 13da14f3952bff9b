#pragma once

// Slot-level world: traffic, contention, TXOP polling and the E0 coordinated
// transmissions, with decisions delegated to a Controller.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "csr/channel.hpp"
#include "csr/mac.hpp"
#include "csr/observation.hpp"
#include "csr/random.hpp"
#include "csr/rewards.hpp"
#include "csr/traffic.hpp"
#include "json.hpp"

namespace csr {

enum class ApRole { Learning, Legacy };

struct TxopInfo {
  std::size_t txop_index = 0;
  std::size_t sharing_ap = 0;
  std::span<const std::uint8_t> participants;
  int transmission_index = 0;  // 0 while polling, then 1..E0
  std::size_t sharing_target = 0;  // first-transmission target of the sharing AP
};

struct TxChoice {
  std::optional<std::size_t> sta;
  std::size_t power_level = 0;
};

// Decision interface for learning APs. Calls arrive in TXOP order: poll and
// broadcast once per participant, then per transmission decide and outcome,
// then txop_end.
class Controller {
 public:
  virtual ~Controller() = default;
  virtual std::vector<double> poll(std::size_t ap, const Observation& z, const TxopInfo& info) = 0;
  virtual void broadcast(std::size_t ap, std::span<const double> messages, const TxopInfo& info) = 0;
  virtual TxChoice decide(std::size_t ap, const Observation& z, const TxopInfo& info,
                          std::optional<std::size_t> forced_sta) = 0;
  virtual void outcome(std::size_t ap, const TxopInfo& info, const ApTransmission& tx, double r_tot,
                       double r_ind) = 0;
  virtual void txop_end(std::size_t ap, const TxopInfo& info) = 0;
  virtual void txop_complete(bool /*learning_txop*/) {}
};

// Every participant at full power; non-sharing APs cycle through their STAs.
class FullPowerController final : public Controller {
 public:
  explicit FullPowerController(std::size_t num_aps) : next_(num_aps, 0) {}
  std::vector<double> poll(std::size_t, const Observation&, const TxopInfo&) override {
    return std::vector<double>(kMessageDim, 0.0);
  }
  void broadcast(std::size_t, std::span<const double>, const TxopInfo&) override {}
  TxChoice decide(std::size_t ap, const Observation& z, const TxopInfo&, std::optional<std::size_t> forced) override {
    if (forced) return {forced, 0};
    const std::size_t sta = next_[ap]++ % z.sta_offsets.size();
    return {sta, 0};
  }
  void outcome(std::size_t, const TxopInfo&, const ApTransmission&, double, double) override {}
  void txop_end(std::size_t, const TxopInfo&) override {}

 private:
  std::vector<std::size_t> next_;
};

struct SimulationConfig {
  Topology topology;
  RadioConfig radio;
  MacTiming timing;
  TrafficConfig traffic;
  std::vector<ApRole> roles;  // empty: all learning
  RewardVariant reward = RewardVariant::TotPlusInd;
  double u_floor = kDefaultUtilizationFloor;
  std::int64_t window_slots = 55556;
  std::int64_t fairness_interval_slots = 11111;
  std::uint64_t channel_seed = 1;
  std::uint64_t traffic_seed = 2;
};

struct RewardEvent {
  std::int64_t slot = 0;
  double r_tot = 0.0;
  double r_ind_sum = 0.0;
  bool learning_txop = false;
};

class Simulation {
 public:
  Simulation(SimulationConfig config, Controller* controller)
      : cfg_(std::move(config)),
        controller_(controller),
        channel_rng_(make_rng(cfg_.channel_seed, 0)),
        traffic_rng_(make_rng(cfg_.traffic_seed, 0)),
        mac_rng_(make_rng(cfg_.channel_seed, 1)) {
    cfg_.topology.validate();
    cfg_.radio.validate();
    cfg_.timing.validate();
    cfg_.traffic.validate();
    const std::size_t k = cfg_.topology.num_aps();
    if (cfg_.roles.empty()) cfg_.roles.assign(k, ApRole::Learning);
    if (cfg_.roles.size() != k) throw std::invalid_argument("roles must list every AP");
    if (cfg_.window_slots <= 0 || cfg_.fairness_interval_slots <= 0)
      throw std::invalid_argument("window and fairness interval must be positive");
    bool any_learning = false;
    for (auto r : cfg_.roles) any_learning |= r == ApRole::Learning;
    if (any_learning && controller_ == nullptr) throw std::invalid_argument("learning APs need a controller");

    gains_ = sample_large_scale(cfg_.topology, cfg_.radio, channel_rng_);
    mac_ = TxopState(k, cfg_.timing);
    sliding_ = SlidingThroughput(k, static_cast<std::size_t>(cfg_.window_slots));
    sensed_idle_.assign(k, 1);
    has_traffic_.assign(k, 0);
    broadcast_.assign(k * kMessageDim, 0.0);
    prev_action_.assign(k, -1);
    prev_sinr_.assign(k, std::numeric_limits<double>::quiet_NaN());
    const auto e0 = static_cast<std::size_t>(cfg_.timing.e0);
    for (std::size_t a = 0; a < k; ++a) {
      const std::size_t n = cfg_.topology.num_stas(a);
      queues_.emplace_back(n, PacketQueue(cfg_.traffic.queue_capacity));
      q_prev_.emplace_back(n, 0);
      c_prev_.emplace_back(n * e0, kTxNone);
      const Point ap = cfg_.topology.ap_positions[a];
      const Rect room = cfg_.topology.rooms[static_cast<std::size_t>(cfg_.topology.room_of(ap))];
      std::vector<Point> off;
      for (const Point& s : cfg_.topology.sta_positions[a])
        off.push_back({(s.x - ap.x) / room.width(), (s.y - ap.y) / room.height()});
      offsets_.push_back(std::move(off));
    }
    q_cur_ = q_prev_;
    c_cur_ = c_prev_;
  }

  const SimulationConfig& config() const { return cfg_; }
  std::int64_t now() const { return now_; }
  const GainTable& gains() const { return gains_; }
  GainTable& mutable_gains() { return gains_; }
  const TxopState& mac() const { return mac_; }
  const SlidingThroughput& sliding() const { return sliding_; }
  const PacketQueue& queue(std::size_t ap, std::size_t sta) const { return queues_.at(ap).at(sta); }
  const std::vector<TransmissionRecord>& records() const { return records_; }
  const std::vector<DelaySample>& delays() const { return delays_; }
  const std::vector<FairnessPoint>& fairness() const { return fairness_; }
  const std::vector<RewardEvent>& reward_events() const { return reward_events_; }
  std::size_t completed_txops() const { return completed_txops_; }
  std::size_t collisions() const { return collisions_; }

  void set_trace(std::ostream* out) { trace_ = out; }

  std::vector<std::uint64_t> drops() const {
    std::vector<std::uint64_t> d;
    for (const auto& bss : queues_) {
      std::uint64_t n = 0;
      for (const auto& q : bss) n += q.drops();
      d.push_back(n);
    }
    return d;
  }

  Observation observation(std::size_t ap) const {
    Observation z;
    z.prev_action = prev_action_[ap];
    z.sta_offsets = offsets_[ap];
    z.sharing_target = announced_target_ == kNoTarget ? -1 : static_cast<int>(announced_target_);
    z.sharing_ap = mac_.sharing_ap ? static_cast<int>(*mac_.sharing_ap) : -1;
    z.is_sharing = mac_.sharing_ap && *mac_.sharing_ap == ap;
    z.prev_sinr_db = prev_sinr_[ap];
    z.q_prev = q_prev_[ap];
    z.c_prev = c_prev_[ap];
    return z;
  }

  void step() {
    for (auto& bss : queues_) arrivals_step(bss, cfg_.traffic.arrival_rate_per_slot, now_, traffic_rng_);
    sliding_.advance_to(now_);
    switch (mac_.phase) {
      case Phase::Contention: contention_slot(); break;
      case Phase::Polling: polling_slot(); break;
      case Phase::Decision: decision_slot(); break;
    }
    if ((now_ + 1) % cfg_.fairness_interval_slots == 0) {
      const double t = static_cast<double>(now_ + 1) * cfg_.timing.slot_seconds();
      for (std::size_t k = 0; k < mac_.num_aps(); ++k) fairness_.push_back({t, k, sliding_.value(k)});
    }
    ++now_;
  }

  void run_slots(std::int64_t n) {
    for (std::int64_t i = 0; i < n; ++i) step();
  }

  MetricsReport metrics(std::int64_t warmup_slots, double beta_min = 0.0) const {
    MetricsInputs in;
    in.num_aps = mac_.num_aps();
    in.total_slots = now_;
    in.warmup_slots = warmup_slots;
    in.packet_slots = cfg_.timing.packet_slots;
    in.slot_seconds = cfg_.timing.slot_seconds();
    bool any_legacy = false, any_learning = false;
    for (auto r : cfg_.roles) (r == ApRole::Legacy ? any_legacy : any_learning) = true;
    if (any_legacy && any_learning)
      for (auto r : cfg_.roles) in.legacy.push_back(r == ApRole::Legacy ? 1 : 0);
    in.drops = drops();
    in.beta_min = beta_min;
    return finalize_metrics(records_, delays_, fairness_, in);
  }

 private:
  TxopInfo info(int transmission_index) const {
    return {mac_.txop_index, *mac_.sharing_ap, mac_.participants, transmission_index, announced_target_};
  }

  void contention_slot() {
    const std::size_t k = mac_.num_aps();
    for (std::size_t a = 0; a < k; ++a) {
      bool any = false;
      for (const auto& q : queues_[a]) any |= !q.empty();
      has_traffic_[a] = any ? 1 : 0;
    }
    const ContentionResult res = contention_step(mac_, cfg_.timing, sensed_idle_, has_traffic_, mac_rng_);
    std::fill(sensed_idle_.begin(), sensed_idle_.end(), 1);
    if (res.collision()) {
      ++collisions_;
      std::vector<double> powers(k, kSilentDbm);
      for (std::size_t a : res.attempters) powers[a] = cfg_.radio.max_power_dbm();
      for (std::size_t a = 0; a < k; ++a)
        sensed_idle_[a] = powers[a] == kSilentDbm && channel_idle(a, powers, gains_, cfg_.radio) ? 1 : 0;
    }
    if (res.winner) begin_txop(*res.winner);
  }

  void begin_txop(std::size_t winner) {
    ++mac_.txop_index;
    legacy_txop_ = cfg_.roles[winner] == ApRole::Legacy;
    auto participants = nlohmann::json::array();
    for (std::size_t a = 0; a < mac_.num_aps(); ++a) {
      const bool joins = legacy_txop_ ? a == winner : cfg_.roles[a] == ApRole::Learning && has_traffic_[a];
      mac_.participants[a] = joins ? 1 : 0;
      if (joins) participants.push_back(a);
    }
    target_ = mac_.round_robin[winner];
    announced_target_ = target_;
    trace_txop_ = nlohmann::json{{"txop_index", mac_.txop_index},
                                 {"sharing_ap", winner},
                                 {"legacy", legacy_txop_},
                                 {"participants", std::move(participants)},
                                 {"slot_start", now_},
                                 {"transmissions", nlohmann::json::array()}};
    std::fill(broadcast_.begin(), broadcast_.end(), 0.0);
    if (!legacy_txop_) {
      const TxopInfo ti = info(0);
      for (std::size_t a = 0; a < mac_.num_aps(); ++a) {
        if (!mac_.participants[a]) continue;
        const auto msg = controller_->poll(a, observation(a), ti);
        if (msg.size() != kMessageDim) throw std::logic_error("controller message has wrong size");
        for (std::size_t d = 0; d < kMessageDim; ++d) broadcast_[a * kMessageDim + d] = msg[d];
      }
    }
    polling_left_ = cfg_.timing.polling_slots - 1;
    if (polling_left_ == 0) end_polling();
  }

  void polling_slot() {
    if (--polling_left_ <= 0) end_polling();
  }

  void end_polling() {
    if (!legacy_txop_) {
      const TxopInfo ti = info(0);
      for (std::size_t a = 0; a < mac_.num_aps(); ++a)
        if (mac_.participants[a]) controller_->broadcast(a, broadcast_, ti);
    }
    mac_.phase = Phase::Decision;
    mac_.e_remaining = cfg_.timing.e0;
    tx_active_ = false;
  }

  void decision_slot() {
    if (!tx_active_) start_transmission();
    if (now_ == pending_.slot_end - 1) finish_transmission();
  }

  void start_transmission() {
    const std::size_t k = mac_.num_aps();
    const std::size_t s = *mac_.sharing_ap;
    const int e = cfg_.timing.e0 - mac_.e_remaining + 1;
    target_ = mac_.round_robin[s];
    pending_ = TransmissionRecord{mac_.txop_index, e, s, legacy_txop_, now_,
                                  now_ + cfg_.timing.transmission_slots(), std::vector<ApTransmission>(k)};
    const TxopInfo ti = info(e);
    for (std::size_t a = 0; a < k; ++a) {
      if (!mac_.participants[a]) continue;
      auto& t = pending_.aps[a];
      if (legacy_txop_) {
        t.sta = target_;
        t.power_level = 0;
      } else {
        const std::optional<std::size_t> forced = a == s ? std::optional<std::size_t>(target_) : std::nullopt;
        const TxChoice c = controller_->decide(a, observation(a), ti, forced);
        t.sta = forced ? forced : c.sta;
        t.power_level = c.power_level;
      }
      if (t.power_level >= cfg_.radio.num_power_levels()) throw std::logic_error("power level out of range");
      if (t.sta && *t.sta >= queues_[a].size()) throw std::logic_error("STA index out of range");
      t.transmitted = t.sta && level_power_mw(t.power_level, cfg_.radio) > 0.0 && !queues_[a][*t.sta].empty();
    }
    mac_.round_robin[s] = (target_ + 1) % queues_[s].size();

    resample_small_scale(gains_, cfg_.radio.nakagami_m, channel_rng_);
    std::vector<double> powers(k, kSilentDbm);
    for (std::size_t a = 0; a < k; ++a)
      if (pending_.aps[a].transmitted) powers[a] = cfg_.radio.power_levels_dbm[pending_.aps[a].power_level];
    for (std::size_t a = 0; a < k; ++a) {
      auto& t = pending_.aps[a];
      if (t.transmitted) t.sinr = sinr(cfg_.topology.sta_node(a, *t.sta), a, powers, gains_, cfg_.radio);
    }
    tx_active_ = true;
  }

  void finish_transmission() {
    const std::size_t k = mac_.num_aps();
    const auto e0 = static_cast<std::size_t>(cfg_.timing.e0);
    const auto e = static_cast<std::size_t>(pending_.transmission_index);
    std::vector<std::size_t> succ, coll;
    for (std::size_t a = 0; a < k; ++a) {
      if (pending_.aps[a].success()) succ.push_back(a);
      if (pending_.aps[a].failed()) coll.push_back(a);
    }
    const std::vector<double> u = sliding_.values();
    const double r_tot = cfg_.reward == RewardVariant::CountSuccesses ? static_cast<double>(succ.size())
                                                                        : total_reward(succ, u, cfg_.u_floor);
    for (std::size_t a : succ) {
      const std::size_t sta = *pending_.aps[a].sta;
      delays_.push_back({now_, a, queues_[a][sta].dequeue_on_success(now_)});
      sliding_.mark(a, pending_.slot_start, pending_.slot_start + cfg_.timing.packet_slots);
    }

    const TxopInfo ti = info(static_cast<int>(e));
    double r_ind_sum = 0.0;
    auto tx_json = nlohmann::json::array();
    for (std::size_t a = 0; a < k; ++a) {
      if (!mac_.participants[a]) continue;
      const auto& t = pending_.aps[a];
      const std::size_t effective = t.transmitted ? t.power_level : cfg_.radio.zero_power_index();
      const double r_ind = cfg_.reward == RewardVariant::TotPlusInd
                               ? individual_reward(a, effective, coll, cfg_.radio)
                               : 0.0;
      r_ind_sum += r_ind;
      prev_action_[a] = static_cast<int>(t.power_level);
      prev_sinr_[a] = t.success() ? t.sinr->sinr_db() : std::numeric_limits<double>::quiet_NaN();
      if (t.transmitted) {
        c_cur_[a][*t.sta * e0 + (e - 1)] = t.success() ? kTxSuccess : kTxFailure;
        if (t.success()) ++q_cur_[a][*t.sta];
      }
      if (!legacy_txop_) controller_->outcome(a, ti, t, r_tot, r_ind);
      nlohmann::json j{{"ap", a},
                       {"sta", t.sta ? nlohmann::json(*t.sta) : nlohmann::json()},
                       {"power_dbm", cfg_.radio.power_levels_dbm[t.power_level]},
                       {"transmitted", t.transmitted},
                       {"success", t.success()},
                       {"r_ind", r_ind}};
      j["sinr_db"] = t.sinr ? nlohmann::json(t.sinr->sinr_db()) : nlohmann::json();
      tx_json.push_back(std::move(j));
    }
    reward_events_.push_back({now_, r_tot, r_ind_sum, !legacy_txop_});
    if (trace_)
      trace_txop_["transmissions"].push_back(
          {{"e", e}, {"slot_start", pending_.slot_start}, {"r_tot", r_tot}, {"aps", std::move(tx_json)}});
    records_.push_back(std::move(pending_));
    pending_ = {};
    tx_active_ = false;
    if (--mac_.e_remaining == 0) end_txop();
  }

  void end_txop() {
    if (!legacy_txop_) {
      const TxopInfo ti = info(cfg_.timing.e0);
      for (std::size_t a = 0; a < mac_.num_aps(); ++a)
        if (mac_.participants[a]) controller_->txop_end(a, ti);
    }
    q_prev_ = q_cur_;
    c_prev_ = c_cur_;
    for (auto& q : q_cur_) std::fill(q.begin(), q.end(), 0);
    for (auto& c : c_cur_) std::fill(c.begin(), c.end(), kTxNone);
    if (trace_) {
      trace_txop_["slot_end"] = now_ + 1;
      *trace_ << trace_txop_.dump() << '\n';
    }
    mac_.phase = Phase::Contention;
    mac_.sharing_ap.reset();
    std::fill(mac_.participants.begin(), mac_.participants.end(), 0);
    std::fill(sensed_idle_.begin(), sensed_idle_.end(), 1);
    target_ = kNoTarget;
    announced_target_ = kNoTarget;
    ++completed_txops_;
    if (controller_) controller_->txop_complete(!legacy_txop_);
  }

  SimulationConfig cfg_;
  Controller* controller_;
  Rng channel_rng_;
  Rng traffic_rng_;
  Rng mac_rng_;
  GainTable gains_;
  std::vector<std::vector<PacketQueue>> queues_;
  TxopState mac_;
  SlidingThroughput sliding_;
  std::int64_t now_ = 0;

  std::vector<std::uint8_t> sensed_idle_;
  std::vector<std::uint8_t> has_traffic_;
  int polling_left_ = 0;
  bool legacy_txop_ = false;
  bool tx_active_ = false;
  static constexpr std::size_t kNoTarget = static_cast<std::size_t>(-1);
  std::size_t target_ = kNoTarget;            // STA served by the sharing AP in this transmission
  std::size_t announced_target_ = kNoTarget;  // first-transmission target, carried in the trigger frame
  TransmissionRecord pending_;
  std::vector<double> broadcast_;

  std::vector<int> prev_action_;
  std::vector<double> prev_sinr_;
  std::vector<std::vector<int>> q_prev_, q_cur_;
  std::vector<std::vector<std::uint8_t>> c_prev_, c_cur_;
  std::vector<std::vector<Point>> offsets_;

  std::vector<TransmissionRecord> records_;
  std::vector<DelaySample> delays_;
  std::vector<FairnessPoint> fairness_;
  std::vector<RewardEvent> reward_events_;
  std::size_t completed_txops_ = 0;
  std::size_t collisions_ = 0;
  std::ostream* trace_ = nullptr;
  nlohmann::json trace_txop_;
};

}  // namespace csr
