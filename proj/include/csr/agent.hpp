#pragma once

// One learning AP: message encoder, high-level STA-selection actor, low-level
// power actor, two critics per level, replay buffers and the multi-critic
// single-policy PPO update.
//
// A policy input is the history of M encoded observations followed by the M
// most recent broadcasts (K message slots each). During an update the agent's
// own slot of every stored broadcast is re-encoded from the raw observation
// that produced it, so the encoder is trained through the actor losses; the
// other slots are replayed as constants. Critics see the stored broadcasts.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "csr/nn.hpp"
#include "csr/observation.hpp"
#include "csr/random.hpp"

namespace csr {

enum class PolicyStructure { Hierarchical, Flat };

struct AgentConfig {
  std::vector<std::size_t> encoder_hidden{16, 8};
  std::vector<std::size_t> actor_hidden{250, 120, 120};
  std::vector<std::size_t> critic_hidden{250, 120, 120};
  std::size_t history_length = 5;
  double learning_rate = 1e-4;
  double rmsprop_decay = 0.99;
  double rmsprop_epsilon = 1e-8;
  double gamma = 0.5;
  double gae_lambda = 0.95;
  double clip_epsilon = 0.2;
  double omega_tot = 1.0;
  double omega_ind = 1.0;
  std::size_t ppo_epochs = 4;
  std::size_t update_interval_txops = 20;
  double max_grad_norm = 0.5;
  PolicyStructure structure = PolicyStructure::Hierarchical;
  bool use_messages = true;

  friend bool operator==(const AgentConfig&, const AgentConfig&) = default;

  void validate() const {
    if (history_length == 0) throw std::invalid_argument("history_length must be positive");
    if (!(learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be positive");
    if (!(rmsprop_decay >= 0.0 && rmsprop_decay < 1.0)) throw std::invalid_argument("rmsprop_decay must be in [0, 1)");
    if (!(gamma >= 0.0 && gamma <= 1.0)) throw std::invalid_argument("gamma must be in [0, 1]");
    if (!(gae_lambda >= 0.0 && gae_lambda <= 1.0)) throw std::invalid_argument("gae_lambda must be in [0, 1]");
    if (!(clip_epsilon > 0.0)) throw std::invalid_argument("clip_epsilon must be positive");
    if (omega_tot < 0.0 || omega_ind < 0.0) throw std::invalid_argument("advantage weights must be non-negative");
    if (ppo_epochs == 0 || update_interval_txops == 0) throw std::invalid_argument("epochs and update interval must be positive");
    if (!(max_grad_norm > 0.0)) throw std::invalid_argument("max_grad_norm must be positive");
    for (const auto* v : {&encoder_hidden, &actor_hidden, &critic_hidden})
      for (auto w : *v)
        if (w == 0) throw std::invalid_argument("hidden widths must be positive");
  }
};

// delta_t = r_t + gamma V_{t+1} - V_t with V_T = 0; A_t = sum_l (gamma lambda)^l delta_{t+l}
inline std::vector<double> gae_advantages(std::span<const double> rewards, std::span<const double> values,
                                          double gamma, double lambda) {
  if (rewards.size() != values.size()) throw std::invalid_argument("gae_advantages: length mismatch");
  std::vector<double> adv(rewards.size());
  double running = 0.0;
  for (std::size_t t = rewards.size(); t-- > 0;) {
    const double next = t + 1 < values.size() ? values[t + 1] : 0.0;
    const double delta = rewards[t] + gamma * next - values[t];
    running = delta + gamma * lambda * running;
    adv[t] = running;
  }
  return adv;
}

template <typename Real>
struct PolicyInput {
  std::vector<Real> history;                        // M x obs, oldest first
  std::vector<Real> messages;                       // M x K x kMessageDim as received, oldest first
  std::vector<std::vector<Real>> own_observations;  // per entry; empty when the own slot is a constant
};

template <typename Real>
struct Transition {
  PolicyInput<Real> input;
  std::size_t option = 0;  // target STA
  std::size_t action = 0;  // power level; joint index sta * P + level for the flat policy; option for high
  Real r_tot = 0;
  Real r_ind = 0;
  Real old_log_prob = 0;
  bool forced = false;  // flat policy restricted to the option's row
};

template <typename Real>
struct ActResult {
  std::size_t index = 0;
  Real log_prob = 0;
  Real entropy = 0;
};

enum NetId : std::size_t {
  kEncoder,
  kHighActor,
  kLowActor,
  kHighCriticTot,
  kHighCriticInd,
  kLowCriticTot,
  kLowCriticInd,
  kNumNets
};

inline constexpr std::array<const char*, kNumNets> kNetNames{
    "encoder", "high_actor", "low_actor", "high_critic_tot", "high_critic_ind", "low_critic_tot", "low_critic_ind"};

template <typename Real>
struct PreparedBatch {
  std::vector<Real> low_advantage, low_target_tot, low_target_ind;
  std::vector<Real> high_advantage, high_target_tot, high_target_ind;
};

struct LossBreakdown {
  double actor_low = 0.0;
  double actor_high = 0.0;
  double critic_low = 0.0;
  double critic_high = 0.0;
  double entropy_low = 0.0;  // summed; divide by sample counts for means
  double entropy_high = 0.0;
  std::size_t low_samples = 0;
  std::size_t high_samples = 0;

  double total() const { return actor_low + actor_high + critic_low + critic_high; }
};

struct UpdateReport {
  bool skipped = false;
  std::size_t low_samples = 0;
  std::size_t high_samples = 0;
  LossBreakdown first_epoch;
  std::array<double, kNumNets> grad_norm{};  // pre-clip, last epoch
};

template <typename Real>
class Agent {
 public:
  using Input = PolicyInput<Real>;
  using Grads = std::array<std::vector<Real>, kNumNets>;

  Agent(ObservationLayout layout, std::size_t own_index, AgentConfig config, Rng& init_rng)
      : layout_(layout), own_(own_index), cfg_(std::move(config)) {
    cfg_.validate();
    if (own_ >= layout_.num_aps) throw std::invalid_argument("agent index outside the AP set");
    const std::size_t obs = layout_.size();
    const std::size_t base = history_size() + messages_size();
    const std::size_t n = layout_.num_stas;
    const std::size_t p = layout_.num_power_levels;
    const bool hier = hierarchical();
    auto widths = [](std::size_t in, const std::vector<std::size_t>& hidden, std::size_t out) {
      std::vector<std::size_t> w{in};
      w.insert(w.end(), hidden.begin(), hidden.end());
      w.push_back(out);
      return w;
    };
    nets_[kEncoder] = nn::Mlp<Real>(widths(obs, cfg_.encoder_hidden, kMessageDim));
    nets_[kLowActor] = nn::Mlp<Real>(widths(hier ? base + n : base, cfg_.actor_hidden, hier ? p : n * p));
    nets_[kLowCriticTot] = nn::Mlp<Real>(widths(hier ? base + n : base, cfg_.critic_hidden, 1));
    nets_[kLowCriticInd] = nn::Mlp<Real>(widths(hier ? base + n : base, cfg_.critic_hidden, 1));
    if (hier) {
      nets_[kHighActor] = nn::Mlp<Real>(widths(base, cfg_.actor_hidden, n));
      nets_[kHighCriticTot] = nn::Mlp<Real>(widths(base, cfg_.critic_hidden, 1));
      nets_[kHighCriticInd] = nn::Mlp<Real>(widths(base, cfg_.critic_hidden, 1));
    }
    const double hidden_gain = std::sqrt(2.0);
    for (std::size_t id = 0; id < kNumNets; ++id) {
      if (!has_net(static_cast<NetId>(id))) continue;
      const bool actor = id == kHighActor || id == kLowActor;
      nets_[id].init(init_rng, hidden_gain, actor ? 0.01 : 1.0);
      opt_[id] = nn::RmsPropState<Real>(nets_[id].num_params(), cfg_.learning_rate, cfg_.rmsprop_decay,
                                        cfg_.rmsprop_epsilon);
    }
  }

  const ObservationLayout& layout() const { return layout_; }
  const AgentConfig& config() const { return cfg_; }
  std::size_t own_index() const { return own_; }
  bool hierarchical() const { return cfg_.structure == PolicyStructure::Hierarchical; }
  std::size_t history_size() const { return cfg_.history_length * layout_.size(); }
  std::size_t messages_size() const { return cfg_.history_length * layout_.num_aps * kMessageDim; }

  bool has_net(NetId id) const { return !nets_[id].widths().empty(); }
  nn::Mlp<Real>& net(NetId id) { return nets_[id]; }
  const nn::Mlp<Real>& net(NetId id) const { return nets_[id]; }

  const std::vector<Transition<Real>>& low_buffer() const { return low_; }
  const std::vector<Transition<Real>>& high_buffer() const { return high_; }
  std::vector<Transition<Real>>& low_buffer() { return low_; }
  std::vector<Transition<Real>>& high_buffer() { return high_; }
  void store_low(Transition<Real> t) { low_.push_back(std::move(t)); }
  void store_high(Transition<Real> t) {
    if (!hierarchical()) throw std::logic_error("the flat policy has no high-level buffer");
    high_.push_back(std::move(t));
  }

  std::vector<Real> encode(std::span<const Real> observation) const {
    auto m = nets_[kEncoder].predict(observation);
    for (Real v : m)
      if (!std::isfinite(v)) throw nn::NumericalError("non-finite message");
    return m;
  }

  ActResult<Real> select_option(const Input& in, Rng& rng, bool greedy = false) const {
    if (!hierarchical()) throw std::logic_error("the flat policy has no option head");
    const auto logits = nets_[kHighActor].predict(assemble(in, in.messages, kNoOption));
    return pick(nn::softmax<Real>(logits), rng, greedy);
  }

  // Hierarchical: power level conditioned on the option. Flat: joint index,
  // restricted to the option's row when forced.
  ActResult<Real> select_action(const Input& in, std::size_t option, bool forced, Rng& rng, bool greedy = false) const {
    if (option >= layout_.num_stas) throw std::out_of_range("option outside the STA set");
    if (hierarchical()) {
      const auto logits = nets_[kLowActor].predict(assemble(in, in.messages, option));
      return pick(nn::softmax<Real>(logits), rng, greedy);
    }
    const auto logits = nets_[kLowActor].predict(assemble(in, in.messages, kNoOption));
    const auto mask = forced ? row_mask(option) : std::vector<std::uint8_t>{};
    return pick(nn::softmax<Real>(logits, mask), rng, greedy);
  }

  PreparedBatch<Real> prepare_batch() const {
    PreparedBatch<Real> b;
    prepare_level(low_, kLowCriticTot, kLowCriticInd, hierarchical(), b.low_advantage, b.low_target_tot,
                  b.low_target_ind);
    prepare_level(high_, kHighCriticTot, kHighCriticInd, false, b.high_advantage, b.high_target_tot,
                  b.high_target_ind);
    return b;
  }

  // Summed clipped-surrogate actor losses plus squared-error critic losses.
  // With grads non-null, accumulates d(loss)/d(params) per network.
  LossBreakdown loss_and_gradients(const PreparedBatch<Real>& batch, Grads* grads) const {
    LossBreakdown lb;
    lb.low_samples = low_.size();
    lb.high_samples = high_.size();
    for (std::size_t i = 0; i < low_.size(); ++i) {
      const auto& t = low_[i];
      const std::size_t cond = hierarchical() ? t.option : kNoOption;
      const auto mask = !hierarchical() && t.forced ? row_mask(t.option) : std::vector<std::uint8_t>{};
      actor_term(t, cond, mask, batch.low_advantage[i], kLowActor, grads, lb.actor_low, lb.entropy_low);
      lb.critic_low += critic_term(t, cond, batch.low_target_tot[i], kLowCriticTot, grads);
      lb.critic_low += critic_term(t, cond, batch.low_target_ind[i], kLowCriticInd, grads);
    }
    for (std::size_t i = 0; i < high_.size(); ++i) {
      const auto& t = high_[i];
      actor_term(t, kNoOption, {}, batch.high_advantage[i], kHighActor, grads, lb.actor_high, lb.entropy_high);
      lb.critic_high += critic_term(t, kNoOption, batch.high_target_tot[i], kHighCriticTot, grads);
      lb.critic_high += critic_term(t, kNoOption, batch.high_target_ind[i], kHighCriticInd, grads);
    }
    return lb;
  }

  Grads zero_grads() const {
    Grads g;
    for (std::size_t id = 0; id < kNumNets; ++id) g[id].assign(nets_[id].num_params(), Real(0));
    return g;
  }

  UpdateReport ppo_update() {
    UpdateReport rep;
    rep.low_samples = low_.size();
    rep.high_samples = high_.size();
    if (low_.empty() && high_.empty()) {
      rep.skipped = true;
      return rep;
    }
    const auto batch = prepare_batch();
    for (std::size_t epoch = 0; epoch < cfg_.ppo_epochs; ++epoch) {
      Grads g = zero_grads();
      const LossBreakdown lb = loss_and_gradients(batch, &g);
      if (epoch == 0) rep.first_epoch = lb;
      if (!std::isfinite(lb.total())) throw nn::NumericalError("non-finite PPO loss");
      // the encoder shares the actors' loss, so the three are clipped jointly
      clip_group(g, {kEncoder, kHighActor, kLowActor}, rep);
      for (NetId c : {kHighCriticTot, kHighCriticInd, kLowCriticTot, kLowCriticInd}) clip_group(g, {c}, rep);
      for (std::size_t id = 0; id < kNumNets; ++id) {
        if (!has_net(static_cast<NetId>(id))) continue;
        nn::rmsprop_step<Real>(nets_[id].params(), g[id], opt_[id]);
        if (!nets_[id].all_finite())
          throw nn::NumericalError(std::string("non-finite parameters in ") + kNetNames[id] + " of agent " +
                                   std::to_string(own_));
      }
    }
    low_.clear();
    high_.clear();
    return rep;
  }

  void save(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);
    for (std::size_t id = 0; id < kNumNets; ++id)
      if (has_net(static_cast<NetId>(id))) nn::save_checkpoint(nets_[id], (dir / file_name(id)).string());
  }

  void load(const std::filesystem::path& dir) {
    for (std::size_t id = 0; id < kNumNets; ++id) {
      if (!has_net(static_cast<NetId>(id))) continue;
      const auto path = (dir / file_name(id)).string();
      auto loaded = nn::load_checkpoint<Real>(path);
      if (loaded.widths() != nets_[id].widths())
        throw std::runtime_error(path + ": checkpoint shape does not match the configured topology");
      nets_[id] = std::move(loaded);
    }
  }

  std::string file_name(std::size_t id) const { return "ap" + std::to_string(own_) + "_" + kNetNames[id] + ".bin"; }

 private:
  static constexpr std::size_t kNoOption = static_cast<std::size_t>(-1);

  std::vector<std::uint8_t> row_mask(std::size_t option) const {
    const std::size_t p = layout_.num_power_levels;
    std::vector<std::uint8_t> m(layout_.num_stas * p, 0);
    std::fill_n(m.begin() + static_cast<std::ptrdiff_t>(option * p), p, 1);
    return m;
  }

  static ActResult<Real> pick(const nn::Distribution<Real>& d, Rng& rng, bool greedy) {
    ActResult<Real> r;
    r.index = greedy ? nn::argmax<Real>(d.probs) : nn::sample_index<Real>(d.probs, rng);
    r.log_prob = d.log_probs[r.index];
    r.entropy = d.entropy();
    return r;
  }

  // option == kNoOption: no option one-hot appended
  std::vector<Real> assemble(const Input& in, std::span<const Real> messages, std::size_t option) const {
    if (in.history.size() != history_size() || messages.size() != messages_size())
      throw std::invalid_argument("policy input does not match the agent's layout");
    std::vector<Real> x;
    x.reserve(history_size() + messages_size() + layout_.num_stas);
    x.insert(x.end(), in.history.begin(), in.history.end());
    x.insert(x.end(), messages.begin(), messages.end());
    if (option != kNoOption) {
      const std::size_t at = x.size();
      x.resize(at + layout_.num_stas, Real(0));
      x[at + option] = Real(1);
    }
    return x;
  }

  void prepare_level(const std::vector<Transition<Real>>& buf, NetId tot, NetId ind, bool with_option,
                     std::vector<Real>& adv, std::vector<Real>& target_tot, std::vector<Real>& target_ind) const {
    const std::size_t n = buf.size();
    std::vector<double> rt(n), ri(n), vt(n), vi(n);
    for (std::size_t i = 0; i < n; ++i) {
      const auto& t = buf[i];
      const auto x = assemble(t.input, t.input.messages, with_option ? t.option : kNoOption);
      rt[i] = static_cast<double>(t.r_tot);
      ri[i] = static_cast<double>(t.r_ind);
      vt[i] = static_cast<double>(nets_[tot].predict(x)[0]);
      vi[i] = static_cast<double>(nets_[ind].predict(x)[0]);
    }
    const auto at = gae_advantages(rt, vt, cfg_.gamma, cfg_.gae_lambda);
    const auto ai = gae_advantages(ri, vi, cfg_.gamma, cfg_.gae_lambda);
    adv.resize(n);
    target_tot.resize(n);
    target_ind.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      adv[i] = static_cast<Real>(cfg_.omega_tot * at[i] + cfg_.omega_ind * ai[i]);
      target_tot[i] = static_cast<Real>(rt[i] + cfg_.gamma * (i + 1 < n ? vt[i + 1] : 0.0));
      target_ind[i] = static_cast<Real>(ri[i] + cfg_.gamma * (i + 1 < n ? vi[i + 1] : 0.0));
    }
  }

  void actor_term(const Transition<Real>& t, std::size_t option, std::span<const std::uint8_t> mask,
                  Real advantage, NetId actor, Grads* grads, double& loss, double& entropy) const {
    const std::size_t block = layout_.num_aps * kMessageDim;
    std::vector<Real> messages = t.input.messages;
    std::vector<nn::Tape<Real>> enc_tapes(cfg_.history_length);
    bool live = false;
    for (std::size_t j = 0; j < t.input.own_observations.size(); ++j) {
      const auto& z = t.input.own_observations[j];
      if (z.empty()) continue;
      live = true;
      nets_[kEncoder].forward(z, enc_tapes[j]);
      const auto m = enc_tapes[j].output();
      std::copy(m.begin(), m.end(), messages.begin() + static_cast<std::ptrdiff_t>(j * block + own_ * kMessageDim));
    }
    const auto x = assemble(t.input, messages, option);
    nn::Tape<Real> tape;
    nets_[actor].forward(x, tape);
    const auto d = nn::softmax<Real>(tape.output(), mask);
    const Real ratio = std::exp(d.log_probs[t.action] - t.old_log_prob);
    const Real eps = static_cast<Real>(cfg_.clip_epsilon);
    const Real unclipped = ratio * advantage;
    const Real clipped = std::clamp(ratio, Real(1) - eps, Real(1) + eps) * advantage;
    loss -= static_cast<double>(std::min(unclipped, clipped));
    entropy += static_cast<double>(d.entropy());
    if (!grads || unclipped > clipped) return;

    std::vector<Real> dlogits(d.probs.size(), Real(0));
    nn::log_prob_gradient<Real>(d, t.action, -advantage * ratio, dlogits);
    std::vector<Real> dx = live ? std::vector<Real>(x.size()) : std::vector<Real>{};
    nets_[actor].backward(tape, dlogits, (*grads)[actor], dx);
    if (!live) return;
    for (std::size_t j = 0; j < t.input.own_observations.size(); ++j) {
      if (t.input.own_observations[j].empty()) continue;
      const std::size_t at = history_size() + j * block + own_ * kMessageDim;
      nets_[kEncoder].backward(enc_tapes[j], std::span<const Real>(dx).subspan(at, kMessageDim), (*grads)[kEncoder]);
    }
  }

  double critic_term(const Transition<Real>& t, std::size_t option, Real target, NetId critic,
                     Grads* grads) const {
    const auto x = assemble(t.input, t.input.messages, option);
    nn::Tape<Real> tape;
    nets_[critic].forward(x, tape);
    const Real err = target - tape.output()[0];
    if (grads) {
      const Real g = Real(-2) * err;
      nets_[critic].backward(tape, std::span<const Real>(&g, 1), (*grads)[critic]);
    }
    return static_cast<double>(err * err);
  }

  void clip_group(Grads& g, std::initializer_list<NetId> ids, UpdateReport& rep) const {
    double sq = 0.0;
    for (NetId id : ids)
      for (Real v : g[id]) sq += static_cast<double>(v) * static_cast<double>(v);
    const double norm = std::sqrt(sq);
    for (NetId id : ids) rep.grad_norm[id] = norm;
    if (!(norm > cfg_.max_grad_norm)) return;
    const Real scale = static_cast<Real>(cfg_.max_grad_norm / norm);
    for (NetId id : ids)
      for (Real& v : g[id]) v *= scale;
  }

  ObservationLayout layout_;
  std::size_t own_;
  AgentConfig cfg_;
  std::array<nn::Mlp<Real>, kNumNets> nets_;
  std::array<nn::RmsPropState<Real>, kNumNets> opt_;
  std::vector<Transition<Real>> low_;
  std::vector<Transition<Real>> high_;
};

}  // namespace csr
