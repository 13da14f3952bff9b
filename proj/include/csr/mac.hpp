#pragma once

// CSMA/CA contention and the TXOP phase machine of coordinated spatial reuse.
//
// A TXOP is: contention (DIFS + backoff, global), then a polling sub-phase
// whose first slot is the winner's access attempt, then E0 back-to-back
// transmissions of packet + SIFS + ACK slots each.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

#include "csr/channel.hpp"
#include "csr/random.hpp"

namespace csr {

struct MacTiming {
  double slot_us = 9.0;
  int packet_slots = 120;
  int ack_slots = 4;
  int difs_slots = 4;
  int sifs_slots = 2;
  int polling_slots = 4;
  int cw_min = 31;
  int cw_max = 1023;
  int e0 = 3;  // transmissions per TXOP

  friend bool operator==(const MacTiming&, const MacTiming&) = default;

  int transmission_slots() const { return packet_slots + sifs_slots + ack_slots; }
  double slot_seconds() const { return slot_us * 1e-6; }

  void validate() const {
    auto pow2m1 = [](int v) { return v > 0 && ((v + 1) & v) == 0; };
    if (!(slot_us > 0.0)) throw std::invalid_argument("slot_us must be positive");
    if (packet_slots <= 0 || ack_slots <= 0 || difs_slots <= 0 || sifs_slots <= 0 || polling_slots <= 0)
      throw std::invalid_argument("MAC durations must be positive slot counts");
    if (e0 <= 0) throw std::invalid_argument("e0 must be positive");
    if (!(cw_min < cw_max)) throw std::invalid_argument("cw_min must be below cw_max");
    if (!pow2m1(cw_min) || !pow2m1(cw_max)) throw std::invalid_argument("contention windows must be 2^n - 1");
  }
};

enum class Phase { Contention, Polling, Decision };

inline int next_contention_window(int cw, int cw_max) { return std::min(2 * (cw + 1) - 1, cw_max); }

inline int draw_backoff(int cw, Rng& rng) { return std::uniform_int_distribution<int>(0, cw)(rng); }

struct ContenderState {
  int backoff = 0;
  int cw = 31;
  int idle_run = 0;  // consecutive idle slots sensed, saturates at DIFS
  bool armed = false;  // a backoff has been drawn for the pending packet
};

struct TxopState {
  Phase phase = Phase::Contention;
  std::optional<std::size_t> sharing_ap;
  std::vector<std::uint8_t> participants;  // per AP
  int e_remaining = 0;
  std::vector<ContenderState> contenders;
  std::vector<std::size_t> round_robin;  // next STA per AP, persists across TXOPs
  std::size_t txop_index = 0;              // count of TXOPs started so far

  TxopState() = default;
  TxopState(std::size_t num_aps, const MacTiming& timing)
      : participants(num_aps, 0), contenders(num_aps), round_robin(num_aps, 0) {
    for (auto& c : contenders) c.cw = timing.cw_min;
  }

  std::size_t num_aps() const { return contenders.size(); }
};

struct ContentionResult {
  std::vector<std::size_t> attempters;
  std::optional<std::size_t> winner;
  bool collision() const { return attempters.size() >= 2; }
};

// One contention slot. APs without traffic sit out; an AP sensing busy resets
// its DIFS run and keeps its backoff frozen. After DIFS idle slots, each idle
// slot either decrements the backoff or, at zero, triggers an access attempt.
inline ContentionResult contention_step(TxopState& state, const MacTiming& timing,
                                        std::span<const std::uint8_t> sensed_idle,
                                        std::span<const std::uint8_t> has_traffic, Rng& rng) {
  if (state.phase != Phase::Contention) throw std::logic_error("contention_step outside the contention phase");
  const std::size_t n = state.num_aps();
  if (sensed_idle.size() != n || has_traffic.size() != n) throw std::invalid_argument("contention_step: size mismatch");

  ContentionResult result;
  for (std::size_t k = 0; k < n; ++k) {
    auto& c = state.contenders[k];
    if (!has_traffic[k]) continue;
    if (!c.armed) {
      c.backoff = draw_backoff(c.cw, rng);
      c.armed = true;
    }
    if (!sensed_idle[k]) {
      c.idle_run = 0;
      continue;
    }
    if (c.idle_run < timing.difs_slots) {
      ++c.idle_run;
      continue;
    }
    if (c.backoff == 0)
      result.attempters.push_back(k);
    else
      --c.backoff;
  }

  if (result.attempters.size() == 1) {
    const std::size_t w = result.attempters.front();
    result.winner = w;
    auto& c = state.contenders[w];
    c.cw = timing.cw_min;
    c.backoff = draw_backoff(c.cw, rng);
    for (auto& other : state.contenders) other.idle_run = 0;
    state.sharing_ap = w;
    state.phase = Phase::Polling;
  } else if (result.collision()) {
    for (std::size_t k : result.attempters) {
      auto& c = state.contenders[k];
      c.cw = next_contention_window(c.cw, timing.cw_max);
      c.backoff = draw_backoff(c.cw, rng);
      c.idle_run = 0;
    }
  }
  return result;
}

// One AP's part in a single transmission of a TXOP. At most one target STA.
struct ApTransmission {
  std::optional<std::size_t> sta;
  std::size_t power_level = 0;
  bool transmitted = false;  // false for silence, zero power or an empty buffer
  std::optional<SinrSample> sinr;

  bool success() const { return sinr.has_value() && sinr->success; }
  bool failed() const { return transmitted && sinr.has_value() && !sinr->success; }
};

struct TransmissionRecord {
  std::size_t txop_index = 0;
  int transmission_index = 0;  // 1..E0
  std::size_t sharing_ap = 0;
  bool legacy_txop = false;
  std::int64_t slot_start = 0;
  std::int64_t slot_end = 0;  // exclusive
  std::vector<ApTransmission> aps;
};

}  // namespace csr
