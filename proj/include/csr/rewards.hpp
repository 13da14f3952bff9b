#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "csr/channel.hpp"
#include "csr/mac.hpp"
#include "json.hpp"

namespace csr {

enum class RewardVariant { TotPlusInd, TotOnly, CountSuccesses };

inline constexpr double kDefaultUtilizationFloor = 1e-3;

// Sum over successful APs of log(1 / u_i), with u floored so an AP that has
// never transmitted still yields a bounded reward.
inline double total_reward(std::span<const std::size_t> success_set, std::span<const double> windowed_throughput,
                           double u_floor = kDefaultUtilizationFloor) {
  double r = 0.0;
  for (std::size_t ap : success_set) r += std::log(1.0 / std::max(windowed_throughput[ap], u_floor));
  return r;
}

// Collision penalty proportional to the linear transmit power relative to
// P_max. APs inside the collision set are charged for the other colliders only.
inline double individual_reward(std::size_t ap, std::size_t power_level, std::span<const std::size_t> collision_set,
                                const RadioConfig& config) {
  const double p = level_power_mw(power_level, config) / level_power_mw(0, config);
  const auto c = static_cast<double>(collision_set.size());
  const bool inside = std::find(collision_set.begin(), collision_set.end(), ap) != collision_set.end();
  if (p == 0.0 || c == 0.0) return 0.0;
  return inside ? -p * (c - 1.0) : -p * c;
}

// Per-AP fraction of the trailing window occupied by successful transmissions.
// The window always covers window_slots slots ending at the current slot, so
// early in a run the value is normalised by the full window length.
class SlidingThroughput {
 public:
  SlidingThroughput() = default;
  SlidingThroughput(std::size_t num_aps, std::size_t window_slots)
      : window_(window_slots), occupied_(num_aps, std::vector<std::uint8_t>(window_slots, 0)), count_(num_aps, 0) {
    if (window_slots == 0) throw std::invalid_argument("window must be positive");
  }

  std::size_t num_aps() const { return count_.size(); }
  std::size_t window_slots() const { return window_; }
  std::int64_t now() const { return now_; }

  // Moves the window end to `slot`, expiring slots that fall out of it.
  void advance_to(std::int64_t slot) {
    if (slot < now_) throw std::logic_error("sliding window cannot move backwards");
    const std::int64_t steps = std::min<std::int64_t>(slot - now_, static_cast<std::int64_t>(window_));
    for (std::int64_t s = slot - steps + 1; s <= slot; ++s) {
      const std::size_t idx = index(s);
      for (std::size_t k = 0; k < count_.size(); ++k) {
        count_[k] -= occupied_[k][idx];
        occupied_[k][idx] = 0;
      }
    }
    now_ = slot;
  }

  // Marks [start, end) as success-occupied for `ap`; slots already outside the
  // window are ignored.
  void mark(std::size_t ap, std::int64_t start, std::int64_t end) {
    if (end - 1 > now_) throw std::logic_error("cannot mark slots beyond the window end");
    const std::int64_t first = std::max(start, now_ - static_cast<std::int64_t>(window_) + 1);
    for (std::int64_t s = first; s < end; ++s) {
      auto& cell = occupied_[ap][index(s)];
      if (!cell) {
        cell = 1;
        ++count_[ap];
      }
    }
  }

  void update(std::int64_t slot, const TransmissionRecord& record, int packet_slots) {
    advance_to(slot);
    for (std::size_t k = 0; k < record.aps.size(); ++k)
      if (record.aps[k].success()) mark(k, record.slot_start, record.slot_start + packet_slots);
  }

  double value(std::size_t ap) const { return static_cast<double>(count_[ap]) / static_cast<double>(window_); }

  std::vector<double> values() const {
    std::vector<double> v(count_.size());
    for (std::size_t k = 0; k < v.size(); ++k) v[k] = value(k);
    return v;
  }

  std::size_t occupied_slots(std::size_t ap) const { return count_[ap]; }

  std::size_t recount(std::size_t ap) const {
    std::size_t n = 0;
    for (auto c : occupied_[ap]) n += c;
    return n;
  }

 private:
  std::size_t index(std::int64_t s) const {
    const auto w = static_cast<std::int64_t>(window_);
    return static_cast<std::size_t>(((s % w) + w) % w);
  }

  std::size_t window_ = 1;
  std::int64_t now_ = 0;
  std::vector<std::vector<std::uint8_t>> occupied_;
  std::vector<std::size_t> count_;
};

struct DelaySample {
  std::int64_t slot = 0;  // slot of the ACK that completed the packet
  std::size_t ap = 0;
  std::int64_t delay_slots = 0;
};

struct FairnessPoint {
  double time_s = 0.0;
  std::size_t ap = 0;
  double windowed_throughput = 0.0;
};

struct MetricsReport {
  double throughput = 0.0;
  double mean_delay_s = 0.0;
  double delay_jitter_s2 = 0.0;
  std::vector<double> per_ap_throughput;
  std::vector<std::uint64_t> drops;
  std::optional<double> legacy_mean_throughput;
  std::uint64_t successful_packets = 0;
  std::int64_t total_slots = 0;
  std::int64_t measured_slots = 0;
  double beta_min = 0.0;
  double min_windowed_throughput = 0.0;
  bool beta_min_met = false;
};

inline void to_json(nlohmann::json& j, const MetricsReport& m) {
  j = nlohmann::json{{"throughput", m.throughput},
                     {"mean_delay_s", m.mean_delay_s},
                     {"delay_jitter_s2", m.delay_jitter_s2},
                     {"per_ap_throughput", m.per_ap_throughput},
                     {"drops", m.drops},
                     {"successful_packets", m.successful_packets},
                     {"total_slots", m.total_slots},
                     {"measured_slots", m.measured_slots},
                     {"beta_min", m.beta_min},
                     {"min_windowed_throughput", m.min_windowed_throughput},
                     {"beta_min_met", m.beta_min_met}};
  j["legacy_mean_throughput"] = m.legacy_mean_throughput ? nlohmann::json(*m.legacy_mean_throughput) : nlohmann::json();
}

struct MetricsInputs {
  std::size_t num_aps = 0;
  std::int64_t total_slots = 0;
  std::int64_t warmup_slots = 0;
  int packet_slots = 120;
  double slot_seconds = 9e-6;
  std::vector<std::uint8_t> legacy;  // per AP, empty when none
  std::vector<std::uint64_t> drops;  // per AP
  double beta_min = 0.0;
};

// Throughput counts packet slots of successful transmissions that started
// after warm-up; delay statistics cover packets acknowledged after warm-up.
inline MetricsReport finalize_metrics(std::span<const TransmissionRecord> records, std::span<const DelaySample> delays,
                                      std::span<const FairnessPoint> fairness, const MetricsInputs& in) {
  MetricsReport m;
  m.total_slots = in.total_slots;
  m.measured_slots = std::max<std::int64_t>(in.total_slots - in.warmup_slots, 1);
  m.per_ap_throughput.assign(in.num_aps, 0.0);
  for (const auto& r : records) {
    if (r.slot_start < in.warmup_slots) continue;
    for (std::size_t k = 0; k < r.aps.size(); ++k)
      if (r.aps[k].success()) m.per_ap_throughput[k] += in.packet_slots;
  }
  for (auto& v : m.per_ap_throughput) {
    v /= static_cast<double>(m.measured_slots);
    m.throughput += v;
  }

  double sum = 0.0;
  std::uint64_t n = 0;
  for (const auto& d : delays) {
    if (d.slot < in.warmup_slots) continue;
    sum += static_cast<double>(d.delay_slots);
    ++n;
  }
  m.successful_packets = n;
  if (n > 0) {
    const double mean = sum / static_cast<double>(n);
    double var = 0.0;
    for (const auto& d : delays) {
      if (d.slot < in.warmup_slots) continue;
      const double e = static_cast<double>(d.delay_slots) - mean;
      var += e * e;
    }
    var /= static_cast<double>(n);
    m.mean_delay_s = mean * in.slot_seconds;
    m.delay_jitter_s2 = var * in.slot_seconds * in.slot_seconds;
  }

  m.drops = in.drops;
  if (m.drops.size() != in.num_aps) m.drops.assign(in.num_aps, 0);

  if (!in.legacy.empty()) {
    double s = 0.0;
    std::size_t count = 0;
    for (std::size_t k = 0; k < in.num_aps; ++k)
      if (in.legacy[k]) {
        s += m.per_ap_throughput[k];
        ++count;
      }
    if (count > 0) m.legacy_mean_throughput = s / static_cast<double>(count);
  }

  const double warmup_s = static_cast<double>(in.warmup_slots) * in.slot_seconds;
  double min_u = std::numeric_limits<double>::infinity();
  for (const auto& f : fairness)
    if (f.time_s >= warmup_s) min_u = std::min(min_u, f.windowed_throughput);
  m.min_windowed_throughput = std::isfinite(min_u) ? min_u : 0.0;
  m.beta_min = in.beta_min;
  m.beta_min_met = m.min_windowed_throughput >= in.beta_min;
  return m;
}

}  // namespace csr
