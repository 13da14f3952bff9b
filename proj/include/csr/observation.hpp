#pragma once

// What an AP knows locally when it is polled or has to decide, and the fixed
// feature layout used to feed it to the networks.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include "csr/geometry.hpp"

namespace csr {

inline constexpr std::size_t kMessageDim = 4;

enum TxStatus : std::uint8_t { kTxNone = 0, kTxSuccess = 1, kTxFailure = 2 };

struct Observation {
  int prev_action = -1;                 // power level of the last decision, -1 before the first
  std::vector<Point> sta_offsets;       // STA minus AP position, divided by the room size
  int sharing_target = -1;              // STA the sharing AP serves in this transmission
  int sharing_ap = -1;
  bool is_sharing = false;
  double prev_sinr_db = std::numeric_limits<double>::quiet_NaN();  // NaN: no ACK received
  std::vector<int> q_prev;              // successes per own STA in the previous TXOP
  std::vector<std::uint8_t> c_prev;     // TxStatus at [sta * e0 + e]
};

inline constexpr double kSinrFloorDb = -20.0;
inline constexpr double kSinrCeilDb = 50.0;

struct ObservationLayout {
  std::size_t num_aps = 1;
  std::size_t num_stas = 1;  // STAs of this AP
  std::size_t max_stas = 1;  // largest BSS in the topology
  std::size_t e0 = 3;
  std::size_t num_power_levels = 5;

  std::size_t size() const {
    return num_power_levels + 2 * num_stas + (max_stas + 1) + num_aps + 1 + 1 + num_stas + 2 * num_stas * e0;
  }

  // prev action one-hot | STA offsets | sharing target one-hot (+ "none") |
  // sharing AP one-hot | is-sharing flag | scaled SINR | q / e0 | c as two bits
  template <typename Real>
  void encode(const Observation& z, std::span<Real> out) const {
    if (out.size() != size()) throw std::invalid_argument("observation buffer has wrong size");
    if (z.sta_offsets.size() != num_stas || z.q_prev.size() != num_stas || z.c_prev.size() != num_stas * e0)
      throw std::invalid_argument("observation does not match layout");
    std::fill(out.begin(), out.end(), Real(0));
    std::size_t o = 0;
    if (z.prev_action >= 0) out[o + static_cast<std::size_t>(z.prev_action)] = Real(1);
    o += num_power_levels;
    for (const auto& p : z.sta_offsets) {
      out[o++] = static_cast<Real>(p.x);
      out[o++] = static_cast<Real>(p.y);
    }
    out[o + (z.sharing_target >= 0 ? static_cast<std::size_t>(z.sharing_target) : max_stas)] = Real(1);
    o += max_stas + 1;
    if (z.sharing_ap >= 0) out[o + static_cast<std::size_t>(z.sharing_ap)] = Real(1);
    o += num_aps;
    out[o++] = z.is_sharing ? Real(1) : Real(0);
    const double s = std::isnan(z.prev_sinr_db) ? kSinrFloorDb : std::clamp(z.prev_sinr_db, kSinrFloorDb, kSinrCeilDb);
    out[o++] = static_cast<Real>(2.0 * (s - kSinrFloorDb) / (kSinrCeilDb - kSinrFloorDb) - 1.0);
    for (int q : z.q_prev) out[o++] = static_cast<Real>(static_cast<double>(q) / static_cast<double>(e0));
    for (std::uint8_t c : z.c_prev) {
      out[o++] = c == kTxSuccess ? Real(1) : Real(0);
      out[o++] = c == kTxFailure ? Real(1) : Real(0);
    }
  }

  template <typename Real>
  std::vector<Real> encode(const Observation& z) const {
    std::vector<Real> v(size());
    encode<Real>(z, std::span<Real>(v));
    return v;
  }
};

}  // namespace csr
