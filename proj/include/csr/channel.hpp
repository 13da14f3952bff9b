#pragma once

// Propagation, per-link gains, carrier sensing and SINR for a downlink OBSS.
//
// Nodes are indexed APs first, then every STA flattened in BSS order, so a
// GainTable row is a transmitting AP and a column is any receiving node.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "csr/geometry.hpp"
#include "csr/random.hpp"

namespace csr {

struct Topology {
  std::vector<Rect> rooms;
  std::vector<Point> ap_positions;
  std::vector<std::vector<Point>> sta_positions;  // per BSS
  std::vector<Segment> walls;

  std::size_t num_aps() const { return ap_positions.size(); }
  std::size_t num_stas(std::size_t ap) const { return sta_positions.at(ap).size(); }

  std::size_t total_stas() const {
    std::size_t n = 0;
    for (const auto& s : sta_positions) n += s.size();
    return n;
  }

  std::size_t max_stas_per_bss() const {
    std::size_t n = 0;
    for (const auto& s : sta_positions) n = std::max(n, s.size());
    return n;
  }

  std::size_t num_nodes() const { return num_aps() + total_stas(); }

  std::size_t sta_node(std::size_t ap, std::size_t sta) const {
    std::size_t node = num_aps();
    for (std::size_t k = 0; k < ap; ++k) node += sta_positions[k].size();
    if (sta >= sta_positions.at(ap).size()) throw std::out_of_range("sta index out of range");
    return node + sta;
  }

  Point node_position(std::size_t node) const {
    if (node < num_aps()) return ap_positions[node];
    std::size_t rest = node - num_aps();
    for (const auto& bss : sta_positions) {
      if (rest < bss.size()) return bss[rest];
      rest -= bss.size();
    }
    throw std::out_of_range("node index out of range");
  }

  // Index of the room containing p, or -1 when p lies in none. Throws when p
  // is inside more than one room.
  int room_of(Point p) const {
    int found = -1;
    for (std::size_t r = 0; r < rooms.size(); ++r) {
      if (!rooms[r].contains(p)) continue;
      if (found >= 0) throw std::invalid_argument("point lies in more than one room");
      found = static_cast<int>(r);
    }
    return found;
  }

  void validate() const {
    if (ap_positions.empty()) throw std::invalid_argument("topology has no APs");
    if (sta_positions.size() != ap_positions.size())
      throw std::invalid_argument("sta_positions must have one list per AP");
    for (const auto& r : rooms)
      if (!(r.width() > 0.0 && r.height() > 0.0))
        throw std::invalid_argument("room dimensions must be positive");
    for (std::size_t k = 0; k < num_aps(); ++k) {
      if (sta_positions[k].empty())
        throw std::invalid_argument("BSS " + std::to_string(k) + " has no STAs");
      if (room_of(ap_positions[k]) < 0)
        throw std::invalid_argument("AP " + std::to_string(k) + " lies outside every room");
      for (const auto& p : sta_positions[k])
        if (room_of(p) < 0)
          throw std::invalid_argument("a STA of BSS " + std::to_string(k) + " lies outside every room");
    }
  }
};

struct RadioConfig {
  std::vector<double> power_levels_dbm{20.0, 15.0, 10.0, 5.0, -100.0};
  double noise_power_dbm = -95.0;
  double sinr_threshold_db = 18.0;
  double carrier_freq_ghz = 5.0;
  double break_distance_m = 5.0;
  double shadowing_std_db = 3.0;
  double nakagami_m = 1.5;
  double cca_threshold_dbm = -82.0;
  double wall_loss_db = 5.0;

  friend bool operator==(const RadioConfig&, const RadioConfig&) = default;

  std::size_t num_power_levels() const { return power_levels_dbm.size(); }
  std::size_t zero_power_index() const { return power_levels_dbm.size() - 1; }
  double max_power_dbm() const { return power_levels_dbm.front(); }

  void validate() const {
    if (power_levels_dbm.size() < 2)
      throw std::invalid_argument("power_levels_dbm needs at least one real level plus the zero level");
    for (std::size_t i = 1; i < power_levels_dbm.size(); ++i)
      if (!(power_levels_dbm[i] < power_levels_dbm[i - 1]))
        throw std::invalid_argument("power_levels_dbm must be strictly decreasing");
    if (!(break_distance_m > 0.0)) throw std::invalid_argument("break_distance_m must be positive");
    if (!(nakagami_m > 0.5)) throw std::invalid_argument("nakagami_m must exceed 0.5");
    if (!(shadowing_std_db >= 0.0)) throw std::invalid_argument("shadowing_std_db must be non-negative");
    if (!(carrier_freq_ghz > 0.0)) throw std::invalid_argument("carrier_freq_ghz must be positive");
    if (!(wall_loss_db >= 0.0)) throw std::invalid_argument("wall_loss_db must be non-negative");
  }
};

inline double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }
inline double linear_to_db(double lin) { return 10.0 * std::log10(lin); }

// Transmit power in mW. The last (lowest) configured level means "silent".
inline double transmit_power_mw(double power_dbm, const RadioConfig& config) {
  if (power_dbm <= config.power_levels_dbm.back()) return 0.0;
  return db_to_linear(power_dbm);
}

inline double level_power_mw(std::size_t level, const RadioConfig& config) {
  return transmit_power_mw(config.power_levels_dbm.at(level), config);
}

inline constexpr double kMinDistanceM = 0.1;

// Dual-slope residential loss: exponent 2 up to the break distance, 3.5 beyond,
// plus a fixed penetration loss per crossed wall.
inline double path_loss_db(double distance_m, int wall_count, const RadioConfig& config) {
  const double d = std::max(distance_m, kMinDistanceM);
  const double bp = config.break_distance_m;
  double loss = 40.05 + 20.0 * std::log10(config.carrier_freq_ghz / 2.4) +
                20.0 * std::log10(std::min(d, bp));
  if (d > bp) loss += 35.0 * std::log10(d / bp);
  return loss + config.wall_loss_db * std::max(wall_count, 0);
}

inline int count_walls(Point a, Point b, const Topology& topology) {
  const Segment path{a, b};
  int n = 0;
  for (const auto& w : topology.walls)
    if (segments_cross(path, w)) ++n;
  return n;
}

class GainTable {
 public:
  GainTable() = default;
  GainTable(std::size_t num_aps, std::size_t num_nodes)
      : num_aps_(num_aps),
        num_nodes_(num_nodes),
        large_(num_aps * num_nodes, 1.0),
        small_(num_aps * num_nodes, 1.0) {}

  std::size_t num_aps() const { return num_aps_; }
  std::size_t num_nodes() const { return num_nodes_; }

  double large(std::size_t tx, std::size_t rx) const { return large_[tx * num_nodes_ + rx]; }
  double small(std::size_t tx, std::size_t rx) const { return small_[tx * num_nodes_ + rx]; }
  double gain(std::size_t tx, std::size_t rx) const { return large(tx, rx) * small(tx, rx); }

  void set_large(std::size_t tx, std::size_t rx, double v) { large_[tx * num_nodes_ + rx] = v; }
  void set_small(std::size_t tx, std::size_t rx, double v) { small_[tx * num_nodes_ + rx] = v; }

  std::span<const double> large_scale() const { return large_; }
  std::span<const double> small_scale() const { return small_; }

 private:
  std::size_t num_aps_ = 0;
  std::size_t num_nodes_ = 0;
  std::vector<double> large_;
  std::vector<double> small_;
};

// Path loss plus log-normal shadowing, drawn once per link. AP<->AP links share
// one draw so the table is reciprocal. Small-scale entries start at 1.
inline GainTable sample_large_scale(const Topology& topology, const RadioConfig& config, Rng& rng) {
  const std::size_t aps = topology.num_aps();
  const std::size_t nodes = topology.num_nodes();
  GainTable table(aps, nodes);
  std::normal_distribution<double> shadow(0.0, 1.0);

  auto link_gain = [&](std::size_t tx, std::size_t rx) {
    const Point a = topology.node_position(tx);
    const Point b = topology.node_position(rx);
    const double pl = path_loss_db(distance(a, b), count_walls(a, b, topology), config);
    const double x = config.shadowing_std_db * shadow(rng);
    return db_to_linear(-(pl + x));
  };

  for (std::size_t k = 0; k < aps; ++k) {
    for (std::size_t j = k + 1; j < aps; ++j) {
      const double g = link_gain(k, j);
      table.set_large(k, j, g);
      table.set_large(j, k, g);
    }
  }
  for (std::size_t k = 0; k < aps; ++k)
    for (std::size_t n = aps; n < nodes; ++n) table.set_large(k, n, link_gain(k, n));
  return table;
}

// Unit-mean Nakagami-m power fading: Gamma(shape m, scale 1/m) per link.
inline void resample_small_scale(GainTable& table, double nakagami_m, Rng& rng) {
  std::gamma_distribution<double> fading(nakagami_m, 1.0 / nakagami_m);
  for (std::size_t k = 0; k < table.num_aps(); ++k)
    for (std::size_t n = 0; n < table.num_nodes(); ++n)
      table.set_small(k, n, k == n ? 1.0 : fading(rng));
}

struct SinrSample {
  std::size_t tx_ap = 0;
  std::size_t rx_node = 0;
  double sinr_linear = 0.0;
  bool success = false;

  double sinr_db() const { return linear_to_db(sinr_linear); }
};

// tx_power_dbm holds one entry per AP; entries at or below the zero level
// (including -inf) are APs that are not transmitting.
inline SinrSample sinr(std::size_t rx_node, std::size_t tx_ap, std::span<const double> tx_power_dbm,
                       const GainTable& table, const RadioConfig& config) {
  const double p_own = transmit_power_mw(tx_power_dbm[tx_ap], config);
  if (p_own <= 0.0) throw std::invalid_argument("sinr requested for an AP that is not transmitting");
  double interference = db_to_linear(config.noise_power_dbm);
  for (std::size_t k = 0; k < tx_power_dbm.size(); ++k) {
    if (k == tx_ap) continue;
    const double p = transmit_power_mw(tx_power_dbm[k], config);
    if (p > 0.0) interference += p * table.gain(k, rx_node);
  }
  SinrSample s;
  s.tx_ap = tx_ap;
  s.rx_node = rx_node;
  s.sinr_linear = p_own * table.gain(tx_ap, rx_node) / interference;
  s.success = s.sinr_linear >= db_to_linear(config.sinr_threshold_db);
  return s;
}

inline double sensed_power_dbm(std::size_t listener_ap, std::span<const double> tx_power_dbm,
                               const GainTable& table, const RadioConfig& config) {
  double total = db_to_linear(config.noise_power_dbm);
  for (std::size_t k = 0; k < tx_power_dbm.size(); ++k) {
    if (k == listener_ap) continue;
    const double p = transmit_power_mw(tx_power_dbm[k], config);
    if (p > 0.0) total += p * table.gain(k, listener_ap);
  }
  return linear_to_db(total);
}

inline bool channel_idle(std::size_t listener_ap, std::span<const double> tx_power_dbm,
                         const GainTable& table, const RadioConfig& config) {
  return sensed_power_dbm(listener_ap, tx_power_dbm, table, config) < config.cca_threshold_dbm;
}

inline constexpr double kSilentDbm = -std::numeric_limits<double>::infinity();

}  // namespace csr
