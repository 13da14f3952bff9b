#pragma once

// Experiment configuration: JSON parse/emit with strict key checking,
// validation, seed derivation, topology presets and a canonical hash used to
// name run directories.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <optional>
#include <regex>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "csr/agent.hpp"
#include "csr/channel.hpp"
#include "csr/mac.hpp"
#include "csr/random.hpp"
#include "csr/rewards.hpp"
#include "csr/simulation.hpp"
#include "csr/traffic.hpp"
#include "json.hpp"

namespace csr {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Mode { Hmarl, CsmaBaseline, AblationIppoHrl, AblationMarlComnet };

struct CustomTopology {
  std::vector<Rect> rooms;
  std::vector<Point> aps;
  std::vector<std::vector<Point>> stas;
  std::vector<Segment> walls;

  friend bool operator==(const CustomTopology&, const CustomTopology&) = default;
};

struct TopologySpec {
  std::string preset = "fig9_symmetric";  // fig9_symmetric | row<K> | grid<R>x<C> | custom
  std::size_t stas_per_ap = 2;
  double room_size_m = 10.0;       // grid rooms
  double room_spacing_m = 20.0;    // fig9 and row presets: AP spacing and room width
  double sta_distance_m = 5.0;     // fig9 and row presets
  double min_sta_distance_m = 1.0;  // grid random placement
  double wall_margin_m = 0.5;       // grid random placement
  std::optional<CustomTopology> custom;

  friend bool operator==(const TopologySpec&, const TopologySpec&) = default;
};

struct SeedOverrides {
  std::optional<std::uint64_t> topology, channel, traffic, policy;
  friend bool operator==(const SeedOverrides&, const SeedOverrides&) = default;
};

struct Seeds {
  std::uint64_t topology = 0, channel = 0, traffic = 0, policy = 0;
};

struct ExperimentConfig {
  Mode mode = Mode::Hmarl;
  TopologySpec topology;
  std::vector<std::size_t> legacy_aps;
  RadioConfig radio;
  MacTiming timing;
  TrafficConfig traffic;
  AgentConfig agent;
  RewardVariant reward = RewardVariant::TotPlusInd;
  double u_floor = kDefaultUtilizationFloor;
  double window_s = 0.5;
  double duration_s = 30.0;
  double warmup_fraction = 0.1;
  double fairness_interval_s = 0.1;
  double beta_min = 0.0;
  std::size_t reward_curve_window = 100;
  bool sharing_ap_max_power = false;
  bool greedy_eval = false;
  bool trace = false;
  std::string checkpoint_dir;  // eval input; empty means <run dir>/checkpoints of a matching train run
  std::uint64_t seed = 1;
  SeedOverrides seeds;

  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;

  // Per-component seeds: explicit overrides win, the rest derive from `seed`.
  Seeds effective_seeds() const {
    Seeds s;
    s.topology = seeds.topology.value_or(derive_seed(seed, 11));
    s.channel = seeds.channel.value_or(derive_seed(seed, 12));
    s.traffic = seeds.traffic.value_or(derive_seed(seed, 13));
    s.policy = seeds.policy.value_or(derive_seed(seed, 14));
    return s;
  }

  std::int64_t total_slots() const { return std::llround(duration_s / timing.slot_seconds()); }
  std::int64_t warmup_slots() const { return std::llround(warmup_fraction * static_cast<double>(total_slots())); }
  std::int64_t window_slots() const { return std::llround(window_s / timing.slot_seconds()); }
  std::int64_t fairness_interval_slots() const { return std::llround(fairness_interval_s / timing.slot_seconds()); }
};

// ---------------------------------------------------------------------------
// Enum names

inline const char* to_string(Mode m) {
  switch (m) {
    case Mode::Hmarl: return "hmarl";
    case Mode::CsmaBaseline: return "csma_baseline";
    case Mode::AblationIppoHrl: return "ablation_ippo_hrl";
    case Mode::AblationMarlComnet: return "ablation_marl_comnet";
  }
  return "?";
}

inline Mode parse_mode(const std::string& s) {
  for (Mode m : {Mode::Hmarl, Mode::CsmaBaseline, Mode::AblationIppoHrl, Mode::AblationMarlComnet})
    if (s == to_string(m)) return m;
  throw ConfigError("unknown mode '" + s + "' (hmarl, csma_baseline, ablation_ippo_hrl, ablation_marl_comnet)");
}

inline const char* to_string(RewardVariant v) {
  switch (v) {
    case RewardVariant::TotPlusInd: return "tot_plus_ind";
    case RewardVariant::TotOnly: return "tot_only";
    case RewardVariant::CountSuccesses: return "count_successes";
  }
  return "?";
}

inline RewardVariant parse_reward_variant(const std::string& s) {
  for (RewardVariant v : {RewardVariant::TotPlusInd, RewardVariant::TotOnly, RewardVariant::CountSuccesses})
    if (s == to_string(v)) return v;
  throw ConfigError("unknown reward variant '" + s + "' (tot_plus_ind, tot_only, count_successes)");
}

// ---------------------------------------------------------------------------
// Strict JSON reading: every key must be known, types must match.

namespace detail {

class Reader {
 public:
  Reader(const nlohmann::json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + ": expected an object");
  }
  Reader(const Reader&) = delete;
  Reader& operator=(const Reader&) = delete;

  // Rejects keys that no get/child call asked for.
  void finish() const {
    for (const auto& [k, v] : j_.items())
      if (!seen_.count(k)) throw ConfigError(path_ + "." + k + ": unknown key");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    const auto& v = j_.at(key);
    try {
      if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) throw ConfigError("expected a boolean");
      } else if constexpr (std::is_integral_v<T>) {
        if (!v.is_number_integer()) throw ConfigError("expected an integer");
        if (std::is_unsigned_v<T> && v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0)
          throw ConfigError("expected a non-negative integer");
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!v.is_number()) throw ConfigError("expected a number");
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!v.is_string()) throw ConfigError("expected a string");
      }
      out = v.get<T>();
    } catch (const ConfigError& e) {
      throw ConfigError(path_ + "." + key + ": " + e.what());
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(path_ + "." + key + ": " + e.what());
    }
  }

  template <typename T>
  void get_optional(const char* key, std::optional<T>& out) {
    seen_.insert(key);
    if (!j_.contains(key) || j_.at(key).is_null()) {
      if (j_.contains(key)) out.reset();
      return;
    }
    T v{};
    get(key, v);
    out = v;
  }

  const nlohmann::json* child(const char* key) {
    seen_.insert(key);
    return j_.contains(key) && !j_.at(key).is_null() ? &j_.at(key) : nullptr;
  }

  std::string path(const char* key) const { return path_ + "." + key; }

 private:
  const nlohmann::json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

inline nlohmann::json point_json(Point p) { return nlohmann::json::array({p.x, p.y}); }

inline Point parse_point(const nlohmann::json& j, const std::string& path) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number())
    throw ConfigError(path + ": expected [x, y]");
  return {j[0].get<double>(), j[1].get<double>()};
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Emit

inline nlohmann::json to_json(const ExperimentConfig& c) {
  using nlohmann::json;
  json topo{{"preset", c.topology.preset},
            {"stas_per_ap", c.topology.stas_per_ap},
            {"room_size_m", c.topology.room_size_m},
            {"room_spacing_m", c.topology.room_spacing_m},
            {"sta_distance_m", c.topology.sta_distance_m},
            {"min_sta_distance_m", c.topology.min_sta_distance_m},
            {"wall_margin_m", c.topology.wall_margin_m}};
  if (c.topology.custom) {
    const auto& t = *c.topology.custom;
    json rooms = json::array(), aps = json::array(), stas = json::array(), walls = json::array();
    for (const auto& r : t.rooms) rooms.push_back({r.x0, r.y0, r.x1, r.y1});
    for (const auto& p : t.aps) aps.push_back(detail::point_json(p));
    for (const auto& bss : t.stas) {
      json b = json::array();
      for (const auto& p : bss) b.push_back(detail::point_json(p));
      stas.push_back(std::move(b));
    }
    for (const auto& w : t.walls) walls.push_back({detail::point_json(w.a), detail::point_json(w.b)});
    topo["custom"] = {{"rooms", rooms}, {"aps", aps}, {"stas", stas}, {"walls", walls}};
  } else {
    topo["custom"] = nullptr;
  }
  const auto& r = c.radio;
  const auto& t = c.timing;
  const auto& a = c.agent;
  auto opt = [](const std::optional<std::uint64_t>& v) { return v ? json(*v) : json(); };
  return json{
      {"mode", to_string(c.mode)},
      {"topology", topo},
      {"legacy_aps", c.legacy_aps},
      {"radio",
       {{"power_levels_dbm", r.power_levels_dbm},
        {"noise_power_dbm", r.noise_power_dbm},
        {"sinr_threshold_db", r.sinr_threshold_db},
        {"carrier_freq_ghz", r.carrier_freq_ghz},
        {"break_distance_m", r.break_distance_m},
        {"shadowing_std_db", r.shadowing_std_db},
        {"nakagami_m", r.nakagami_m},
        {"cca_threshold_dbm", r.cca_threshold_dbm},
        {"wall_loss_db", r.wall_loss_db}}},
      {"timing",
       {{"slot_us", t.slot_us},
        {"packet_slots", t.packet_slots},
        {"ack_slots", t.ack_slots},
        {"difs_slots", t.difs_slots},
        {"sifs_slots", t.sifs_slots},
        {"polling_slots", t.polling_slots},
        {"cw_min", t.cw_min},
        {"cw_max", t.cw_max},
        {"e0", t.e0}}},
      {"traffic", {{"arrival_rate_per_slot", c.traffic.arrival_rate_per_slot}, {"queue_capacity", c.traffic.queue_capacity}}},
      {"agent",
       {{"encoder_hidden", a.encoder_hidden},
        {"actor_hidden", a.actor_hidden},
        {"critic_hidden", a.critic_hidden},
        {"history_length", a.history_length},
        {"learning_rate", a.learning_rate},
        {"rmsprop_decay", a.rmsprop_decay},
        {"rmsprop_epsilon", a.rmsprop_epsilon},
        {"gamma", a.gamma},
        {"gae_lambda", a.gae_lambda},
        {"clip_epsilon", a.clip_epsilon},
        {"omega_tot", a.omega_tot},
        {"omega_ind", a.omega_ind},
        {"ppo_epochs", a.ppo_epochs},
        {"update_interval_txops", a.update_interval_txops},
        {"max_grad_norm", a.max_grad_norm}}},
      {"reward", {{"variant", to_string(c.reward)}, {"u_floor", c.u_floor}, {"window_s", c.window_s}}},
      {"duration_s", c.duration_s},
      {"warmup_fraction", c.warmup_fraction},
      {"metrics",
       {{"fairness_interval_s", c.fairness_interval_s},
        {"beta_min", c.beta_min},
        {"reward_curve_window", c.reward_curve_window}}},
      {"sharing_ap_max_power", c.sharing_ap_max_power},
      {"greedy_eval", c.greedy_eval},
      {"trace", c.trace},
      {"checkpoint_dir", c.checkpoint_dir},
      {"seed", c.seed},
      {"seeds", {{"topology", opt(c.seeds.topology)}, {"channel", opt(c.seeds.channel)},
                 {"traffic", opt(c.seeds.traffic)}, {"policy", opt(c.seeds.policy)}}}};
}

// ---------------------------------------------------------------------------
// Parse

namespace detail {

inline ExperimentConfig parse_config_unchecked(const nlohmann::json& j) {
  ExperimentConfig c;
  detail::Reader root(j, "config");
  std::string s = to_string(c.mode);
  root.get("mode", s);
  c.mode = parse_mode(s);
  if (const auto* tj = root.child("topology")) {
    detail::Reader t(*tj, root.path("topology"));
    t.get("preset", c.topology.preset);
    t.get("stas_per_ap", c.topology.stas_per_ap);
    t.get("room_size_m", c.topology.room_size_m);
    t.get("room_spacing_m", c.topology.room_spacing_m);
    t.get("sta_distance_m", c.topology.sta_distance_m);
    t.get("min_sta_distance_m", c.topology.min_sta_distance_m);
    t.get("wall_margin_m", c.topology.wall_margin_m);
    if (const auto* cj = t.child("custom")) {
      detail::Reader cr(*cj, t.path("custom"));
      CustomTopology ct;
      const std::string base = t.path("custom");
      if (const auto* rj = cr.child("rooms")) {
        if (!rj->is_array()) throw ConfigError(base + ".rooms: expected an array");
        for (const auto& r : *rj) {
          if (!r.is_array() || r.size() != 4) throw ConfigError(base + ".rooms: expected [x0, y0, x1, y1]");
          ct.rooms.push_back({r[0].get<double>(), r[1].get<double>(), r[2].get<double>(), r[3].get<double>()});
        }
      }
      if (const auto* aj = cr.child("aps"))
        for (const auto& p : *aj) ct.aps.push_back(detail::parse_point(p, base + ".aps"));
      if (const auto* sj = cr.child("stas"))
        for (const auto& bss : *sj) {
          std::vector<Point> b;
          for (const auto& p : bss) b.push_back(detail::parse_point(p, base + ".stas"));
          ct.stas.push_back(std::move(b));
        }
      if (const auto* wj = cr.child("walls"))
        for (const auto& w : *wj) {
          if (!w.is_array() || w.size() != 2) throw ConfigError(base + ".walls: expected [[x, y], [x, y]]");
          ct.walls.push_back({detail::parse_point(w[0], base + ".walls"), detail::parse_point(w[1], base + ".walls")});
        }
      cr.finish();
      c.topology.custom = std::move(ct);
    }
    t.finish();
  }
  root.get("legacy_aps", c.legacy_aps);
  if (const auto* rj = root.child("radio")) {
    detail::Reader r(*rj, root.path("radio"));
    r.get("power_levels_dbm", c.radio.power_levels_dbm);
    r.get("noise_power_dbm", c.radio.noise_power_dbm);
    r.get("sinr_threshold_db", c.radio.sinr_threshold_db);
    r.get("carrier_freq_ghz", c.radio.carrier_freq_ghz);
    r.get("break_distance_m", c.radio.break_distance_m);
    r.get("shadowing_std_db", c.radio.shadowing_std_db);
    r.get("nakagami_m", c.radio.nakagami_m);
    r.get("cca_threshold_dbm", c.radio.cca_threshold_dbm);
    r.get("wall_loss_db", c.radio.wall_loss_db);
    r.finish();
  }
  if (const auto* tj = root.child("timing")) {
    detail::Reader t(*tj, root.path("timing"));
    t.get("slot_us", c.timing.slot_us);
    t.get("packet_slots", c.timing.packet_slots);
    t.get("ack_slots", c.timing.ack_slots);
    t.get("difs_slots", c.timing.difs_slots);
    t.get("sifs_slots", c.timing.sifs_slots);
    t.get("polling_slots", c.timing.polling_slots);
    t.get("cw_min", c.timing.cw_min);
    t.get("cw_max", c.timing.cw_max);
    t.get("e0", c.timing.e0);
    t.finish();
  }
  if (const auto* tj = root.child("traffic")) {
    detail::Reader t(*tj, root.path("traffic"));
    t.get("arrival_rate_per_slot", c.traffic.arrival_rate_per_slot);
    t.get("queue_capacity", c.traffic.queue_capacity);
    t.finish();
  }
  if (const auto* aj = root.child("agent")) {
    detail::Reader a(*aj, root.path("agent"));
    a.get("encoder_hidden", c.agent.encoder_hidden);
    a.get("actor_hidden", c.agent.actor_hidden);
    a.get("critic_hidden", c.agent.critic_hidden);
    a.get("history_length", c.agent.history_length);
    a.get("learning_rate", c.agent.learning_rate);
    a.get("rmsprop_decay", c.agent.rmsprop_decay);
    a.get("rmsprop_epsilon", c.agent.rmsprop_epsilon);
    a.get("gamma", c.agent.gamma);
    a.get("gae_lambda", c.agent.gae_lambda);
    a.get("clip_epsilon", c.agent.clip_epsilon);
    a.get("omega_tot", c.agent.omega_tot);
    a.get("omega_ind", c.agent.omega_ind);
    a.get("ppo_epochs", c.agent.ppo_epochs);
    a.get("update_interval_txops", c.agent.update_interval_txops);
    a.get("max_grad_norm", c.agent.max_grad_norm);
    a.finish();
  }
  if (const auto* rj = root.child("reward")) {
    detail::Reader r(*rj, root.path("reward"));
    std::string v = to_string(c.reward);
    r.get("variant", v);
    c.reward = parse_reward_variant(v);
    r.get("u_floor", c.u_floor);
    r.get("window_s", c.window_s);
    r.finish();
  }
  root.get("duration_s", c.duration_s);
  root.get("warmup_fraction", c.warmup_fraction);
  if (const auto* mj = root.child("metrics")) {
    detail::Reader m(*mj, root.path("metrics"));
    m.get("fairness_interval_s", c.fairness_interval_s);
    m.get("beta_min", c.beta_min);
    m.get("reward_curve_window", c.reward_curve_window);
    m.finish();
  }
  root.get("sharing_ap_max_power", c.sharing_ap_max_power);
  root.get("greedy_eval", c.greedy_eval);
  root.get("trace", c.trace);
  root.get("checkpoint_dir", c.checkpoint_dir);
  root.get("seed", c.seed);
  if (const auto* sj = root.child("seeds")) {
    detail::Reader sr(*sj, root.path("seeds"));
    sr.get_optional("topology", c.seeds.topology);
    sr.get_optional("channel", c.seeds.channel);
    sr.get_optional("traffic", c.seeds.traffic);
    sr.get_optional("policy", c.seeds.policy);
    sr.finish();
  }
  root.finish();
  return c;
}

}  // namespace detail

inline ExperimentConfig parse_config(const nlohmann::json& j) {
  try {
    return detail::parse_config_unchecked(j);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

inline ExperimentConfig parse_config_text(const std::string& text, const std::string& origin = "config") {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text, nullptr, true, true);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(origin + ": " + e.what());
  }
  return parse_config(j);
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config_text(ss.str(), path);
}

// ---------------------------------------------------------------------------
// Topology presets

struct GridShape {
  std::size_t rows = 0, cols = 0;
};

inline std::optional<GridShape> parse_grid_preset(const std::string& name) {
  static const std::regex re("grid([1-9][0-9]*)x([1-9][0-9]*)");
  std::smatch m;
  if (!std::regex_match(name, m, re)) return std::nullopt;
  return GridShape{std::stoul(m[1]), std::stoul(m[2])};
}

inline std::optional<std::size_t> parse_row_preset(const std::string& name) {
  static const std::regex re("row([1-9][0-9]*)");
  std::smatch m;
  if (!std::regex_match(name, m, re)) return std::nullopt;
  return std::stoul(m[1]);
}

// K APs in a row `spacing` apart, each centred in a spacing-wide square room,
// STAs at +-d along the row axis (alternating sides beyond two).
inline Topology row_topology(std::size_t k, const TopologySpec& spec) {
  Topology t;
  const double w = spec.room_spacing_m;
  for (std::size_t a = 0; a < k; ++a) {
    const double cx = static_cast<double>(a) * w;
    t.rooms.push_back({cx - w / 2, -w / 2, cx + w / 2, w / 2});
    t.ap_positions.push_back({cx, 0.0});
    std::vector<Point> stas;
    for (std::size_t s = 0; s < spec.stas_per_ap; ++s) {
      const double angle = 3.14159265358979323846 * static_cast<double>(s) / static_cast<double>(spec.stas_per_ap);
      const double sign = s % 2 == 0 ? -1.0 : 1.0;
      // two STAs sit on the axis; more are spread around the AP
      const double dx = spec.stas_per_ap <= 2 ? sign * spec.sta_distance_m : spec.sta_distance_m * std::cos(2 * angle);
      const double dy = spec.stas_per_ap <= 2 ? 0.0 : spec.sta_distance_m * std::sin(2 * angle);
      stas.push_back({cx + dx, dy});
    }
    t.sta_positions.push_back(std::move(stas));
    if (a > 0) t.walls.push_back({{cx - w / 2, -w / 2}, {cx - w / 2, w / 2}});
  }
  return t;
}

inline Topology grid_topology(GridShape g, const TopologySpec& spec, Rng& rng) {
  Topology t;
  const double w = spec.room_size_m;
  const double half = w / 2 - spec.wall_margin_m;
  if (!(half > spec.min_sta_distance_m))
    throw ConfigError("topology: room too small for the STA margin and minimum distance");
  for (std::size_t r = 0; r < g.rows; ++r)
    for (std::size_t c = 0; c < g.cols; ++c) {
      const Rect room{static_cast<double>(c) * w, static_cast<double>(r) * w, static_cast<double>(c + 1) * w,
                      static_cast<double>(r + 1) * w};
      t.rooms.push_back(room);
      const Point ap = room.center();
      t.ap_positions.push_back(ap);
      std::vector<Point> stas;
      for (std::size_t s = 0; s < spec.stas_per_ap; ++s) {
        Point p;
        do {
          p = {ap.x + (2 * uniform01(rng) - 1) * half, ap.y + (2 * uniform01(rng) - 1) * half};
        } while (distance(p, ap) < spec.min_sta_distance_m);
        stas.push_back(p);
      }
      t.sta_positions.push_back(std::move(stas));
    }
  const double width = static_cast<double>(g.cols) * w, height = static_cast<double>(g.rows) * w;
  for (std::size_t c = 1; c < g.cols; ++c)
    t.walls.push_back({{static_cast<double>(c) * w, 0.0}, {static_cast<double>(c) * w, height}});
  for (std::size_t r = 1; r < g.rows; ++r)
    t.walls.push_back({{0.0, static_cast<double>(r) * w}, {width, static_cast<double>(r) * w}});
  return t;
}

inline Topology build_topology(const TopologySpec& spec, std::uint64_t topology_seed) {
  Topology t;
  if (spec.preset == "custom") {
    if (!spec.custom) throw ConfigError("topology: preset 'custom' requires topology.custom");
    t.rooms = spec.custom->rooms;
    t.ap_positions = spec.custom->aps;
    t.sta_positions = spec.custom->stas;
    t.walls = spec.custom->walls;
  } else {
    if (spec.custom) throw ConfigError("topology: 'custom' is only allowed with preset 'custom'");
    if (spec.stas_per_ap == 0) throw ConfigError("topology: stas_per_ap must be positive");
    if (spec.preset == "fig9_symmetric") {
      t = row_topology(3, spec);
    } else if (auto k = parse_row_preset(spec.preset)) {
      t = row_topology(*k, spec);
    } else if (auto g = parse_grid_preset(spec.preset)) {
      Rng rng = make_rng(topology_seed, 0);
      t = grid_topology(*g, spec, rng);
    } else {
      throw ConfigError("topology: unknown preset '" + spec.preset + "' (fig9_symmetric, row<K>, grid<R>x<C>, custom)");
    }
  }
  try {
    t.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("topology: ") + e.what());
  }
  return t;
}

// ---------------------------------------------------------------------------
// Derived settings

inline std::vector<ApRole> roles_for(const ExperimentConfig& c, std::size_t num_aps) {
  std::vector<ApRole> roles(num_aps, c.mode == Mode::CsmaBaseline ? ApRole::Legacy : ApRole::Learning);
  for (std::size_t a : c.legacy_aps)
    if (a < num_aps) roles[a] = ApRole::Legacy;
  return roles;
}

inline AgentConfig agent_config_for(const ExperimentConfig& c) {
  AgentConfig a = c.agent;
  a.use_messages = c.mode != Mode::AblationIppoHrl;
  a.structure = c.mode == Mode::AblationMarlComnet ? PolicyStructure::Flat : PolicyStructure::Hierarchical;
  return a;
}

inline void validate(const ExperimentConfig& c) {
  auto wrap = [](const char* what, auto&& fn) {
    try {
      fn();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string(what) + ": " + e.what());
    }
  };
  wrap("radio", [&] { c.radio.validate(); });
  wrap("timing", [&] { c.timing.validate(); });
  wrap("traffic", [&] { c.traffic.validate(); });
  wrap("agent", [&] { agent_config_for(c).validate(); });
  if (!(c.duration_s > 0.0)) throw ConfigError("duration_s must be positive");
  if (!(c.warmup_fraction >= 0.0 && c.warmup_fraction < 1.0)) throw ConfigError("warmup_fraction must be in [0, 1)");
  if (c.total_slots() <= c.warmup_slots()) throw ConfigError("run length must exceed the warm-up");
  if (!(c.window_s > 0.0) || c.window_slots() <= 0) throw ConfigError("reward.window_s must cover at least one slot");
  if (!(c.fairness_interval_s > 0.0) || c.fairness_interval_slots() <= 0)
    throw ConfigError("metrics.fairness_interval_s must cover at least one slot");
  if (!(c.u_floor > 0.0 && c.u_floor <= 1.0)) throw ConfigError("reward.u_floor must be in (0, 1]");
  if (!(c.beta_min >= 0.0 && c.beta_min <= 1.0)) throw ConfigError("metrics.beta_min must be in [0, 1]");
  if (c.reward_curve_window == 0) throw ConfigError("metrics.reward_curve_window must be positive");
  const Topology t = build_topology(c.topology, c.effective_seeds().topology);
  std::set<std::size_t> seen;
  for (std::size_t a : c.legacy_aps) {
    if (a >= t.num_aps()) throw ConfigError("legacy_aps: index " + std::to_string(a) + " outside the topology");
    if (!seen.insert(a).second) throw ConfigError("legacy_aps: duplicate index " + std::to_string(a));
  }
  if (c.mode != Mode::CsmaBaseline && seen.size() == t.num_aps())
    throw ConfigError("mode " + std::string(to_string(c.mode)) + " needs at least one learning AP");
  if (c.mode == Mode::CsmaBaseline && !c.legacy_aps.empty())
    throw ConfigError("legacy_aps is meaningless with mode csma_baseline (every AP is legacy)");
}

// FNV-1a over the canonical JSON, seeds and run-only fields excluded.
inline std::string config_hash(const ExperimentConfig& c) {
  nlohmann::json j = to_json(c);
  for (const char* k : {"seed", "seeds", "trace", "checkpoint_dir", "greedy_eval"}) j.erase(k);
  const std::string text = j.dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

inline std::string run_name(const ExperimentConfig& c) {
  std::string name = config_hash(c) + "_seed" + std::to_string(c.seed);
  if (c.seeds != SeedOverrides{}) {
    const Seeds s = c.effective_seeds();
    name += "_" + std::to_string(s.topology % 100000) + "-" + std::to_string(s.channel % 100000) + "-" +
            std::to_string(s.traffic % 100000) + "-" + std::to_string(s.policy % 100000);
  }
  return name;
}

inline SimulationConfig simulation_config(const ExperimentConfig& c) {
  const Seeds seeds = c.effective_seeds();
  SimulationConfig s;
  s.topology = build_topology(c.topology, seeds.topology);
  s.radio = c.radio;
  s.timing = c.timing;
  s.traffic = c.traffic;
  s.roles = roles_for(c, s.topology.num_aps());
  s.reward = c.reward;
  s.u_floor = c.u_floor;
  s.window_slots = c.window_slots();
  s.fairness_interval_slots = c.fairness_interval_slots();
  s.channel_seed = seeds.channel;
  s.traffic_seed = seeds.traffic;
  return s;
}

}  // namespace csr
