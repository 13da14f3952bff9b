#pragma once

// Runs one configured experiment (train or eval) and writes its artifacts:
// metrics.json, reward_curve.csv, fairness_trace.csv, optional events.jsonl,
// training_log.jsonl and checkpoints/ under a directory named by config hash
// and seed. Also drives multi-run sweeps on a thread pool.

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <memory>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "csr/config.hpp"
#include "csr/hmarl.hpp"
#include "csr/simulation.hpp"
#include "json.hpp"

namespace csr {

enum class RunKind { Train, Eval };

inline const char* to_string(RunKind k) { return k == RunKind::Train ? "train" : "eval"; }

struct CurvePoint {
  double time_s = 0.0;
  double value = 0.0;
};

struct RunResult {
  std::filesystem::path run_dir;
  MetricsReport metrics;
  std::vector<CurvePoint> reward_curve;  // moving average of r_tot over the last W events
  std::vector<FairnessPoint> fairness;
  std::size_t updates = 0;
  std::size_t txops = 0;
  std::size_t collisions = 0;
};

inline std::vector<CurvePoint> moving_average_curve(const std::vector<RewardEvent>& events, double slot_seconds,
                                                    std::size_t window) {
  std::vector<CurvePoint> out;
  out.reserve(events.size());
  std::deque<double> recent;
  double sum = 0.0;
  for (const auto& e : events) {
    recent.push_back(e.r_tot);
    sum += e.r_tot;
    if (recent.size() > window) {
      sum -= recent.front();
      recent.pop_front();
    }
    out.push_back({static_cast<double>(e.slot + 1) * slot_seconds, sum / static_cast<double>(recent.size())});
  }
  return out;
}

// Last curve value at or before t; NaN before the first point.
inline double curve_value_at(const std::vector<CurvePoint>& curve, double t) {
  auto it = std::upper_bound(curve.begin(), curve.end(), t,
                             [](double v, const CurvePoint& p) { return v < p.time_s; });
  if (it == curve.begin()) return std::numeric_limits<double>::quiet_NaN();
  return std::prev(it)->value;
}

// Least-squares slope of the curve over [t0, t1].
inline double curve_slope(const std::vector<CurvePoint>& curve, double t0, double t1) {
  double n = 0, sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (const auto& p : curve) {
    if (p.time_s < t0 || p.time_s > t1) continue;
    n += 1;
    sx += p.time_s;
    sy += p.value;
    sxx += p.time_s * p.time_s;
    sxy += p.time_s * p.value;
  }
  const double den = n * sxx - sx * sx;
  if (n < 2 || den == 0.0) return std::numeric_limits<double>::quiet_NaN();
  return (n * sxy - sx * sy) / den;
}

inline double curve_mean(const std::vector<CurvePoint>& curve, double t0, double t1) {
  double n = 0, s = 0;
  for (const auto& p : curve)
    if (p.time_s >= t0 && p.time_s <= t1) {
      n += 1;
      s += p.value;
    }
  return n > 0 ? s / n : std::numeric_limits<double>::quiet_NaN();
}

namespace detail {

inline std::ofstream open_output(const std::filesystem::path& p) {
  std::ofstream f(p);
  if (!f) throw std::runtime_error("cannot open " + p.string() + " for writing");
  f << std::setprecision(17);
  return f;
}

inline void check_written(std::ofstream& f, const std::filesystem::path& p) {
  f.flush();
  if (!f) throw std::runtime_error("failed writing " + p.string());
}

}  // namespace detail

inline std::filesystem::path run_directory(const ExperimentConfig& c, RunKind kind, const std::filesystem::path& out_root) {
  return out_root / (std::string(to_string(kind)) + "_" + run_name(c));
}

inline void emit_results(const ExperimentConfig& c, RunKind kind, const RunResult& r) {
  namespace fs = std::filesystem;
  fs::create_directories(r.run_dir);
  {
    const auto p = r.run_dir / "metrics.json";
    auto f = detail::open_output(p);
    nlohmann::json j{{"run", to_string(kind)},
                     {"mode", to_string(c.mode)},
                     {"config_hash", config_hash(c)},
                     {"seed", c.seed},
                     {"metrics", r.metrics},
                     {"txops", r.txops},
                     {"contention_collisions", r.collisions},
                     {"policy_updates", r.updates}};
    f << j.dump(2) << '\n';
    detail::check_written(f, p);
  }
  {
    const auto p = r.run_dir / "reward_curve.csv";
    auto f = detail::open_output(p);
    f << "time_s,avg_total_reward\n";
    for (const auto& pt : r.reward_curve) f << pt.time_s << ',' << pt.value << '\n';
    detail::check_written(f, p);
  }
  {
    const auto p = r.run_dir / "fairness_trace.csv";
    auto f = detail::open_output(p);
    f << "time_s,ap_index,windowed_throughput\n";
    for (const auto& pt : r.fairness) f << pt.time_s << ',' << pt.ap << ',' << pt.windowed_throughput << '\n';
    detail::check_written(f, p);
  }
  {
    const auto p = r.run_dir / "config.json";
    auto f = detail::open_output(p);
    f << to_json(c).dump(2) << '\n';
    detail::check_written(f, p);
  }
}

// One complete run. Throws ConfigError on invalid input and
// nn::NumericalError when training diverges.
inline RunResult run_experiment(const ExperimentConfig& c, RunKind kind, const std::filesystem::path& out_root,
                                const std::filesystem::path& checkpoints = {}) {
  namespace fs = std::filesystem;
  validate(c);
  if (kind == RunKind::Train && c.mode == Mode::CsmaBaseline)
    throw ConfigError("train needs a learning mode; run csma_baseline with eval");
  const SimulationConfig sc = simulation_config(c);
  RunResult r;
  r.run_dir = run_directory(c, kind, out_root);
  fs::create_directories(r.run_dir);

  std::unique_ptr<HmarlController> ctl;
  std::ofstream log;
  if (c.mode != Mode::CsmaBaseline) {
    HmarlOptions o;
    o.agent = agent_config_for(c);
    o.training = kind == RunKind::Train;
    o.greedy = kind == RunKind::Eval && c.greedy_eval;
    o.sharing_ap_max_power = c.sharing_ap_max_power;
    o.policy_seed = c.effective_seeds().policy;
    ctl = std::make_unique<HmarlController>(sc.topology, sc.radio, sc.timing, sc.roles, o);
    if (kind == RunKind::Eval) {
      fs::path dir = checkpoints.empty() ? fs::path(c.checkpoint_dir) : checkpoints;
      if (dir.empty()) throw ConfigError("eval of a learning mode needs a checkpoint directory");
      if (!fs::is_directory(dir)) throw ConfigError("checkpoint directory " + dir.string() + " does not exist");
      try {
        ctl->load(dir);
      } catch (const std::runtime_error& e) {
        throw ConfigError(std::string("checkpoint load failed: ") + e.what());
      }
    } else {
      const auto p = r.run_dir / "training_log.jsonl";
      log = detail::open_output(p);
      ctl->set_log(&log);
    }
  }

  Simulation sim(sc, ctl.get());
  std::ofstream events;
  if (c.trace) {
    events = detail::open_output(r.run_dir / "events.jsonl");
    sim.set_trace(&events);
  }
  sim.run_slots(c.total_slots());
  if (c.trace) detail::check_written(events, r.run_dir / "events.jsonl");
  if (log.is_open()) detail::check_written(log, r.run_dir / "training_log.jsonl");

  r.metrics = sim.metrics(c.warmup_slots(), c.beta_min);
  r.reward_curve = moving_average_curve(sim.reward_events(), c.timing.slot_seconds(), c.reward_curve_window);
  r.fairness = sim.fairness();
  r.txops = sim.completed_txops();
  r.collisions = sim.collisions();
  if (ctl) {
    r.updates = ctl->updates();
    if (kind == RunKind::Train) ctl->save(r.run_dir / "checkpoints");
  }
  emit_results(c, kind, r);
  return r;
}

// ---------------------------------------------------------------------------
// Sweeps: the cross product of seeds, modes and reward variants over a base
// config, run on `jobs` worker threads.

struct SweepSpec {
  ExperimentConfig base;
  std::vector<std::uint64_t> seeds;
  std::vector<Mode> modes;
  std::vector<RewardVariant> rewards;
  std::size_t jobs = 1;
};

inline SweepSpec parse_sweep(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("base")) throw ConfigError("sweep: expected an object with a 'base' config");
  SweepSpec s;
  for (const auto& [k, v] : j.items())
    if (k != "base" && k != "seeds" && k != "modes" && k != "reward_variants" && k != "jobs")
      throw ConfigError("sweep." + k + ": unknown key");
  s.base = parse_config(j.at("base"));
  try {
    if (j.contains("seeds")) s.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    if (j.contains("modes"))
      for (const auto& m : j.at("modes")) s.modes.push_back(parse_mode(m.get<std::string>()));
    if (j.contains("reward_variants"))
      for (const auto& m : j.at("reward_variants")) s.rewards.push_back(parse_reward_variant(m.get<std::string>()));
    if (j.contains("jobs")) s.jobs = j.at("jobs").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("sweep: ") + e.what());
  }
  if (s.seeds.empty()) s.seeds.push_back(s.base.seed);
  if (s.modes.empty()) s.modes.push_back(s.base.mode);
  if (s.rewards.empty()) s.rewards.push_back(s.base.reward);
  if (s.jobs == 0) throw ConfigError("sweep.jobs must be positive");
  return s;
}

struct SweepEntry {
  ExperimentConfig config;
  RunKind kind = RunKind::Train;
  RunResult result;
  std::string error;
  bool numerical_abort = false;
};

inline std::vector<SweepEntry> expand_sweep(const SweepSpec& s) {
  std::vector<SweepEntry> out;
  for (Mode m : s.modes)
    for (RewardVariant v : s.rewards)
      for (std::uint64_t seed : s.seeds) {
        SweepEntry e;
        e.config = s.base;
        e.config.mode = m;
        e.config.reward = v;
        e.config.seed = seed;
        e.kind = m == Mode::CsmaBaseline ? RunKind::Eval : RunKind::Train;
        if (m == Mode::CsmaBaseline) e.config.legacy_aps.clear();
        validate(e.config);
        out.push_back(std::move(e));
      }
  return out;
}

inline std::vector<SweepEntry> run_sweep(const SweepSpec& s, const std::filesystem::path& out_root) {
  auto entries = expand_sweep(s);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < entries.size();) {
      auto& e = entries[i];
      try {
        e.result = run_experiment(e.config, e.kind, out_root);
      } catch (const nn::NumericalError& ex) {
        e.error = ex.what();
        e.numerical_abort = true;
      } catch (const std::exception& ex) {
        e.error = ex.what();
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < std::min(s.jobs, entries.size()); ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();

  nlohmann::json summary = nlohmann::json::array();
  for (const auto& e : entries) {
    nlohmann::json j{{"mode", to_string(e.config.mode)},
                     {"reward_variant", to_string(e.config.reward)},
                     {"seed", e.config.seed},
                     {"run", to_string(e.kind)}};
    if (e.error.empty()) {
      j["run_dir"] = e.result.run_dir.filename().string();
      j["metrics"] = e.result.metrics;
    } else {
      j["error"] = e.error;
    }
    summary.push_back(std::move(j));
  }
  std::filesystem::create_directories(out_root);
  const auto p = out_root / "sweep_summary.json";
  auto f = detail::open_output(p);
  f << summary.dump(2) << '\n';
  detail::check_written(f, p);
  return entries;
}

}  // namespace csr
