#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "crdql/agent.hpp"
#include "crdql/environment.hpp"
#include "crdql/errors.hpp"
#include "crdql/oracle.hpp"
#include "crdql/random.hpp"
#include "json.hpp"

namespace crdql {

namespace fs = std::filesystem;
using nlohmann::json;

// One row of a per-phase-count hyper-parameter table.
struct PhaseHyperparams {
  int phases = 0;
  double alpha = 0.0;
  double zeta = 1.0;
  double rho = 0.0;
  double lambda = 0.0;
  int c = 1;
};

inline PhaseHyperparams parse_phase_row(const json& j) {
  try {
    return {j.at("phases").get<int>(),  j.at("alpha").get<double>(),  j.at("zeta").get<double>(),
            j.at("rho").get<double>(),  j.at("lambda").get<double>(), j.at("c").get<int>()};
  } catch (const json::exception& e) {
    throw ConfigError(std::string("phase table row: ") + e.what());
  }
}

inline AgentHyperparams apply_phase_row(AgentHyperparams hp, const PhaseHyperparams& row) {
  hp.n_phases = row.phases;
  hp.alpha0 = row.alpha;
  hp.zeta = row.zeta;
  hp.rho = row.rho;
  hp.lambda = row.lambda;
  hp.target_period = row.c;
  return hp;
}

struct ExperimentConfig {
  ScenarioSpec scenario;
  LearnerKind learner = LearnerKind::Dql;
  AgentHyperparams agent;
  std::vector<PhaseHyperparams> phase_table;
  int n_runs = 1;
  std::uint64_t master_seed = 1;
  int workers = 1;
  RestartOptions restarts;
  double near_optimal_tau = 0.01;
  std::string output_dir = "out";
  bool record_wall_time = false;
  bool write_traces = true;
  bool write_oracle = true;

  // Hyper-parameters for the configured phase count, with the matching
  // phase-table row applied when one exists.
  AgentHyperparams effective_hyperparams() const {
    for (const auto& row : phase_table)
      if (row.phases == agent.n_phases) return apply_phase_row(agent, row);
    return agent;
  }

  void validate() const {
    scenario.grid.validate();
    scenario.env.validate();
    scenario.amc.validate();
    scenario.actions.validate();
    effective_hyperparams().validate();
    if (n_runs < 1) throw ConfigError("n_runs must be at least 1");
    if (workers < 1) throw ConfigError("workers must be at least 1");
    if (restarts.enabled && restarts.n_restarts < 1) throw ConfigError("n_restarts must be at least 1");
    if (!(near_optimal_tau >= 0.0 && near_optimal_tau < 1.0)) throw ConfigError("near_optimal_tau must lie in [0, 1)");
  }
};

namespace detail {
template <class T>
void read_opt(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}
}  // namespace detail

// `base_dir` resolves a relative AMC table path (normally the config file's directory).
inline ExperimentConfig parse_experiment_config(const json& j, const fs::path& base_dir = {}) {
  using detail::read_opt;
  ExperimentConfig c;
  try {
    if (j.contains("scenario")) {
      const json& s = j.at("scenario");
      if (s.contains("grid")) c.scenario.grid = s.at("grid").get<GridSpec>();
      read_opt(s, "n_cr", c.scenario.env.n_cr);
      read_opt(s, "noise_dbm", c.scenario.noise_dbm);
      read_opt(s, "epsilon", c.scenario.env.epsilon);
      read_opt(s, "pn_target_sinr_db", c.scenario.env.pn_target_sinr_db);
      read_opt(s, "pn_max_iters", c.scenario.env.pn_max_iters);
      if (s.contains("reward_mode")) c.scenario.env.reward_mode = parse_reward_mode(s.at("reward_mode").get<std::string>());
      if (s.contains("interference_reference"))
        c.scenario.env.interference_reference =
            parse_interference_reference(s.at("interference_reference").get<std::string>());
      if (s.contains("path_loss")) {
        const json& p = s.at("path_loss");
        read_opt(p, "intercept_db", c.scenario.path_loss.intercept_db);
        read_opt(p, "slope_db", c.scenario.path_loss.slope_db);
        read_opt(p, "penetration_db", c.scenario.path_loss.penetration_db);
        read_opt(p, "shadowing_std_db", c.scenario.path_loss.shadowing_std_db);
      }
      if (s.contains("amc_table")) {
        fs::path path = s.at("amc_table").get<std::string>();
        if (path.is_relative() && !base_dir.empty()) path = base_dir / path;
        c.scenario.amc.rows = load_amc_csv(path.string());
      }
      read_opt(s, "bandwidth_hz", c.scenario.amc.bandwidth_hz);
      read_opt(s, "snr_gap", c.scenario.amc.snr_gap);
      read_opt(s, "xi", c.scenario.amc.xi);
      if (s.contains("actions")) {
        const json& a = s.at("actions");
        read_opt(a, "min_dbm", c.scenario.actions.min_dbm);
        read_opt(a, "step_db", c.scenario.actions.step_db);
        read_opt(a, "levels", c.scenario.actions.levels);
      }
    }
    if (j.contains("learner")) c.learner = parse_learner_kind(j.at("learner").get<std::string>());
    if (j.contains("agent")) {
      const json& a = j.at("agent");
      AgentHyperparams& hp = c.agent;
      read_opt(a, "rho", hp.rho);
      read_opt(a, "lambda", hp.lambda);
      read_opt(a, "gamma", hp.gamma);
      read_opt(a, "phase_length", hp.phase_length);
      read_opt(a, "n_phases", hp.n_phases);
      read_opt(a, "alpha", hp.alpha0);
      read_opt(a, "zeta", hp.zeta);
      read_opt(a, "alpha_min", hp.alpha_min);
      read_opt(a, "c", hp.target_period);
      read_opt(a, "minibatch", hp.minibatch);
      read_opt(a, "tolerance_multiplier", hp.tolerance_multiplier);
      read_opt(a, "std_window", hp.std_window);
      read_opt(a, "activation_cap", hp.activation_cap);
      read_opt(a, "max_grad_norm", hp.max_grad_norm);
      read_opt(a, "hidden_layers", hp.hidden_layers);
      if (a.contains("lr_schedule")) hp.lr_schedule = parse_lr_schedule(a.at("lr_schedule").get<std::string>());
    }
    if (j.contains("phase_table"))
      for (const auto& row : j.at("phase_table")) c.phase_table.push_back(parse_phase_row(row));
    read_opt(j, "n_runs", c.n_runs);
    read_opt(j, "master_seed", c.master_seed);
    read_opt(j, "workers", c.workers);
    if (j.contains("restarts")) {
      const json& r = j.at("restarts");
      read_opt(r, "enabled", c.restarts.enabled);
      read_opt(r, "n_restarts", c.restarts.n_restarts);
      read_opt(r, "probe_phases", c.restarts.probe_phases);
    }
    read_opt(j, "near_optimal_tau", c.near_optimal_tau);
    read_opt(j, "output_dir", c.output_dir);
    read_opt(j, "record_wall_time", c.record_wall_time);
    read_opt(j, "write_traces", c.write_traces);
    read_opt(j, "write_oracle", c.write_oracle);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

inline ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config '" + path + "': " + e.what());
  }
  return parse_experiment_config(j, fs::path(path).parent_path());
}

// Seeds for run r depend only on (master seed, r).
inline std::uint64_t run_seed(std::uint64_t master, int run) { return child_seed(master, static_cast<std::uint64_t>(run)); }
inline std::uint64_t scenario_seed(std::uint64_t master, int run) { return child_seed(run_seed(master, run), 1); }
inline std::uint64_t learning_seed(std::uint64_t master, int run) { return child_seed(run_seed(master, run), 2); }

struct RunMetrics {
  int run = 0;
  Outcome outcome = Outcome::Suboptimal;
  double reward = 0.0;       // oracle value of the learned S0 joint policy
  double best_reward = 0.0;  // oracle optimum
  int phases = 0;
  double wall_ms = 0.0;
  std::vector<int> final_policy;  // S0 action per agent
  std::vector<int> best_joint_action;
  long policy_changes = 0;
  std::optional<RestartReport> restarts;
  std::string error;  // non-empty when the run failed
};

struct AggregateReport {
  int n_runs = 0;
  int optimal = 0;
  int near_optimal = 0;
  int suboptimal = 0;
  int failed = 0;
  double percent_optimal = 0.0;
  double ci_low = 0.0;  // 95% Wilson interval on the optimal fraction, in percent
  double ci_high = 0.0;
  double percent_optimal_or_near = 0.0;
  std::vector<RunMetrics> runs;
};

struct RunArtifacts {
  RunMetrics metrics;
  OracleResult oracle;
  std::vector<PhaseRecord> records;
};

inline json scenario_to_json(const Scenario& sc) {
  json j = {{"gains", sc.gains()},
            {"pn_dbm", sc.pn_dbm()},
            {"pn_power_converged", sc.pn_power_converged()},
            {"epsilon", sc.env().epsilon},
            {"reward_mode", to_string(sc.env().reward_mode)},
            {"interference_reference", to_string(sc.env().interference_reference)}};
  std::vector<int> nearest;
  for (int k = 0; k < sc.n_cr(); ++k) nearest.push_back(sc.nearest_pn_link(k));
  j["nearest_pn_link"] = nearest;
  if (sc.placement()) j["placement"] = *sc.placement();
  return j;
}

inline json phase_record_to_json(const PhaseRecord& r) {
  return {{"phase", r.phase},
          {"agent", r.agent},
          {"alpha", r.alpha},
          {"mean_reward", r.mean_reward},
          {"policy_before", r.policy_before},
          {"policy", r.policy_after},
          {"q_s0", r.q_s0},
          {"q_s1", r.q_s1},
          {"delta", r.delta},
          {"candidates_s0", r.candidates.actions[0]},
          {"candidates_s1", r.candidates.actions[1]},
          {"policy_changed_s0", r.policy_changed_s0}};
}

inline RunArtifacts run_single(const ExperimentConfig& cfg, int run, const TraceOptions& trace = {}) {
  const auto t0 = std::chrono::steady_clock::now();
  RunArtifacts out;
  RunMetrics& m = out.metrics;
  m.run = run;
  const AgentHyperparams hp = cfg.effective_hyperparams();
  m.phases = hp.n_phases;
  const Scenario sc = sample_scenario(cfg.scenario, scenario_seed(cfg.master_seed, run));
  out.oracle = exhaustive_search(sc, sc.env().reward_mode, cfg.near_optimal_tau);
  RestartReport rr;
  TraceOptions tr = trace;
  tr.phase_records = tr.phase_records && cfg.write_traces;
  MultiAgentRun learners = run_with_restarts(sc, cfg.learner, hp, cfg.restarts, learning_seed(cfg.master_seed, run),
                                             cfg.restarts.enabled ? &rr : nullptr, tr);
  if (cfg.restarts.enabled) m.restarts = rr;
  m.final_policy = learners.policy_actions(EnvState::S0);
  m.best_joint_action = out.oracle.best_joint_action;
  m.best_reward = out.oracle.best_reward;
  m.reward = out.oracle.reward_of(m.final_policy);
  m.outcome = score_policy(m.final_policy, out.oracle);
  m.policy_changes = learners.policy_changes_s0();
  out.records = learners.records();
  m.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

inline AggregateReport aggregate(std::vector<RunMetrics> runs) {
  std::sort(runs.begin(), runs.end(), [](const RunMetrics& a, const RunMetrics& b) { return a.run < b.run; });
  AggregateReport rep;
  rep.n_runs = static_cast<int>(runs.size());
  for (const auto& r : runs) {
    if (!r.error.empty()) {
      ++rep.failed;
      continue;
    }
    switch (r.outcome) {
      case Outcome::Optimal: ++rep.optimal; break;
      case Outcome::NearOptimal: ++rep.near_optimal; break;
      case Outcome::Suboptimal: ++rep.suboptimal; break;
    }
  }
  if (rep.n_runs > 0) {
    rep.percent_optimal = 100.0 * rep.optimal / rep.n_runs;
    rep.percent_optimal_or_near = 100.0 * (rep.optimal + rep.near_optimal) / rep.n_runs;
    const auto [lo, hi] = wilson_interval(rep.optimal, rep.n_runs);
    rep.ci_low = 100.0 * lo;
    rep.ci_high = 100.0 * hi;
  }
  rep.runs = std::move(runs);
  return rep;
}

inline std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string summary_csv(const AggregateReport& rep, bool with_wall_time) {
  std::ostringstream os;
  os << "run,outcome,reward,phases,wall_ms\n";
  for (const auto& r : rep.runs) {
    os << r.run << ',' << (r.error.empty() ? to_string(r.outcome) : "failed") << ',' << format_double(r.reward) << ','
       << r.phases << ',' << (with_wall_time ? static_cast<long long>(std::llround(r.wall_ms)) : 0LL) << '\n';
  }
  return os.str();
}

inline json report_to_json(const AggregateReport& rep) {
  json runs = json::array();
  for (const auto& r : rep.runs) {
    json jr = {{"run", r.run},
               {"outcome", r.error.empty() ? to_string(r.outcome) : "failed"},
               {"reward", r.reward},
               {"best_reward", r.best_reward},
               {"final_policy", r.final_policy},
               {"best_joint_action", r.best_joint_action},
               {"policy_changes", r.policy_changes}};
    if (r.restarts) jr["restart_probe_rewards"] = r.restarts->probe_rewards, jr["restart_selected"] = r.restarts->selected;
    if (!r.error.empty()) jr["error"] = r.error;
    runs.push_back(std::move(jr));
  }
  return {{"n_runs", rep.n_runs},
          {"optimal", rep.optimal},
          {"near_optimal", rep.near_optimal},
          {"suboptimal", rep.suboptimal},
          {"failed", rep.failed},
          {"percent_optimal", rep.percent_optimal},
          {"percent_optimal_ci95", {rep.ci_low, rep.ci_high}},
          {"percent_optimal_or_near", rep.percent_optimal_or_near},
          {"runs", runs}};
}

inline void write_text(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write '" + path.string() + "'");
  out << text;
}

inline std::string run_file_stem(int run) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "run_%04d", run);
  return buf;
}

// Runs every Monte Carlo run on a worker pool, writes summary.csv,
// timing.csv, report.json and, when enabled, per-run traces/ and oracle/
// files under cfg.output_dir (skipped when output_dir is empty).
inline AggregateReport run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  const fs::path out_dir = cfg.output_dir;
  const bool write = !cfg.output_dir.empty();
  std::vector<RunMetrics> metrics(cfg.n_runs);
  std::atomic<int> next{0};
  std::mutex io_mutex;

  auto worker = [&] {
    for (int r = next++; r < cfg.n_runs; r = next++) {
      try {
        RunArtifacts art = run_single(cfg, r);
        if (write) {
          if (cfg.write_oracle) {
            json j = {{"run", r}, {"scenario_seed", scenario_seed(cfg.master_seed, r)}, {"oracle", art.oracle}};
            // Scenario is re-sampled here; it is a pure function of the seed.
            j["scenario"] = scenario_to_json(sample_scenario(cfg.scenario, scenario_seed(cfg.master_seed, r)));
            write_text(out_dir / "oracle" / (run_file_stem(r) + ".json"), j.dump(1) + "\n");
          }
          if (cfg.write_traces) {
            std::string lines;
            for (const auto& rec : art.records) lines += phase_record_to_json(rec).dump() + "\n";
            write_text(out_dir / "traces" / (run_file_stem(r) + ".jsonl"), lines);
          }
        }
        metrics[r] = std::move(art.metrics);
      } catch (const std::exception& e) {
        std::lock_guard lock(io_mutex);
        metrics[r].run = r;
        metrics[r].phases = cfg.effective_hyperparams().n_phases;
        metrics[r].error = e.what();
      }
    }
  };

  const int n_workers = std::min(cfg.workers, cfg.n_runs);
  std::vector<std::thread> pool;
  for (int w = 1; w < n_workers; ++w) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  AggregateReport rep = aggregate(std::move(metrics));
  if (write) {
    write_text(out_dir / "summary.csv", summary_csv(rep, cfg.record_wall_time));
    std::ostringstream timing;
    timing << "run,wall_ms\n";
    for (const auto& r : rep.runs) timing << r.run << ',' << format_double(r.wall_ms) << '\n';
    write_text(out_dir / "timing.csv", timing.str());
    write_text(out_dir / "report.json", report_to_json(rep).dump(1) + "\n");
  }
  return rep;
}

// p-vs-rho sweep -------------------------------------------------------------

struct PhaseChangeSweep {
  std::vector<int> policy;  // joint S0 policy used (the oracle optimum)
  int reference_agent = 0;
  std::vector<PhaseChangeEstimate> estimates;
  bool monotone = true;          // point estimates nondecreasing in rho
  bool monotone_within_ci = true;  // no decrease beyond overlapping CIs
};

// Agent with the smallest S0 margin under `policy` (lowest index on ties).
inline int most_constrained_agent(const Scenario& sc, std::span<const int> policy) {
  const EnvironmentView v = sc.observe(policy);
  int ref = 0;
  for (int k = 1; k < sc.n_cr(); ++k)
    if (v.agents[k].margin < v.agents[ref].margin) ref = k;
  return ref;
}

// True when some choice of the other agents' actions puts `reference` in S1
// while it plays its policy action.
inline bool can_leave_s0(const Scenario& sc, std::span<const int> policy, int reference) {
  const int n = sc.n_cr();
  const std::int64_t total = joint_action_count(n - 1, sc.n_actions());
  std::vector<int> joint(policy.begin(), policy.end());
  for (std::int64_t i = 0; i < total; ++i) {
    const auto others = decode_joint(i, n - 1, sc.n_actions());
    for (int k = 0, j = 0; k < n; ++k)
      if (k != reference) joint[k] = others[j++];
    if (sc.observe(joint).agents[reference].state == EnvState::S1) return true;
  }
  return false;
}

// Policy: the oracle optimum. Reference agent: the most constrained one.
inline PhaseChangeSweep sweep_p_vs_rho(const Scenario& sc, std::vector<double> rhos, long steps, std::uint64_t seed) {
  std::sort(rhos.begin(), rhos.end());
  const OracleResult oracle = exhaustive_search(sc, sc.env().reward_mode);
  PhaseChangeSweep sw;
  sw.policy = oracle.best_joint_action;
  sw.reference_agent = most_constrained_agent(sc, sw.policy);
  for (std::size_t i = 0; i < rhos.size(); ++i) {
    Rng rng(child_seed(seed, i));
    sw.estimates.push_back(measure_phase_change_probability(sc, sw.policy, rhos[i], steps, rng, sw.reference_agent));
  }
  for (std::size_t i = 1; i < sw.estimates.size(); ++i) {
    if (sw.estimates[i].p_hat < sw.estimates[i - 1].p_hat) sw.monotone = false;
    if (sw.estimates[i].ci_high < sw.estimates[i - 1].ci_low) sw.monotone_within_ci = false;
  }
  return sw;
}

inline std::string p_vs_rho_csv(const PhaseChangeSweep& sw) {
  std::ostringstream os;
  os << "rho,p_hat,ci_low,ci_high,steps,reward_variance,bernoulli_variance\n";
  for (const auto& e : sw.estimates)
    os << format_double(e.rho) << ',' << format_double(e.p_hat) << ',' << format_double(e.ci_low) << ','
       << format_double(e.ci_high) << ',' << e.steps << ',' << format_double(e.reward_variance) << ','
       << format_double(e.bernoulli_variance()) << '\n';
  return os.str();
}

// Q-value traces ---------------------------------------------------------------

// Columns: step, action, q_0 .. q_{|A|-1}, threshold.
inline std::string qvalue_trace_csv(const std::vector<QTraceRow>& rows, int n_actions) {
  std::ostringstream os;
  os << "step,action";
  for (int a = 0; a < n_actions; ++a) os << ",q_" << a;
  os << ",threshold\n";
  for (const auto& r : rows) {
    os << r.step << ',' << r.policy_action;
    for (double q : r.q_s0) os << ',' << format_double(q);
    os << ',' << format_double(r.threshold) << '\n';
  }
  return os.str();
}

inline std::vector<std::string> emit_qvalue_traces(const MultiAgentRun& run) {
  std::vector<std::string> out;
  for (const auto& rows : run.q_trace()) out.push_back(qvalue_trace_csv(rows, run.scenario().n_actions()));
  return out;
}

}  // namespace crdql
