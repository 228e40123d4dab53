// Command-line driver: simulate, oracle, p-vs-rho and traces.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "crdql/crdql.hpp"

namespace fs = std::filesystem;
using namespace crdql;

namespace {

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> runs;
  std::optional<int> workers;
  std::optional<std::string> out;
  std::optional<std::string> learner;
  std::optional<int> phases;
  std::optional<int> phase_length;
  std::optional<bool> restarts;
  std::optional<bool> wall_time;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config, "experiment config (JSON)")->check(CLI::ExistingFile);
  cmd->add_option("--seed", f.seed, "master seed");
  cmd->add_option("--runs", f.runs, "number of Monte Carlo runs");
  cmd->add_option("--workers", f.workers, "worker threads");
  cmd->add_option("--out", f.out, "output directory");
  cmd->add_option("--learner", f.learner, "dql or table");
  cmd->add_option("--phases", f.phases, "exploration phases per run");
  cmd->add_option("--phase-length", f.phase_length, "steps per exploration phase (L_E)");
  cmd->add_flag("--restarts,!--no-restarts", f.restarts, "enable the restart add-on");
  cmd->add_flag("--wall-time,!--no-wall-time", f.wall_time, "write measured wall_ms into summary.csv");
}

ExperimentConfig resolve(const CommonFlags& f) {
  ExperimentConfig c = f.config.empty() ? parse_experiment_config(json::object()) : load_experiment_config(f.config);
  if (f.seed) c.master_seed = *f.seed;
  if (f.runs) c.n_runs = *f.runs;
  if (f.workers) c.workers = *f.workers;
  if (f.out) c.output_dir = *f.out;
  if (f.learner) c.learner = parse_learner_kind(*f.learner);
  if (f.phases) c.agent.n_phases = *f.phases;
  if (f.phase_length) c.agent.phase_length = *f.phase_length;
  if (f.restarts) c.restarts.enabled = *f.restarts;
  if (f.wall_time) c.record_wall_time = *f.wall_time;
  c.validate();
  return c;
}

int cmd_simulate(const CommonFlags& f) {
  const ExperimentConfig cfg = resolve(f);
  const AggregateReport rep = run_experiment(cfg);
  std::printf("runs=%d optimal=%d near_optimal=%d suboptimal=%d failed=%d percent_optimal=%.1f "
              "ci95=[%.1f, %.1f] percent_optimal_or_near=%.1f\n",
              rep.n_runs, rep.optimal, rep.near_optimal, rep.suboptimal, rep.failed, rep.percent_optimal, rep.ci_low,
              rep.ci_high, rep.percent_optimal_or_near);
  std::printf("wrote %s\n", (fs::path(cfg.output_dir) / "summary.csv").string().c_str());
  return 0;
}

int cmd_oracle(const CommonFlags& f) {
  const ExperimentConfig cfg = resolve(f);
  const fs::path dir = fs::path(cfg.output_dir) / "oracle";
  for (int r = 0; r < cfg.n_runs; ++r) {
    const Scenario sc = sample_scenario(cfg.scenario, scenario_seed(cfg.master_seed, r));
    const OracleResult o = exhaustive_search(sc, sc.env().reward_mode, cfg.near_optimal_tau);
    json j = {{"run", r}, {"scenario_seed", scenario_seed(cfg.master_seed, r)}, {"oracle", o}};
    j["scenario"] = scenario_to_json(sc);
    write_text(dir / (run_file_stem(r) + ".json"), j.dump(1) + "\n");
    std::printf("run %d best=[", r);
    for (std::size_t k = 0; k < o.best_joint_action.size(); ++k)
      std::printf("%s%d", k ? "," : "", o.best_joint_action[k]);
    std::printf("] reward=%.6g near_optimal=%zu\n", o.best_reward, o.near_optimal.size());
  }
  return 0;
}

int cmd_p_vs_rho(const CommonFlags& f, const std::vector<double>& rhos, long steps) {
  const ExperimentConfig cfg = resolve(f);
  const fs::path dir = fs::path(cfg.output_dir) / "p_vs_rho";
  int monotone = 0;
  for (int r = 0; r < cfg.n_runs; ++r) {
    const Scenario sc = sample_scenario(cfg.scenario, scenario_seed(cfg.master_seed, r));
    const PhaseChangeSweep sw = sweep_p_vs_rho(sc, rhos, steps, learning_seed(cfg.master_seed, r));
    write_text(dir / (run_file_stem(r) + ".csv"), p_vs_rho_csv(sw));
    monotone += sw.monotone;
    std::printf("run %d reference_agent=%d monotone=%s monotone_within_ci=%s p_hat=", r, sw.reference_agent,
                sw.monotone ? "yes" : "no", sw.monotone_within_ci ? "yes" : "no");
    for (const auto& e : sw.estimates) std::printf(" %.4f", e.p_hat);
    std::printf("\n");
  }
  std::printf("monotone in %d of %d scenarios\n", monotone, cfg.n_runs);
  return 0;
}

int cmd_traces(const CommonFlags& f, int run, int stride) {
  const ExperimentConfig cfg = resolve(f);
  const Scenario sc = sample_scenario(cfg.scenario, scenario_seed(cfg.master_seed, run));
  TraceOptions trace;
  trace.q_trace = true;
  trace.q_trace_stride = stride;
  RestartReport rr;
  const MultiAgentRun learned = run_with_restarts(sc, cfg.learner, cfg.effective_hyperparams(), cfg.restarts,
                                                  learning_seed(cfg.master_seed, run), &rr, trace);
  const fs::path dir = fs::path(cfg.output_dir) / "traces";
  const auto csvs = emit_qvalue_traces(learned);
  for (std::size_t k = 0; k < csvs.size(); ++k)
    write_text(dir / (run_file_stem(run) + "_agent" + std::to_string(k) + "_q.csv"), csvs[k]);
  std::string lines;
  for (const auto& rec : learned.records()) lines += phase_record_to_json(rec).dump() + "\n";
  write_text(dir / (run_file_stem(run) + ".jsonl"), lines);
  std::printf("run %d policy_changes_s0=%ld final_policy=[", run, learned.policy_changes_s0());
  const auto pol = learned.policy_actions();
  for (std::size_t k = 0; k < pol.size(); ++k) std::printf("%s%d", k ? "," : "", pol[k]);
  std::printf("]\n");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Uncoordinated multi-agent power allocation simulator"};
  app.require_subcommand(1);

  CommonFlags sim_flags, oracle_flags, rho_flags, trace_flags;
  auto* sim = app.add_subcommand("simulate", "run a Monte Carlo sweep");
  add_common(sim, sim_flags);

  auto* orc = app.add_subcommand("oracle", "exhaustive search on each sampled scenario");
  add_common(orc, oracle_flags);

  auto* rho = app.add_subcommand("p-vs-rho", "phase-change probability versus experimentation probability");
  add_common(rho, rho_flags);
  std::vector<double> rhos{0.0, 0.05, 0.1, 0.2, 0.4};
  long steps = 100000;
  rho->add_option("--rho", rhos, "experimentation probabilities")->delimiter(',');
  rho->add_option("--steps", steps, "steps per estimate")->check(CLI::PositiveNumber);

  auto* trc = app.add_subcommand("traces", "Q-value traces for one run");
  add_common(trc, trace_flags);
  int trace_run = 0;
  int stride = 1;
  trc->add_option("--run", trace_run, "run index")->check(CLI::NonNegativeNumber);
  trc->add_option("--stride", stride, "keep every n-th learning update")->check(CLI::PositiveNumber);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*sim) return cmd_simulate(sim_flags);
    if (*orc) return cmd_oracle(oracle_flags);
    if (*rho) return cmd_p_vs_rho(rho_flags, rhos, steps);
    if (*trc) return cmd_traces(trace_flags, trace_run, stride);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
