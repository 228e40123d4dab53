#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "crdql/environment.hpp"
#include "crdql/errors.hpp"
#include "crdql/qfunc.hpp"
#include "crdql/random.hpp"

namespace crdql {

enum class LearnerKind { Dql, Table };

inline const char* to_string(LearnerKind k) { return k == LearnerKind::Dql ? "dql" : "table"; }
inline LearnerKind parse_learner_kind(const std::string& s) {
  if (s == "dql") return LearnerKind::Dql;
  if (s == "table") return LearnerKind::Table;
  throw ConfigError("unknown learner '" + s + "'");
}

// How the learning rate is divided by zeta.
//   PerPhase:  alpha_k = alpha0 / zeta^k for exploration phase k
//   PerUpdate: alpha divided by zeta after every learning update
//   Constant:  alpha0 throughout
enum class LrSchedule { PerPhase, PerUpdate, Constant };

inline const char* to_string(LrSchedule s) {
  switch (s) {
    case LrSchedule::PerPhase: return "per_phase";
    case LrSchedule::PerUpdate: return "per_update";
    case LrSchedule::Constant: return "constant";
  }
  return "?";
}
inline LrSchedule parse_lr_schedule(const std::string& s) {
  if (s == "per_phase") return LrSchedule::PerPhase;
  if (s == "per_update") return LrSchedule::PerUpdate;
  if (s == "constant") return LrSchedule::Constant;
  throw ConfigError("unknown lr_schedule '" + s + "'");
}

struct AgentHyperparams {
  double rho = 0.10;     // experimentation probability
  double lambda = 0.25;  // inertia
  double gamma = 0.9;    // discount
  int phase_length = 6250;
  int n_phases = 100;
  double alpha0 = 0.05;
  double zeta = 5.0;
  LrSchedule lr_schedule = LrSchedule::PerPhase;
  double alpha_min = 0.0;
  int target_period = 50;  // in gradient updates
  int minibatch = 25;
  double tolerance_multiplier = 3.0;
  int std_window = 50;
  double activation_cap = 20.0;
  double max_grad_norm = 0.0;  // 0 disables gradient clipping
  std::vector<int> hidden_layers{8, 18};

  void validate() const {
    auto open01 = [](double v) { return v > 0.0 && v < 1.0; };
    if (!(rho >= 0.0 && rho < 1.0)) throw ConfigError("rho must lie in [0, 1)");
    if (!(lambda >= 0.0 && lambda <= 1.0)) throw ConfigError("lambda must lie in [0, 1]");
    if (!open01(gamma)) throw ConfigError("gamma must lie in (0, 1)");
    if (phase_length < 1) throw ConfigError("phase_length must be at least 1");
    if (n_phases < 1) throw ConfigError("n_phases must be at least 1");
    if (!(alpha0 >= 0.0 && alpha0 <= 1.0)) throw ConfigError("alpha0 must lie in [0, 1]");
    if (!(zeta >= 1.0)) throw ConfigError("zeta must be >= 1");
    if (!(alpha_min >= 0.0)) throw ConfigError("alpha_min must be nonnegative");
    if (target_period < 1) throw ConfigError("target_period must be at least 1");
    if (minibatch < 1) throw ConfigError("minibatch must be at least 1");
    if (!(tolerance_multiplier >= 0.0)) throw ConfigError("tolerance_multiplier must be nonnegative");
    if (std_window < 2) throw ConfigError("std_window must be at least 2");
    if (!(activation_cap > 0.0)) throw ConfigError("activation_cap must be positive");
    if (!(max_grad_norm >= 0.0)) throw ConfigError("max_grad_norm must be nonnegative");
    for (int h : hidden_layers)
      if (h < 1) throw ConfigError("hidden layer sizes must be positive");
  }

  // Learning rate in force during exploration phase `phase`, after
  // `updates_in_run` prior learning updates.
  double learning_rate(int phase, long updates_in_run = 0) const {
    double a = alpha0;
    switch (lr_schedule) {
      case LrSchedule::PerPhase: a = alpha0 / std::pow(zeta, phase); break;
      case LrSchedule::PerUpdate: a = alpha0 / std::pow(zeta, static_cast<double>(updates_in_run)); break;
      case LrSchedule::Constant: break;
    }
    return std::max(a, alpha_min);
  }
};

// Experimentation draw: the policy action w.p. 1 - rho, otherwise any action
// uniformly (so the policy action has total probability 1 - rho + rho/|A|).
inline int choose_action(int policy_action, double rho, int n_actions, Rng& rng) {
  if (rho > 0.0 && uniform01(rng) < rho) return uniform_index(rng, n_actions);
  return policy_action;
}

// Fixed-capacity ring buffer of recent values with population std.
class MovingWindow {
 public:
  explicit MovingWindow(int capacity = 50) : buf_(capacity) {}

  void push(double v) {
    buf_[head_] = v;
    head_ = (head_ + 1) % buf_.size();
    size_ = std::min(size_ + 1, buf_.size());
  }
  std::size_t size() const { return size_; }
  bool empty() const { return size_ == 0; }
  double stddev() const {
    if (size_ < 2) return 0.0;
    double mean = 0.0;
    for (std::size_t i = 0; i < size_; ++i) mean += buf_[i];
    mean /= static_cast<double>(size_);
    double ss = 0.0;
    for (std::size_t i = 0; i < size_; ++i) ss += (buf_[i] - mean) * (buf_[i] - mean);
    return std::sqrt(ss / static_cast<double>(size_));
  }

 private:
  std::vector<double> buf_;
  std::size_t head_ = 0;
  std::size_t size_ = 0;
};

using Policy = std::array<int, kNumStates>;  // action per environment state

struct CandidateSet {
  std::array<std::vector<int>, kNumStates> actions;
};

// Actions whose Q-value is within delta of the per-state maximum. A zero
// tolerance gives the argmax alone (lowest index on ties).
inline std::vector<int> candidate_actions(std::span<const double> q, double delta) {
  if (delta <= 0.0) return {argmax(q)};
  const double threshold = max_value(q) - delta;
  std::vector<int> out;
  for (int a = 0; a < static_cast<int>(q.size()); ++a)
    if (q[a] >= threshold) out.push_back(a);
  return out;
}

// One learning radio. Holds either a Q-table or an MLP with its target array.
class Agent {
 public:
  Agent(LearnerKind kind, const AgentHyperparams& hp, int n_actions, std::uint64_t seed)
      : kind_(kind), hp_(hp), n_actions_(n_actions), rng_(seed), table_(n_actions) {
    hp_.validate();
    for (int i = 0; i < kNumStates * n_actions; ++i) windows_.emplace_back(hp_.std_window);
    if (kind_ == LearnerKind::Dql) {
      std::vector<int> sizes{kNumStates};
      sizes.insert(sizes.end(), hp_.hidden_layers.begin(), hp_.hidden_layers.end());
      sizes.push_back(n_actions);
      mlp_ = MlpParams::uniform(sizes, hp_.activation_cap, rng_);
      target_ = make_target(mlp_, hp_.target_period);
      refresh_q_cache();
    }
    // Arbitrary initial policy.
    for (int s = 0; s < kNumStates; ++s) policy_[s] = uniform_index(rng_, n_actions_);
  }

  LearnerKind kind() const { return kind_; }
  const AgentHyperparams& hyperparams() const { return hp_; }
  int n_actions() const { return n_actions_; }
  const Policy& policy() const { return policy_; }
  void set_policy(const Policy& p) { policy_ = p; }
  EnvState state() const { return state_; }
  void set_state(EnvState s) { state_ = s; }
  long updates() const { return updates_; }
  const MlpParams& mlp() const { return mlp_; }
  const TargetArray& target() const { return target_; }
  const QTable& table() const { return table_; }
  Rng& rng() { return rng_; }
  bool tolerance_window_empty() const {
    return std::all_of(windows_.begin(), windows_.end(), [](const MovingWindow& w) { return w.empty(); });
  }

  std::span<const double> q_values(EnvState s) const {
    return kind_ == LearnerKind::Table ? table_.row(s) : q_cache_.row(s);
  }

  int act() { return choose_action(policy_[state_index(state_)], hp_.rho, n_actions_, rng_); }

  // Feeds one transition. The table learner updates immediately; the DQL
  // learner collects `minibatch` consecutive transitions and then takes one
  // gradient step. Returns true when a learning update happened.
  bool learn(const Transition& t, double alpha) {
    if (kind_ == LearnerKind::Table) {
      table_update(table_, t, alpha, hp_.gamma);
      ++updates_;
      push_windows();
      return true;
    }
    batch_.push_back(t);
    if (static_cast<int>(batch_.size()) < hp_.minibatch) return false;
    last_loss_ = train_minibatch(mlp_, batch_, target_, alpha, hp_.gamma, hp_.max_grad_norm).loss;
    batch_.clear();
    ++updates_;
    if (updates_ % target_.refresh_period == 0) refresh_target(target_, mlp_, updates_);
    refresh_q_cache();
    push_windows();
    return true;
  }

  // Tolerance: multiplier times the largest moving std among the Q-value
  // windows (every state and action).
  double tolerance() const {
    double worst = 0.0;
    for (const auto& w : windows_) worst = std::max(worst, w.stddev());
    return hp_.tolerance_multiplier * worst;
  }

  CandidateSet candidates(double delta) const {
    CandidateSet c;
    for (EnvState s : {EnvState::S0, EnvState::S1}) c.actions[state_index(s)] = candidate_actions(q_values(s), delta);
    return c;
  }

  // Best reply with inertia: keep the policy w.p. lambda, otherwise draw
  // uniformly among candidate policies (independently per state).
  struct PolicyUpdate {
    double delta = 0.0;
    CandidateSet candidates;
    Policy before{};
    Policy after{};
    bool kept_by_inertia = false;
    bool empty_window = false;
  };

  PolicyUpdate update_policy() {
    PolicyUpdate u;
    u.empty_window = tolerance_window_empty();
    u.delta = u.empty_window ? 0.0 : tolerance();
    u.candidates = candidates(u.delta);
    u.before = policy_;
    if (uniform01(rng_) < hp_.lambda) {
      u.kept_by_inertia = true;
    } else {
      for (int s = 0; s < kNumStates; ++s) {
        const auto& set = u.candidates.actions[s];
        policy_[s] = set[uniform_index(rng_, static_cast<int>(set.size()))];
      }
    }
    u.after = policy_;
    return u;
  }

  double last_loss() const { return last_loss_; }

 private:
  void refresh_q_cache() {
    QTable q(n_actions_);
    for (EnvState s : {EnvState::S0, EnvState::S1}) {
      const auto row = forward(mlp_, s);
      std::copy(row.begin(), row.end(), q.row(s).begin());
    }
    q_cache_ = std::move(q);
  }

  void push_windows() {
    for (EnvState s : {EnvState::S0, EnvState::S1}) {
      const auto q = q_values(s);
      for (int a = 0; a < n_actions_; ++a) windows_[state_index(s) * n_actions_ + a].push(q[a]);
    }
  }

  LearnerKind kind_;
  AgentHyperparams hp_;
  int n_actions_;
  Rng rng_;
  Policy policy_{};
  EnvState state_ = EnvState::S0;
  QTable table_;
  MlpParams mlp_;
  TargetArray target_;
  QTable q_cache_;
  std::vector<Transition> batch_;
  std::vector<MovingWindow> windows_;
  long updates_ = 0;
  double last_loss_ = 0.0;
};

// Per-agent summary of one exploration phase and the policy update after it.
struct PhaseRecord {
  int phase = 0;
  int agent = 0;
  double alpha = 0.0;
  double mean_reward = 0.0;
  Policy policy_before{};
  Policy policy_after{};
  std::vector<double> q_s0;
  std::vector<double> q_s1;
  double delta = 0.0;
  CandidateSet candidates;
  bool policy_changed_s0 = false;
  bool empty_window = false;
};

// One row per learning update, for Q-value evolution plots.
struct QTraceRow {
  long step = 0;        // environment step at which the update happened
  int policy_action = 0;  // current S0 policy action
  std::vector<double> q_s0;
  double threshold = 0.0;  // max(Q_S0) - delta
};

struct StepRecord {
  long step = 0;
  std::vector<int> joint_action;
  std::vector<EnvState> states;
  std::vector<double> rewards;
  std::vector<double> abs_throughput_change;
};

struct TraceOptions {
  bool phase_records = true;
  bool q_trace = false;
  int q_trace_stride = 1;  // keep every n-th learning update
  std::function<void(const StepRecord&)> on_step;
};

// All agents of one run, stepped in lockstep against one scenario.
class MultiAgentRun {
 public:
  MultiAgentRun(const Scenario& scenario, LearnerKind kind, const AgentHyperparams& hp, std::uint64_t seed)
      : scenario_(&scenario), hp_(hp) {
    hp_.validate();
    for (int k = 0; k < scenario.n_cr(); ++k)
      agents_.emplace_back(kind, hp_, scenario.n_actions(), child_seed(seed, static_cast<std::uint64_t>(k)));
    q_trace_.resize(agents_.size());
  }

  const Scenario& scenario() const { return *scenario_; }
  const AgentHyperparams& hyperparams() const { return hp_; }
  std::vector<Agent>& agents() { return agents_; }
  const std::vector<Agent>& agents() const { return agents_; }
  int phase() const { return phase_; }
  long step() const { return step_; }
  const std::vector<PhaseRecord>& records() const { return records_; }
  const std::vector<std::vector<QTraceRow>>& q_trace() const { return q_trace_; }
  TraceOptions& trace_options() { return trace_; }
  const std::vector<double>& last_phase_mean_rewards() const { return last_mean_rewards_; }

  std::vector<int> policy_actions(EnvState s = EnvState::S0) const {
    std::vector<int> out;
    for (const auto& a : agents_) out.push_back(a.policy()[state_index(s)]);
    return out;
  }

  // L_E joint steps with frozen policies. Returns each agent's mean reward.
  std::vector<double> run_exploration_phase() {
    const Scenario& sc = *scenario_;
    const int n = static_cast<int>(agents_.size());
    std::vector<int> joint(n);
    std::vector<double> reward_sum(n, 0.0);
    for (int t = 0; t < hp_.phase_length; ++t) {
      for (int k = 0; k < n; ++k) joint[k] = agents_[k].act();
      const EnvironmentView view = sc.observe(joint);
      StepRecord rec;
      for (int k = 0; k < n; ++k) {
        Agent& agent = agents_[k];
        const double r = reward(view, k, sc.env().reward_mode);
        reward_sum[k] += r;
        const Transition tr{agent.state(), view.agents[k].state, joint[k], r};
        const double alpha = hp_.learning_rate(phase_, agent.updates());
        if (agent.learn(tr, alpha)) maybe_trace_q(k);
        agent.set_state(view.agents[k].state);
        if (trace_.on_step) {
          rec.rewards.push_back(r);
          rec.states.push_back(view.agents[k].state);
          rec.abs_throughput_change.push_back(view.agents[k].abs_throughput_change);
        }
      }
      if (trace_.on_step) {
        rec.step = step_;
        rec.joint_action = joint;
        trace_.on_step(rec);
      }
      ++step_;
    }
    last_mean_rewards_.assign(n, 0.0);
    for (int k = 0; k < n; ++k) last_mean_rewards_[k] = reward_sum[k] / hp_.phase_length;
    return last_mean_rewards_;
  }

  void update_policies() {
    for (int k = 0; k < static_cast<int>(agents_.size()); ++k) {
      Agent& agent = agents_[k];
      const auto q0 = agent.q_values(EnvState::S0);
      const auto q1 = agent.q_values(EnvState::S1);
      std::vector<double> q_s0(q0.begin(), q0.end()), q_s1(q1.begin(), q1.end());
      const auto u = agent.update_policy();
      if (u.after[0] != u.before[0]) ++policy_changes_s0_;
      if (trace_.phase_records) {
        PhaseRecord r;
        r.phase = phase_;
        r.agent = k;
        r.alpha = hp_.learning_rate(phase_, agent.updates());
        r.mean_reward = last_mean_rewards_.empty() ? 0.0 : last_mean_rewards_[k];
        r.policy_before = u.before;
        r.policy_after = u.after;
        r.q_s0 = std::move(q_s0);
        r.q_s1 = std::move(q_s1);
        r.delta = u.delta;
        r.candidates = u.candidates;
        r.policy_changed_s0 = u.after[0] != u.before[0];
        r.empty_window = u.empty_window;
        records_.push_back(std::move(r));
      }
    }
    ++phase_;
  }

  void run_phase() {
    run_exploration_phase();
    update_policies();
  }

  void run_phases(int count) {
    for (int i = 0; i < count; ++i) run_phase();
  }

  // Number of S0 policy changes (summed over agents) so far.
  long policy_changes_s0() const { return policy_changes_s0_; }

 private:
  void maybe_trace_q(int k) {
    if (!trace_.q_trace) return;
    const Agent& a = agents_[k];
    if (a.updates() % std::max(1, trace_.q_trace_stride) != 0) return;
    const auto q = a.q_values(EnvState::S0);
    QTraceRow row;
    row.step = step_;
    row.policy_action = a.policy()[0];
    row.q_s0.assign(q.begin(), q.end());
    row.threshold = max_value(q) - a.tolerance();
    q_trace_[k].push_back(std::move(row));
  }

  const Scenario* scenario_;
  AgentHyperparams hp_;
  std::vector<Agent> agents_;
  int phase_ = 0;
  long step_ = 0;
  long policy_changes_s0_ = 0;
  std::vector<double> last_mean_rewards_;
  std::vector<PhaseRecord> records_;
  std::vector<std::vector<QTraceRow>> q_trace_;
  TraceOptions trace_;
};

struct RestartOptions {
  bool enabled = false;
  int n_restarts = 4;
  int probe_phases = 10;
};

struct RestartReport {
  std::vector<double> probe_rewards;  // mean over agents of final-phase mean reward
  int selected = 0;
  long probe_steps = 0;  // environment steps spent in discarded probes
};

inline std::uint64_t probe_seed(std::uint64_t seed, int probe) {
  return probe == 0 ? seed : child_seed(seed, 0x5eed0000ULL + static_cast<std::uint64_t>(probe));
}

// Selected probe: largest final-phase reward, lowest index on ties.
inline int select_probe(std::span<const double> probe_rewards) { return argmax(probe_rewards); }

// Trains for hp.n_phases exploration phases. With restarts enabled, first runs
// n_restarts short probes of probe_phases phases from fresh initializations,
// keeps the one with the largest final-phase reward and continues it to the
// full phase count.
inline MultiAgentRun run_with_restarts(const Scenario& scenario, LearnerKind kind, const AgentHyperparams& hp,
                                       const RestartOptions& restarts, std::uint64_t seed,
                                       RestartReport* report = nullptr, const TraceOptions& trace = {}) {
  if (!restarts.enabled || restarts.n_restarts <= 1) {
    MultiAgentRun run(scenario, kind, hp, probe_seed(seed, 0));
    run.trace_options() = trace;
    if (restarts.enabled && report) {
      const int probe = std::min(restarts.probe_phases, hp.n_phases);
      run.run_phases(probe);
      const auto& r = run.last_phase_mean_rewards();
      double m = 0.0;
      for (double v : r) m += v;
      report->probe_rewards = {r.empty() ? 0.0 : m / r.size()};
      report->selected = 0;
      run.run_phases(hp.n_phases - probe);
      return run;
    }
    run.run_phases(hp.n_phases);
    return run;
  }
  if (restarts.probe_phases < 1) throw ConfigError("probe_phases must be at least 1");
  const int probe_len = std::min(restarts.probe_phases, hp.n_phases);
  std::vector<MultiAgentRun> probes;
  std::vector<double> rewards;
  for (int j = 0; j < restarts.n_restarts; ++j) {
    MultiAgentRun run(scenario, kind, hp, probe_seed(seed, j));
    run.trace_options() = trace;
    run.run_phases(probe_len);
    const auto& r = run.last_phase_mean_rewards();
    double m = 0.0;
    for (double v : r) m += v;
    rewards.push_back(m / static_cast<double>(r.size()));
    probes.push_back(std::move(run));
  }
  const int best = select_probe(rewards);
  if (report) {
    report->probe_rewards = rewards;
    report->selected = best;
    report->probe_steps = static_cast<long>(restarts.n_restarts - 1) * probe_len * hp.phase_length;
  }
  MultiAgentRun run = std::move(probes[best]);
  run.run_phases(hp.n_phases - probe_len);
  return run;
}

}  // namespace crdql
