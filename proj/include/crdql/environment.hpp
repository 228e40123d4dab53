#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "crdql/channel.hpp"
#include "crdql/errors.hpp"
#include "crdql/link_adaptation.hpp"
#include "crdql/random.hpp"
#include "crdql/topology.hpp"

namespace crdql {

enum class EnvState : std::uint8_t { S0 = 0, S1 = 1 };
inline constexpr int kNumStates = 2;

inline int state_index(EnvState s) { return static_cast<int>(s); }
inline const char* state_name(EnvState s) { return s == EnvState::S0 ? "S0" : "S1"; }

enum class RewardMode { Local, Global };

// What the SN interference in the throughput-change model is measured against.
//   Noise:        interference-to-noise ratio (I / sigma^2)
//   NoisePlusPn:  interference relative to sigma^2 plus PN co-channel
//                 interference at the affected PN receiver
enum class InterferenceReference { Noise, NoisePlusPn };

// Index 0 is "off"; indices 1..levels are min_dbm + (i-1)*step_db.
struct ActionSpace {
  double min_dbm = -10.0;
  double step_db = 2.5;
  int levels = 13;

  int size() const { return levels + 1; }
  std::optional<double> power_dbm(int action) const {
    if (action < 0 || action >= size()) throw ArgumentError("action index out of range");
    if (action == 0) return std::nullopt;
    return min_dbm + (action - 1) * step_db;
  }
  double power_mw(int action) const {
    const auto p = power_dbm(action);
    return p ? dbm_to_mw(*p) : 0.0;
  }
  void validate() const {
    if (levels < 1) throw ConfigError("action space needs at least one power level");
    if (!(step_db > 0.0)) throw ConfigError("action power step must be positive");
  }
};

struct EnvConfig {
  double epsilon = 0.05;
  RewardMode reward_mode = RewardMode::Global;
  InterferenceReference interference_reference = InterferenceReference::NoisePlusPn;
  double pn_target_sinr_db = 10.0;
  int pn_max_iters = 500;
  int n_cr = 2;

  void validate() const {
    if (!(epsilon > 0.0 && epsilon < 1.0)) throw ConfigError("epsilon must lie in (0, 1)");
    if (n_cr < 1) throw ConfigError("n_cr must be at least 1");
    if (pn_max_iters < 1) throw ConfigError("pn_max_iters must be at least 1");
  }
};

inline const char* to_string(RewardMode m) { return m == RewardMode::Local ? "local" : "global"; }
inline RewardMode parse_reward_mode(const std::string& s) {
  if (s == "local") return RewardMode::Local;
  if (s == "global") return RewardMode::Global;
  throw ConfigError("unknown reward_mode '" + s + "'");
}
inline const char* to_string(InterferenceReference r) {
  return r == InterferenceReference::Noise ? "noise" : "noise_plus_pn";
}
inline InterferenceReference parse_interference_reference(const std::string& s) {
  if (s == "noise") return InterferenceReference::Noise;
  if (s == "noise_plus_pn") return InterferenceReference::NoisePlusPn;
  throw ConfigError("unknown interference_reference '" + s + "'");
}

struct PowerControlResult {
  std::vector<double> pn_dbm;
  bool converged = false;
  int iterations = 0;
};

// Distributed target-SINR power control with the CRs silent:
// P_i <- clip(P_i * target / sinr_i, [-20, 40] dBm) until the largest change
// drops below 0.01 dB.
inline PowerControlResult pn_power_control(const ChannelGains& gains, double target_sinr_db, int max_iters,
                                           double start_dbm = kPnMinDbm) {
  const int m = gains.n_pn();
  PowerVector p{std::vector<double>(m, start_dbm), std::vector<std::optional<double>>(gains.n_cr())};
  const double target = db_to_linear(target_sinr_db);
  PowerControlResult out;
  for (int it = 1; it <= max_iters; ++it) {
    double max_change_db = 0.0;
    std::vector<double> next(m);
    for (int i = 0; i < m; ++i) {
      const double sinr = pn_sinr(i, gains, p);
      const double proposed = p.pn_dbm[i] + linear_to_db(target / sinr);
      next[i] = std::clamp(proposed, kPnMinDbm, kPnMaxDbm);
      max_change_db = std::max(max_change_db, std::fabs(next[i] - p.pn_dbm[i]));
    }
    p.pn_dbm = std::move(next);
    out.iterations = it;
    if (max_change_db < 0.01) {
      out.converged = true;
      break;
    }
  }
  out.pn_dbm = std::move(p.pn_dbm);
  return out;
}

// Everything one agent perceives after a joint action.
struct AgentView {
  EnvState state = EnvState::S0;
  int nearest_pn_link = 0;
  double abs_throughput_change = 0.0;  // |T%| at the nearest PN link
  double margin = 0.0;                 // epsilon - |T%|
  double sn_sinr = 0.0;
  double sn_throughput_mbps = 0.0;
};

struct EnvironmentView {
  std::vector<AgentView> agents;

  double total_throughput_mbps() const {
    double s = 0.0;
    for (const auto& a : agents) s += a.sn_throughput_mbps;
    return s;
  }
  bool all_s0() const {
    return std::all_of(agents.begin(), agents.end(), [](const AgentView& a) { return a.state == EnvState::S0; });
  }
};

// Immutable sampled (or hand-built) network instance. PN powers are fixed at
// construction; the view of a joint action is a pure function of the scenario.
class Scenario {
 public:
  Scenario(ChannelGains gains, std::vector<double> pn_dbm, AmcTable amc, EnvConfig env, ActionSpace actions = {},
           std::optional<NodePlacement> placement = std::nullopt, bool pn_power_converged = true)
      : gains_(std::move(gains)),
        pn_dbm_(std::move(pn_dbm)),
        amc_(std::move(amc)),
        env_(env),
        actions_(actions),
        placement_(std::move(placement)),
        pn_power_converged_(pn_power_converged) {
    gains_.validate();
    amc_.validate();
    env_.validate();
    actions_.validate();
    if (static_cast<int>(pn_dbm_.size()) != gains_.n_pn()) throw ArgumentError("PN power vector size mismatch");
    if (env_.n_cr != gains_.n_cr()) throw ArgumentError("EnvConfig.n_cr does not match channel gains");
    for (double p : pn_dbm_)
      if (!(p >= kPnMinDbm && p <= kPnMaxDbm)) throw ArgumentError("PN power outside [-20, 40] dBm");
    precompute();
  }

  // Runs PN power control on the gains and freezes the result.
  static Scenario with_power_control(ChannelGains gains, AmcTable amc, EnvConfig env, ActionSpace actions = {},
                                     std::optional<NodePlacement> placement = std::nullopt) {
    env.validate();
    auto pc = pn_power_control(gains, env.pn_target_sinr_db, env.pn_max_iters);
    return Scenario(std::move(gains), std::move(pc.pn_dbm), std::move(amc), env, actions, std::move(placement),
                    pc.converged);
  }

  const ChannelGains& gains() const { return gains_; }
  const std::vector<double>& pn_dbm() const { return pn_dbm_; }
  const AmcTable& amc() const { return amc_; }
  const EnvConfig& env() const { return env_; }
  const ActionSpace& actions() const { return actions_; }
  const std::optional<NodePlacement>& placement() const { return placement_; }
  bool pn_power_converged() const { return pn_power_converged_; }
  int n_cr() const { return gains_.n_cr(); }
  int n_pn() const { return gains_.n_pn(); }
  int n_actions() const { return actions_.size(); }
  int nearest_pn_link(int agent) const { return nearest_.at(agent); }

  PowerVector powers(std::span<const int> joint_action) const {
    check_joint(joint_action);
    PowerVector p{pn_dbm_, {}};
    for (int a : joint_action) p.cr_dbm.push_back(actions_.power_dbm(a));
    return p;
  }

  EnvironmentView observe(std::span<const int> joint_action) const {
    check_joint(joint_action);
    const int n = n_cr();
    EnvironmentView view;
    view.agents.resize(n);
    for (int k = 0; k < n; ++k) {
      AgentView& v = view.agents[k];
      const int link = nearest_[k];
      double sn_at_pn = 0.0;
      for (int j = 0; j < n; ++j) sn_at_pn += gains_.cr_to_pn(j, link) * action_mw_[joint_action[j]];
      v.nearest_pn_link = link;
      v.abs_throughput_change = -relative_throughput_change_linear(sn_at_pn / pn_background_mw_[link], amc_);
      v.state = v.abs_throughput_change <= env_.epsilon ? EnvState::S0 : EnvState::S1;
      v.margin = env_.epsilon - v.abs_throughput_change;

      const double signal = gains_.cr_to_cr(k, k) * action_mw_[joint_action[k]];
      double interference = sn_floor_mw_[k];
      for (int j = 0; j < n; ++j)
        if (j != k) interference += gains_.cr_to_cr(j, k) * action_mw_[joint_action[j]];
      v.sn_sinr = signal / interference;
      v.sn_throughput_mbps = throughput(v.sn_sinr, amc_);
    }
    return view;
  }

 private:
  void check_joint(std::span<const int> joint_action) const {
    if (static_cast<int>(joint_action.size()) != n_cr()) throw ArgumentError("joint action has wrong length");
    for (int a : joint_action)
      if (a < 0 || a >= n_actions()) throw ArgumentError("action index out of range");
  }

  void precompute() {
    const int m = n_pn();
    const int n = n_cr();
    PowerVector silent{pn_dbm_, std::vector<std::optional<double>>(n)};
    action_mw_.resize(actions_.size());
    for (int a = 0; a < actions_.size(); ++a) action_mw_[a] = actions_.power_mw(a);

    pn_background_mw_.resize(m);
    for (int i = 0; i < m; ++i) {
      pn_background_mw_[i] = gains_.noise_mw;
      if (env_.interference_reference == InterferenceReference::NoisePlusPn)
        pn_background_mw_[i] += pn_cochannel_interference_mw(i, gains_, silent);
    }

    // Nearest PN link: the AP received with largest power at the CR
    // transmitter (shadowing included). Lowest index wins ties.
    nearest_.resize(n);
    sn_floor_mw_.resize(n);
    for (int k = 0; k < n; ++k) {
      int best = 0;
      double best_rx = -1.0;
      for (int i = 0; i < m; ++i) {
        const double rx = gains_.pn_to_cr_tx(i, k) * silent.pn_mw(i);
        if (rx > best_rx) {
          best_rx = rx;
          best = i;
        }
      }
      nearest_[k] = best;
      double floor = gains_.noise_mw;
      for (int i = 0; i < m; ++i) floor += gains_.pn_to_cr(i, k) * silent.pn_mw(i);
      sn_floor_mw_[k] = floor;
    }
  }

  ChannelGains gains_;
  std::vector<double> pn_dbm_;
  AmcTable amc_;
  EnvConfig env_;
  ActionSpace actions_;
  std::optional<NodePlacement> placement_;
  bool pn_power_converged_ = true;

  std::vector<double> action_mw_;
  std::vector<double> pn_background_mw_;
  std::vector<double> sn_floor_mw_;  // PN interference + noise at each CR receiver
  std::vector<int> nearest_;
};

struct ScenarioSpec {
  GridSpec grid;
  PathLossModel path_loss;
  double noise_dbm = -130.0;
  EnvConfig env;
  AmcTable amc = default_amc_table();
  ActionSpace actions;
};

// Placement, shadowing and PN power control, all from one seed.
inline Scenario sample_scenario(const ScenarioSpec& spec, std::uint64_t seed) {
  Rng rng(seed);
  auto placement = sample_placement(spec.grid, spec.env.n_cr, rng);
  auto gains = sample_gains(placement, spec.grid, spec.path_loss, spec.noise_dbm, rng);
  return Scenario::with_power_control(std::move(gains), spec.amc, spec.env, spec.actions, std::move(placement));
}

inline double reward(const EnvironmentView& view, int agent, RewardMode mode) {
  const AgentView& v = view.agents.at(agent);
  if (v.state == EnvState::S1) return 0.0;
  const double t = mode == RewardMode::Local ? v.sn_throughput_mbps : view.total_throughput_mbps();
  return std::pow(10.0, t);
}

struct PhaseChangeEstimate {
  double rho = 0.0;
  long steps = 0;
  long s1_count = 0;
  double p_hat = 0.0;
  double ci_low = 0.0;   // 95% Wilson interval
  double ci_high = 0.0;
  double reward_mean = 0.0;
  double reward_variance = 0.0;  // population variance of observed rewards
  double k_hat = 0.0;            // mean of the nonzero rewards
  // K^2 p (1 - p) from the sample estimates.
  double bernoulli_variance() const { return k_hat * k_hat * p_hat * (1.0 - p_hat); }
};

inline std::pair<double, double> wilson_interval(long successes, long trials, double z = 1.959963984540054) {
  if (trials <= 0) return {0.0, 1.0};
  const double n = static_cast<double>(trials);
  const double p = successes / n;
  const double denom = 1.0 + z * z / n;
  const double center = (p + z * z / (2.0 * n)) / denom;
  const double half = z * std::sqrt(p * (1.0 - p) / n + z * z / (4.0 * n * n)) / denom;
  const double lo = successes == 0 ? 0.0 : std::max(0.0, center - half);
  const double hi = successes == trials ? 1.0 : std::min(1.0, center + half);
  return {lo, hi};
}

// Empirical probability that `reference` observes S1 while playing its policy
// action, when every other agent follows `policy` except for experimentation
// with probability rho (uniform over all actions).
inline PhaseChangeEstimate measure_phase_change_probability(const Scenario& scenario, std::span<const int> policy,
                                                            double rho, long steps, Rng& rng, int reference = 0,
                                                            std::optional<RewardMode> mode = std::nullopt) {
  if (!(rho >= 0.0 && rho <= 1.0)) throw ArgumentError("rho must lie in [0, 1]");
  if (steps < 1) throw ArgumentError("steps must be positive");
  if (reference < 0 || reference >= scenario.n_cr()) throw ArgumentError("reference agent out of range");
  if (!scenario.observe(policy).all_s0())
    throw ArgumentError("policy must keep every agent in S0 when nobody experiments");
  const RewardMode rm = mode.value_or(scenario.env().reward_mode);

  std::vector<int> joint(policy.begin(), policy.end());
  PhaseChangeEstimate est;
  est.rho = rho;
  est.steps = steps;
  double mean = 0.0, m2 = 0.0, nonzero_sum = 0.0;  // Welford accumulators
  long nonzero = 0;
  for (long t = 0; t < steps; ++t) {
    for (int k = 0; k < scenario.n_cr(); ++k) {
      if (k == reference) continue;
      joint[k] = uniform01(rng) < rho ? uniform_index(rng, scenario.n_actions()) : policy[k];
    }
    const auto view = scenario.observe(joint);
    const double r = reward(view, reference, rm);
    if (view.agents[reference].state == EnvState::S1) ++est.s1_count;
    const double d = r - mean;
    mean += d / static_cast<double>(t + 1);
    m2 += d * (r - mean);
    if (r > 0.0) {
      nonzero_sum += r;
      ++nonzero;
    }
  }
  const double n = static_cast<double>(steps);
  est.p_hat = est.s1_count / n;
  std::tie(est.ci_low, est.ci_high) = wilson_interval(est.s1_count, steps);
  est.reward_mean = mean;
  est.reward_variance = m2 / n;
  est.k_hat = nonzero > 0 ? nonzero_sum / nonzero : 0.0;
  return est;
}

}  // namespace crdql
