#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "crdql/environment.hpp"
#include "crdql/errors.hpp"
#include "json.hpp"

namespace crdql {

inline constexpr double kMaxOracleCombinations = 1e7;

// Value of a joint action for the exhaustive search: the shared reward when
// every agent is in S0, zero otherwise. Global mode uses 10^(sum T); local
// mode sums the agents' own rewards 10^(T_i).
inline double joint_value(const EnvironmentView& view, RewardMode mode) {
  if (!view.all_s0()) return 0.0;
  if (mode == RewardMode::Global) return std::pow(10.0, view.total_throughput_mbps());
  double s = 0.0;
  for (const auto& a : view.agents) s += std::pow(10.0, a.sn_throughput_mbps);
  return s;
}

// Joint actions are numbered lexicographically with agent 0 most significant.
inline std::vector<int> decode_joint(std::int64_t index, int n_agents, int n_actions) {
  std::vector<int> joint(n_agents);
  for (int k = n_agents - 1; k >= 0; --k) {
    joint[k] = static_cast<int>(index % n_actions);
    index /= n_actions;
  }
  return joint;
}

inline std::int64_t encode_joint(std::span<const int> joint, int n_actions) {
  std::int64_t index = 0;
  for (int a : joint) index = index * n_actions + a;
  return index;
}

struct OracleResult {
  std::vector<int> best_joint_action;
  double best_reward = 0.0;
  std::vector<double> rewards;  // indexed by encode_joint
  std::vector<std::int64_t> near_optimal;  // within tau of the best, best included
  double tau = 0.01;
  long evaluations = 0;
  int n_agents = 0;
  int n_actions = 0;

  double reward_of(std::span<const int> joint) const { return rewards.at(encode_joint(joint, n_actions)); }
};

inline std::int64_t joint_action_count(int n_agents, int n_actions) {
  const double count = std::pow(static_cast<double>(n_actions), n_agents);
  if (count > kMaxOracleCombinations)
    throw ConfigError("exhaustive search over " + std::to_string(count) + " joint actions exceeds the 1e7 guard");
  return static_cast<std::int64_t>(std::llround(count));
}

inline OracleResult exhaustive_search(const Scenario& scenario, RewardMode mode, double tau = 0.01) {
  const int n = scenario.n_cr();
  const int a = scenario.n_actions();
  const std::int64_t total = joint_action_count(n, a);
  OracleResult out;
  out.n_agents = n;
  out.n_actions = a;
  out.tau = tau;
  out.rewards.resize(total);
  std::int64_t best = 0;
  for (std::int64_t i = 0; i < total; ++i) {
    const auto joint = decode_joint(i, n, a);
    out.rewards[i] = joint_value(scenario.observe(joint), mode);
    ++out.evaluations;
    if (out.rewards[i] > out.rewards[best]) best = i;
  }
  out.best_joint_action = decode_joint(best, n, a);
  out.best_reward = out.rewards[best];
  for (std::int64_t i = 0; i < total; ++i)
    if (out.rewards[i] >= (1.0 - tau) * out.best_reward) out.near_optimal.push_back(i);
  return out;
}

enum class Outcome { Optimal, NearOptimal, Suboptimal };

inline const char* to_string(Outcome o) {
  switch (o) {
    case Outcome::Optimal: return "optimal";
    case Outcome::NearOptimal: return "near_optimal";
    case Outcome::Suboptimal: return "suboptimal";
  }
  return "?";
}

// Optimal: the joint S0 policy is the oracle's best action. Near-optimal:
// reward within tau of the best, which includes exact reward ties with a
// different joint action.
inline Outcome score_policy(std::span<const int> joint_policy, const OracleResult& oracle) {
  if (static_cast<int>(joint_policy.size()) != oracle.n_agents) throw ArgumentError("joint policy has wrong length");
  const double r = oracle.reward_of(joint_policy);
  if (std::equal(joint_policy.begin(), joint_policy.end(), oracle.best_joint_action.begin())) return Outcome::Optimal;
  if (r >= (1.0 - oracle.tau) * oracle.best_reward) return Outcome::NearOptimal;
  return Outcome::Suboptimal;
}

inline void to_json(nlohmann::json& j, const OracleResult& o) {
  auto near = nlohmann::json::array();
  for (auto idx : o.near_optimal)
    near.push_back({{"joint_action", decode_joint(idx, o.n_agents, o.n_actions)}, {"reward", o.rewards[idx]}});
  j = {{"best_joint_action", o.best_joint_action},
       {"best_reward", o.best_reward},
       {"tau", o.tau},
       {"evaluations", o.evaluations},
       {"n_agents", o.n_agents},
       {"n_actions", o.n_actions},
       {"near_optimal", near},
       {"rewards", o.rewards}};
}

}  // namespace crdql
