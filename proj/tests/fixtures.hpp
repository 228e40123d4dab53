#pragma once

#include <vector>

#include "crdql/crdql.hpp"

namespace crdql::testing {

// Channel with every gain set to `fill`; tests overwrite the entries they care about.
inline ChannelGains uniform_gains(int n_pn, int n_cr, double fill, double noise_mw = 1e-13) {
  return {GainMatrix(n_pn, n_pn, fill), GainMatrix(n_cr, n_pn, fill), GainMatrix(n_cr, n_cr, fill),
          GainMatrix(n_pn, n_cr, fill), GainMatrix(n_pn, n_cr, fill), noise_mw};
}

// Three actions: off, 0 dBm, 10 dBm.
inline ActionSpace three_actions() { return {0.0, 10.0, 2}; }

// One AP and two CRs. The PN link sees noise only (no co-channel PN), so
// interference ratios are exact multiples of the noise power:
//   CR0 at 0 dBm -> I/N = 0.1, at 10 dBm -> 1.0
//   CR1 at 0 dBm -> I/N = 0.2, at 10 dBm -> 2.0
// With xi = 4 and epsilon = 0.05, S0 needs log2(1 + I/N) <= 0.2, i.e.
// I/N <= 2^0.2 - 1 ~= 0.1487.
inline Scenario one_ap_two_cr(RewardMode mode = RewardMode::Global) {
  ChannelGains g = uniform_gains(1, 2, 1e-16);
  g.pn_to_pn(0, 0) = 1e-10;
  g.cr_to_pn(0, 0) = 1e-14;
  g.cr_to_pn(1, 0) = 2e-14;
  g.cr_to_cr(0, 0) = 1e-11;
  g.cr_to_cr(1, 1) = 2e-11;
  g.cr_to_cr(0, 1) = 1e-14;
  g.cr_to_cr(1, 0) = 1e-14;
  g.pn_to_cr(0, 0) = 1e-15;
  g.pn_to_cr(0, 1) = 1e-15;
  EnvConfig env;
  env.n_cr = 2;
  env.reward_mode = mode;
  return Scenario(g, {0.0}, default_amc_table(), env, three_actions());
}

inline std::vector<int> joint(std::initializer_list<int> a) { return std::vector<int>(a); }

}  // namespace crdql::testing
