#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "crdql/environment.hpp"
#include "crdql/errors.hpp"
#include "crdql/random.hpp"
#include "json.hpp"

namespace crdql {

struct Transition {
  EnvState state = EnvState::S0;
  EnvState next_state = EnvState::S0;
  int action = 0;
  double reward = 0.0;
};

// Index of the largest entry; the lowest index wins ties.
inline int argmax(std::span<const double> values) {
  int best = 0;
  for (int i = 1; i < static_cast<int>(values.size()); ++i)
    if (values[i] > values[best]) best = i;
  return best;
}

inline double max_value(std::span<const double> values) { return values[argmax(values)]; }

// States x actions table of Q-values, stored row-major by state.
class QTable {
 public:
  QTable() = default;
  explicit QTable(int n_actions, double init = 0.0)
      : n_actions_(n_actions), values_(static_cast<std::size_t>(kNumStates) * n_actions, init) {}

  int n_actions() const { return n_actions_; }
  double& at(EnvState s, int a) { return values_.at(index(s, a)); }
  double at(EnvState s, int a) const { return values_.at(index(s, a)); }
  std::span<const double> row(EnvState s) const {
    return {values_.data() + static_cast<std::size_t>(state_index(s)) * n_actions_,
            static_cast<std::size_t>(n_actions_)};
  }
  std::span<double> row(EnvState s) {
    return {values_.data() + static_cast<std::size_t>(state_index(s)) * n_actions_,
            static_cast<std::size_t>(n_actions_)};
  }

  friend bool operator==(const QTable&, const QTable&) = default;

 private:
  std::size_t index(EnvState s, int a) const {
    if (a < 0 || a >= n_actions_) throw ArgumentError("QTable action out of range");
    return static_cast<std::size_t>(state_index(s)) * n_actions_ + a;
  }

  int n_actions_ = 0;
  std::vector<double> values_;
};

// One temporal-difference step:
// Q(s,a) += alpha * (r + gamma * max_a' Q(s',a') - Q(s,a)).
inline void table_update(QTable& q, const Transition& t, double alpha, double gamma) {
  const double bootstrap = max_value(q.row(t.next_state));
  double& entry = q.at(t.state, t.action);
  entry += alpha * (t.reward + gamma * bootstrap - entry);
}

// Fully connected network with saturated-ReLU hidden layers (clamped to
// [0, cap]) and a linear output layer. Input is the one-hot state.
struct MlpParams {
  std::vector<int> layer_sizes{2, 8, 18, 14};
  double activation_cap = 20.0;
  std::vector<std::vector<double>> weights;  // layer l: sizes[l+1] x sizes[l], row-major
  std::vector<std::vector<double>> biases;   // layer l: sizes[l+1]

  int n_layers() const { return static_cast<int>(layer_sizes.size()) - 1; }
  int n_inputs() const { return layer_sizes.front(); }
  int n_outputs() const { return layer_sizes.back(); }

  // Zero-filled parameters of the right shape.
  static MlpParams zeros(std::vector<int> sizes, double cap) {
    if (sizes.size() < 2) throw ArgumentError("MLP needs at least input and output layers");
    MlpParams p;
    p.layer_sizes = std::move(sizes);
    p.activation_cap = cap;
    for (int l = 0; l < p.n_layers(); ++l) {
      p.weights.emplace_back(static_cast<std::size_t>(p.layer_sizes[l + 1]) * p.layer_sizes[l], 0.0);
      p.biases.emplace_back(p.layer_sizes[l + 1], 0.0);
    }
    return p;
  }

  // Every weight and bias uniform in [lo, hi].
  static MlpParams uniform(std::vector<int> sizes, double cap, Rng& rng, double lo = 0.0, double hi = 1.0) {
    MlpParams p = zeros(std::move(sizes), cap);
    std::uniform_real_distribution<double> dist(lo, hi);
    for (int l = 0; l < p.n_layers(); ++l) {
      for (double& w : p.weights[l]) w = dist(rng);
      for (double& b : p.biases[l]) b = dist(rng);
    }
    return p;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (int l = 0; l < n_layers(); ++l) n += weights[l].size() + biases[l].size();
    return n;
  }

  // Flat view in layer order: W0, b0, W1, b1, ...
  double& parameter(std::size_t i) {
    for (int l = 0; l < n_layers(); ++l) {
      if (i < weights[l].size()) return weights[l][i];
      i -= weights[l].size();
      if (i < biases[l].size()) return biases[l][i];
      i -= biases[l].size();
    }
    throw ArgumentError("parameter index out of range");
  }

  bool all_finite() const {
    for (int l = 0; l < n_layers(); ++l) {
      for (double w : weights[l])
        if (!std::isfinite(w)) return false;
      for (double b : biases[l])
        if (!std::isfinite(b)) return false;
    }
    return true;
  }

  void check_shape() const {
    if (layer_sizes.size() < 2 || static_cast<int>(weights.size()) != n_layers() ||
        static_cast<int>(biases.size()) != n_layers())
      throw ArgumentError("MLP parameter shape mismatch");
    for (int l = 0; l < n_layers(); ++l)
      if (weights[l].size() != static_cast<std::size_t>(layer_sizes[l + 1]) * layer_sizes[l] ||
          biases[l].size() != static_cast<std::size_t>(layer_sizes[l + 1]))
        throw ArgumentError("MLP layer " + std::to_string(l) + " has the wrong size");
    if (!(activation_cap > 0.0)) throw ArgumentError("activation cap must be positive");
  }

  friend bool operator==(const MlpParams&, const MlpParams&) = default;
};

inline std::vector<double> one_hot(EnvState s, int n_inputs = kNumStates) {
  std::vector<double> x(n_inputs, 0.0);
  x.at(state_index(s)) = 1.0;
  return x;
}

namespace detail {

// Pre-activations of every layer for one input.
struct ForwardCache {
  std::vector<std::vector<double>> inputs;  // input to layer l (activations of l-1)
  std::vector<std::vector<double>> pre;     // pre-activation of layer l
};

inline std::vector<double> forward_impl(const MlpParams& p, std::span<const double> x, ForwardCache* cache) {
  std::vector<double> act(x.begin(), x.end());
  for (int l = 0; l < p.n_layers(); ++l) {
    const int n_in = p.layer_sizes[l];
    const int n_out = p.layer_sizes[l + 1];
    std::vector<double> z(n_out);
    for (int o = 0; o < n_out; ++o) {
      double s = p.biases[l][o];
      const double* w = p.weights[l].data() + static_cast<std::size_t>(o) * n_in;
      for (int i = 0; i < n_in; ++i) s += w[i] * act[i];
      z[o] = s;
    }
    if (cache) {
      cache->inputs.push_back(act);
      cache->pre.push_back(z);
    }
    if (l + 1 < p.n_layers())
      for (double& v : z) v = std::clamp(v, 0.0, p.activation_cap);
    act = std::move(z);
  }
  return act;
}

}  // namespace detail

inline std::vector<double> forward(const MlpParams& p, std::span<const double> input) {
  p.check_shape();
  if (static_cast<int>(input.size()) != p.n_inputs()) throw ArgumentError("forward: input size mismatch");
  if (!p.all_finite()) throw NumericError("forward: non-finite MLP parameters");
  return detail::forward_impl(p, input, nullptr);
}

inline std::vector<double> forward(const MlpParams& p, EnvState s) {
  const auto x = one_hot(s, p.n_inputs());
  return forward(p, x);
}

// Frozen Q-values used to build regression targets, refreshed from the
// network every `refresh_period` gradient updates.
struct TargetArray {
  QTable values;
  int refresh_period = 50;
  long refresh_count = 0;
};

inline void refresh_target(TargetArray& target, const MlpParams& p, long update_count) {
  if (target.refresh_period < 1 || update_count % target.refresh_period != 0)
    throw std::logic_error("refresh_target called off schedule (update " + std::to_string(update_count) +
                           ", period " + std::to_string(target.refresh_period) + ")");
  QTable q(p.n_outputs());
  for (EnvState s : {EnvState::S0, EnvState::S1}) {
    const auto row = forward(p, s);
    std::copy(row.begin(), row.end(), q.row(s).begin());
  }
  target.values = std::move(q);
  ++target.refresh_count;
}

inline TargetArray make_target(const MlpParams& p, int refresh_period) {
  TargetArray t;
  t.refresh_period = refresh_period;
  refresh_target(t, p, 0);
  t.refresh_count = 0;
  return t;
}

// Regression target r + gamma * max_a Qhat(s', a).
inline double td_target(const Transition& t, const TargetArray& target, double gamma) {
  return t.reward + gamma * max_value(target.values.row(t.next_state));
}

struct MlpGradient {
  std::vector<std::vector<double>> weights;
  std::vector<std::vector<double>> biases;
  double loss = 0.0;  // mean of 0.5 * (y - Q)^2
};

// Mean squared-error loss and its gradient over a batch. Subgradient zero is
// used at the clamp boundaries.
inline MlpGradient loss_gradient(const MlpParams& p, std::span<const Transition> batch, const TargetArray& target,
                                 double gamma) {
  p.check_shape();
  if (batch.empty()) throw ArgumentError("empty mini-batch");
  if (!p.all_finite()) throw NumericError("loss_gradient: non-finite MLP parameters");
  MlpGradient g;
  for (int l = 0; l < p.n_layers(); ++l) {
    g.weights.emplace_back(p.weights[l].size(), 0.0);
    g.biases.emplace_back(p.biases[l].size(), 0.0);
  }
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  for (const Transition& t : batch) {
    if (t.action < 0 || t.action >= p.n_outputs()) throw ArgumentError("transition action out of range");
    detail::ForwardCache cache;
    const auto x = one_hot(t.state, p.n_inputs());
    const auto q = detail::forward_impl(p, x, &cache);
    const double y = td_target(t, target, gamma);
    const double err = q[t.action] - y;
    g.loss += 0.5 * err * err * inv_n;

    // dL/dz for the output layer is nonzero only at the taken action.
    std::vector<double> delta(p.n_outputs(), 0.0);
    delta[t.action] = err * inv_n;
    for (int l = p.n_layers() - 1; l >= 0; --l) {
      const int n_in = p.layer_sizes[l];
      const int n_out = p.layer_sizes[l + 1];
      const auto& in = cache.inputs[l];
      for (int o = 0; o < n_out; ++o) {
        if (delta[o] == 0.0) continue;
        g.biases[l][o] += delta[o];
        double* gw = g.weights[l].data() + static_cast<std::size_t>(o) * n_in;
        for (int i = 0; i < n_in; ++i) gw[i] += delta[o] * in[i];
      }
      if (l == 0) break;
      std::vector<double> prev(n_in, 0.0);
      const auto& z_prev = cache.pre[l - 1];
      for (int i = 0; i < n_in; ++i) {
        if (!(z_prev[i] > 0.0 && z_prev[i] < p.activation_cap)) continue;
        double s = 0.0;
        for (int o = 0; o < n_out; ++o) s += p.weights[l][static_cast<std::size_t>(o) * n_in + i] * delta[o];
        prev[i] = s;
      }
      delta = std::move(prev);
    }
  }
  return g;
}

inline double batch_loss(const MlpParams& p, std::span<const Transition> batch, const TargetArray& target,
                         double gamma) {
  double loss = 0.0;
  for (const Transition& t : batch) {
    const auto q = forward(p, t.state);
    const double err = q.at(t.action) - td_target(t, target, gamma);
    loss += 0.5 * err * err;
  }
  return loss / static_cast<double>(batch.size());
}

struct TrainResult {
  double loss = 0.0;  // before the step
};

inline double gradient_norm(const MlpGradient& g) {
  double ss = 0.0;
  for (const auto& w : g.weights)
    for (double v : w) ss += v * v;
  for (const auto& b : g.biases)
    for (double v : b) ss += v * v;
  return std::sqrt(ss);
}

// One plain gradient-descent step on the mean batch loss. A positive
// `max_grad_norm` rescales the gradient to at most that global L2 norm.
inline TrainResult train_minibatch(MlpParams& p, std::span<const Transition> batch, const TargetArray& target,
                                   double alpha, double gamma, double max_grad_norm = 0.0) {
  if (!(alpha >= 0.0)) throw ArgumentError("learning rate must be nonnegative");
  MlpGradient g = loss_gradient(p, batch, target, gamma);
  for (int l = 0; l < p.n_layers(); ++l) {
    for (std::size_t i = 0; i < g.weights[l].size(); ++i)
      if (!std::isfinite(g.weights[l][i])) {
        std::ostringstream msg;
        msg << "non-finite gradient in layer " << l << " weight " << i << " (loss " << g.loss << ")";
        throw NumericError(msg.str());
      }
    for (std::size_t i = 0; i < g.biases[l].size(); ++i)
      if (!std::isfinite(g.biases[l][i])) {
        std::ostringstream msg;
        msg << "non-finite gradient in layer " << l << " bias " << i << " (loss " << g.loss << ")";
        throw NumericError(msg.str());
      }
  }
  double step = alpha;
  if (max_grad_norm > 0.0) {
    const double norm = gradient_norm(g);
    if (norm > max_grad_norm) step *= max_grad_norm / norm;
  }
  for (int l = 0; l < p.n_layers(); ++l) {
    for (std::size_t i = 0; i < p.weights[l].size(); ++i) p.weights[l][i] -= step * g.weights[l][i];
    for (std::size_t i = 0; i < p.biases[l].size(); ++i) p.biases[l][i] -= step * g.biases[l][i];
  }
  if (!p.all_finite()) throw NumericError("MLP parameters became non-finite after a gradient step");
  return {g.loss};
}

// JSON ----------------------------------------------------------------------

inline void to_json(nlohmann::json& j, const MlpParams& p) {
  j = {{"layer_sizes", p.layer_sizes},
       {"activation_cap", p.activation_cap},
       {"weights", p.weights},
       {"biases", p.biases}};
}
inline void from_json(const nlohmann::json& j, MlpParams& p) {
  p.layer_sizes = j.at("layer_sizes").get<std::vector<int>>();
  p.activation_cap = j.at("activation_cap").get<double>();
  p.weights = j.at("weights").get<std::vector<std::vector<double>>>();
  p.biases = j.at("biases").get<std::vector<std::vector<double>>>();
  p.check_shape();
}

inline void to_json(nlohmann::json& j, const QTable& q) {
  j = nlohmann::json::array();
  for (EnvState s : {EnvState::S0, EnvState::S1}) {
    const auto r = q.row(s);
    j.push_back(std::vector<double>(r.begin(), r.end()));
  }
}

}  // namespace crdql
