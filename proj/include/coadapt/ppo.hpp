#pragma once

// Proximal policy optimisation for one actor-critic agent. Two agents train
// side by side by each owning a PPOAgent and a buffer; they only share the
// reward signal.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "coadapt/error.hpp"
#include "coadapt/mlp.hpp"

namespace coadapt {

struct Transition {
  std::vector<double> obs;
  int action = 0;
  double log_prob_old = 0.0;
  double reward = 0.0;
  std::vector<double> next_obs;
  bool terminal = false;
};

class ExperienceBuffer {
 public:
  explicit ExperienceBuffer(std::size_t capacity = 2048) : capacity_(capacity) {
    require(capacity > 0, "buffer capacity must be positive");
    items_.reserve(capacity);
  }

  void push(Transition t) {
    require(!full(), "experience buffer is full");
    require(t.log_prob_old <= 0.0, "log_prob_old must be <= 0");
    require(std::isfinite(t.reward), "transition reward must be finite");
    items_.push_back(std::move(t));
  }

  bool full() const { return items_.size() == capacity_; }
  bool empty() const { return items_.empty(); }
  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }
  void clear() { items_.clear(); }

  const Transition& operator[](std::size_t i) const { return items_[i]; }
  std::span<const Transition> items() const { return items_; }

 private:
  std::size_t capacity_;
  std::vector<Transition> items_;
};

enum class EntropyMode {
  Bonus,   // loss carries -alpha * K, which keeps exploration up
  Literal  // loss carries +alpha * K as printed in the original formulation
};

enum class OptimizerKind { SGD, Momentum, Adam };

struct PPOHyper {
  double gamma = 0.99;
  double clip = 0.2;
  double entropy_weight = 0.01;
  std::size_t batch_size = 64;
  double learning_rate = 1e-3;
  int update_epochs = 4;
  std::size_t buffer_size = 2048;
  EntropyMode entropy_mode = EntropyMode::Bonus;
  OptimizerKind optimizer = OptimizerKind::Adam;
  double momentum = 0.9;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  bool normalize_advantages = true;
  double reward_scale = 0.01;  // rewards are multiplied by this before they enter a buffer

  void validate() const {
    require(gamma >= 0.0 && gamma < 1.0, "gamma must lie in [0, 1)");
    require(clip > 0.0 && clip < 1.0, "clip factor must lie in (0, 1)");
    require(entropy_weight >= 0.0, "entropy weight must be non-negative");
    require(batch_size > 0 && batch_size <= buffer_size, "batch size must lie in 1..buffer_size");
    require(learning_rate >= 0.0, "learning rate must be non-negative");
    require(update_epochs > 0, "update_epochs must be positive");
    require(reward_scale > 0.0, "reward_scale must be positive");
  }
};

// ---------------------------------------------------------------------------
// Advantages and returns

// Critic values of every S_i and of every successor S_{i+1} (0 on terminal).
struct BufferValues {
  std::vector<double> current;
  std::vector<double> next;
};

inline BufferValues evaluate_buffer(const ExperienceBuffer& buffer, const MLPParams& critic) {
  require(!buffer.empty(), "advantage computation on an empty buffer");
  const auto n = static_cast<Eigen::Index>(buffer.size());
  const auto dim = static_cast<Eigen::Index>(buffer[0].obs.size());
  Matrix obs(dim, n), next(dim, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& t = buffer[static_cast<std::size_t>(i)];
    require(static_cast<Eigen::Index>(t.obs.size()) == dim && static_cast<Eigen::Index>(t.next_obs.size()) == dim,
            "inconsistent observation sizes in buffer");
    obs.col(i) = Eigen::Map<const Vector>(t.obs.data(), dim);
    next.col(i) = Eigen::Map<const Vector>(t.next_obs.data(), dim);
  }
  const Matrix v = forward_batch(critic, obs).output;
  const Matrix vn = forward_batch(critic, next).output;
  BufferValues out;
  out.current.resize(static_cast<std::size_t>(n));
  out.next.resize(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    out.current[static_cast<std::size_t>(i)] = v(0, i);
    out.next[static_cast<std::size_t>(i)] = buffer[static_cast<std::size_t>(i)].terminal ? 0.0 : vn(0, i);
  }
  return out;
}

// Q_t = sum_{i>=t} gamma^(i-t) (r_i + gamma V(S_{i+1}) - V(S_i)), the sum
// stopping at the end of the buffer or after a terminal transition.
inline std::vector<double> compute_advantages(const ExperienceBuffer& buffer, const BufferValues& values,
                                              double gamma) {
  require(!buffer.empty(), "advantage computation on an empty buffer");
  require(values.current.size() == buffer.size() && values.next.size() == buffer.size(),
          "value vectors do not match the buffer");
  std::vector<double> q(buffer.size());
  double running = 0.0;
  for (std::size_t i = buffer.size(); i-- > 0;) {
    const auto& t = buffer[i];
    if (t.terminal) running = 0.0;
    const double delta = t.reward + gamma * values.next[i] - values.current[i];
    running = delta + gamma * running;
    q[i] = running;
  }
  return q;
}

inline std::vector<double> compute_advantages(const ExperienceBuffer& buffer, const MLPParams& critic,
                                              double gamma) {
  return compute_advantages(buffer, evaluate_buffer(buffer, critic), gamma);
}

inline std::vector<double> compute_returns(std::span<const double> advantages, std::span<const double> values) {
  require(advantages.size() == values.size(), "advantage/value length mismatch");
  std::vector<double> r(advantages.size());
  for (std::size_t i = 0; i < r.size(); ++i) r[i] = advantages[i] + values[i];
  return r;
}

// ---------------------------------------------------------------------------
// Losses

inline double clip_ratio(double ratio, double epsilon) {
  return std::max(std::min(ratio, 1.0 + epsilon), 1.0 - epsilon);
}

inline double entropy_term(const ActionDistribution& dist) {
  double k = 0.0;
  for (std::size_t i = 0; i < dist.size(); ++i) k -= dist.probabilities[i] * dist.log_probabilities[i];
  return k;
}

// (1/2B) sum (R_n - V_n)^2 with dL/dV_n.
inline OutputLoss critic_loss_at_output(const Matrix& values, std::span<const double> returns) {
  const auto b = values.cols();
  require(values.rows() == 1 && static_cast<std::size_t>(b) == returns.size() && b > 0,
          "critic loss: batch shape mismatch");
  OutputLoss out{0.0, Matrix(1, b)};
  for (Eigen::Index n = 0; n < b; ++n) {
    const double diff = returns[static_cast<std::size_t>(n)] - values(0, n);
    out.loss += diff * diff;
    out.output_grad(0, n) = -diff / static_cast<double>(b);
  }
  out.loss /= 2.0 * static_cast<double>(b);
  return out;
}

struct ActorBatchStats {
  double entropy = 0.0;      // mean K over the batch
  double clip_fraction = 0.0;
};

// (1/B) sum [ -min(ratio Q, clip(ratio) Q) -/+ alpha K ] with dL/dlogits.
inline OutputLoss actor_loss_at_output(const Matrix& logits, std::span<const int> actions,
                                       std::span<const double> log_prob_old, std::span<const double> advantages,
                                       double epsilon, double alpha, EntropyMode mode,
                                       ActorBatchStats* stats = nullptr) {
  const auto b = logits.cols();
  const auto y = logits.rows();
  require(b > 0 && static_cast<std::size_t>(b) == actions.size() && actions.size() == log_prob_old.size() &&
              actions.size() == advantages.size(),
          "actor loss: batch shape mismatch");
  const double entropy_sign = mode == EntropyMode::Bonus ? -1.0 : 1.0;
  const double scale = 1.0 - static_cast<double>(y) * kProbabilityFloor;
  const double inv_b = 1.0 / static_cast<double>(b);

  OutputLoss out{0.0, Matrix::Zero(y, b)};
  double entropy_sum = 0.0;
  std::size_t clipped = 0;
  Vector soft(y);
  for (Eigen::Index n = 0; n < b; ++n) {
    const ActionDistribution dist = distribution_from_logits(logits.col(n));
    const double max = logits.col(n).maxCoeff();
    soft = (logits.col(n).array() - max).exp().matrix();
    soft /= soft.sum();

    const auto a = static_cast<std::size_t>(actions[static_cast<std::size_t>(n)]);
    require(a < dist.size(), "actor loss: action index out of range");
    const double q = advantages[static_cast<std::size_t>(n)];
    const double ratio = std::exp(dist.log_probabilities[a] - log_prob_old[static_cast<std::size_t>(n)]);
    if (!std::isfinite(ratio)) throw NumericalError("actor loss: non-finite probability ratio");
    const double bounded = clip_ratio(ratio, epsilon);
    const double unclipped_obj = ratio * q;
    const double clipped_obj = bounded * q;
    const bool use_unclipped = unclipped_obj <= clipped_obj;
    if (bounded != ratio) ++clipped;
    const double k = entropy_term(dist);
    entropy_sum += k;
    out.loss += -std::min(unclipped_obj, clipped_obj) + entropy_sign * alpha * k;

    // d log p_a / dz_i = scale * s_a (delta_ai - s_i) / p_a
    // dK / dz_i        = -scale * s_i (ln p_i - sum_j s_j ln p_j)
    double weighted_log = 0.0;
    for (Eigen::Index j = 0; j < y; ++j) weighted_log += soft(j) * dist.log_probabilities[static_cast<std::size_t>(j)];
    const double pa = dist.probabilities[a];
    for (Eigen::Index i = 0; i < y; ++i) {
      double g = 0.0;
      if (use_unclipped) {
        const double dlogp = scale * soft(static_cast<Eigen::Index>(a)) *
                             ((static_cast<std::size_t>(i) == a ? 1.0 : 0.0) - soft(i)) / pa;
        g += -q * ratio * dlogp;
      }
      const double dk = -scale * soft(i) * (dist.log_probabilities[static_cast<std::size_t>(i)] - weighted_log);
      g += entropy_sign * alpha * dk;
      out.output_grad(i, n) = g * inv_b;
    }
  }
  out.loss *= inv_b;
  if (stats) {
    stats->entropy = entropy_sum * inv_b;
    stats->clip_fraction = static_cast<double>(clipped) * inv_b;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Optimisers

class Optimizer {
 public:
  Optimizer() = default;
  Optimizer(const MLPParams& shape, const PPOHyper& hyper)
      : kind_(hyper.optimizer),
        lr_(hyper.learning_rate),
        momentum_(hyper.momentum),
        beta1_(hyper.adam_beta1),
        beta2_(hyper.adam_beta2),
        eps_(hyper.adam_epsilon),
        m_(shape.zeros_like()),
        v_(shape.zeros_like()) {}

  void step(MLPParams& params, const MLPParams& grads) {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.layers.size(); ++i) {
      apply(params.layers[i].weight, grads.layers[i].weight, m_.layers[i].weight, v_.layers[i].weight, bc1, bc2);
      apply(params.layers[i].bias, grads.layers[i].bias, m_.layers[i].bias, v_.layers[i].bias, bc1, bc2);
    }
  }

 private:
  template <typename P>
  void apply(P& p, const P& g, P& m, P& v, double bc1, double bc2) const {
    switch (kind_) {
      case OptimizerKind::SGD:
        p -= lr_ * g;
        break;
      case OptimizerKind::Momentum:
        m = momentum_ * m + g;
        p -= lr_ * m;
        break;
      case OptimizerKind::Adam:
        m = beta1_ * m + (1.0 - beta1_) * g;
        v = beta2_ * v + (1.0 - beta2_) * g.cwiseProduct(g);
        p.array() -= lr_ * (m.array() / bc1) / ((v.array() / bc2).sqrt() + eps_);
        break;
    }
  }

  OptimizerKind kind_ = OptimizerKind::SGD;
  double lr_ = 0.0;
  double momentum_ = 0.0;
  double beta1_ = 0.9;
  double beta2_ = 0.999;
  double eps_ = 1e-8;
  std::uint64_t t_ = 0;
  MLPParams m_;
  MLPParams v_;
};

struct PPOAgent {
  MLPParams actor;
  MLPParams critic;
  Optimizer actor_optimizer;
  Optimizer critic_optimizer;

  static PPOAgent create(std::uint64_t seed, std::size_t obs_dim, std::size_t actions, const PPOHyper& hyper,
                         std::size_t hidden = kDefaultHidden) {
    PPOAgent a;
    a.actor = init_params(seed, {obs_dim, hidden, hidden, actions}, Head::Softmax);
    a.critic = init_params(seed ^ 0x9e3779b97f4a7c15ULL, {obs_dim, hidden, hidden, 1}, Head::Value, 1.0);
    a.actor_optimizer = Optimizer(a.actor, hyper);
    a.critic_optimizer = Optimizer(a.critic, hyper);
    return a;
  }
};

struct LossRecord {
  int update = 0;
  int epoch = 0;
  int minibatch = 0;
  double actor_loss = 0.0;
  double critic_loss = 0.0;
  double entropy = 0.0;
  double clip_fraction = 0.0;
};

// Frozen per-update training targets for one agent.
struct UpdateTargets {
  std::vector<double> advantages;
  std::vector<double> returns;
};

inline UpdateTargets prepare_targets(const ExperienceBuffer& buffer, const MLPParams& critic, const PPOHyper& hyper) {
  const BufferValues values = evaluate_buffer(buffer, critic);
  UpdateTargets t;
  t.advantages = compute_advantages(buffer, values, hyper.gamma);
  t.returns = compute_returns(t.advantages, values.current);
  if (hyper.normalize_advantages && t.advantages.size() > 1) {
    const double n = static_cast<double>(t.advantages.size());
    const double mean = std::accumulate(t.advantages.begin(), t.advantages.end(), 0.0) / n;
    double var = 0.0;
    for (double a : t.advantages) var += (a - mean) * (a - mean);
    const double sd = std::sqrt(var / n);
    for (double& a : t.advantages) a = (a - mean) / (sd + 1e-8);
  }
  return t;
}

// Runs the minibatch epochs for one agent on a full buffer and clears it.
// Ratios are taken against log_prob_old, which was recorded under the
// parameters that were current during collection.
inline std::vector<LossRecord> update_agent(PPOAgent& agent, ExperienceBuffer& buffer, const PPOHyper& hyper,
                                            std::mt19937_64& rng, int update_index = 0) {
  hyper.validate();
  require(buffer.full(), "update requires a full experience buffer");
  const UpdateTargets targets = prepare_targets(buffer, agent.critic, hyper);

  const std::size_t n = buffer.size();
  const auto dim = static_cast<Eigen::Index>(buffer[0].obs.size());
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});

  std::vector<LossRecord> trace;
  for (int epoch = 0; epoch < hyper.update_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    int mb = 0;
    for (std::size_t start = 0; start < n; start += hyper.batch_size, ++mb) {
      const std::size_t end = std::min(n, start + hyper.batch_size);
      const auto b = static_cast<Eigen::Index>(end - start);
      Matrix obs(dim, b);
      std::vector<int> actions(static_cast<std::size_t>(b));
      std::vector<double> old_lp(static_cast<std::size_t>(b)), adv(static_cast<std::size_t>(b)),
          ret(static_cast<std::size_t>(b));
      for (Eigen::Index j = 0; j < b; ++j) {
        const std::size_t idx = order[start + static_cast<std::size_t>(j)];
        const auto& t = buffer[idx];
        obs.col(j) = Eigen::Map<const Vector>(t.obs.data(), dim);
        actions[static_cast<std::size_t>(j)] = t.action;
        old_lp[static_cast<std::size_t>(j)] = t.log_prob_old;
        adv[static_cast<std::size_t>(j)] = targets.advantages[idx];
        ret[static_cast<std::size_t>(j)] = targets.returns[idx];
      }

      ActorBatchStats stats;
      auto [actor_loss, actor_grads] = gradients(agent.actor, obs, [&](const Matrix& logits) {
        return actor_loss_at_output(logits, actions, old_lp, adv, hyper.clip, hyper.entropy_weight,
                                    hyper.entropy_mode, &stats);
      });
      auto [critic_loss, critic_grads] =
          gradients(agent.critic, obs, [&](const Matrix& values) { return critic_loss_at_output(values, ret); });
      if (!std::isfinite(actor_loss) || !std::isfinite(critic_loss)) {
        throw NumericalError("PPO update diverged at update " + std::to_string(update_index) + ", epoch " +
                             std::to_string(epoch));
      }
      agent.actor_optimizer.step(agent.actor, actor_grads);
      agent.critic_optimizer.step(agent.critic, critic_grads);
      if (!agent.actor.all_finite() || !agent.critic.all_finite()) {
        throw NumericalError("PPO update produced non-finite parameters at update " + std::to_string(update_index));
      }
      trace.push_back({update_index, epoch, mb, actor_loss, critic_loss, stats.entropy, stats.clip_fraction});
    }
  }
  buffer.clear();
  return trace;
}

// Updates every agent from its own buffer.
inline std::vector<LossRecord> update_agents(std::span<PPOAgent> agents, std::span<ExperienceBuffer> buffers,
                                             const PPOHyper& hyper, std::mt19937_64& rng, int update_index = 0) {
  require(agents.size() == buffers.size(), "one buffer per agent");
  for (const auto& b : buffers) require(b.full(), "every agent's buffer must be full before an update");
  std::vector<LossRecord> all;
  for (std::size_t i = 0; i < agents.size(); ++i) {
    auto part = update_agent(agents[i], buffers[i], hyper, rng, update_index);
    all.insert(all.end(), part.begin(), part.end());
  }
  return all;
}

}  // namespace coadapt
