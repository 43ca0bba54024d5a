#pragma once

// Three-layer perceptrons for the actor and critic heads, with hand-written
// reverse-mode gradients.
//
// Samples are stored column-wise: an input batch is (input_dim x batch).

#include <Eigen/Dense>

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <ostream>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "coadapt/error.hpp"

namespace coadapt {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

enum class Head { Softmax, Value };

inline const char* head_name(Head head) { return head == Head::Softmax ? "softmax" : "value"; }

struct Layer {
  Matrix weight;  // out x in
  Vector bias;    // out
};

struct MLPParams {
  std::vector<Layer> layers;
  Head head = Head::Value;

  std::size_t input_dim() const { return static_cast<std::size_t>(layers.front().weight.cols()); }
  std::size_t output_dim() const { return static_cast<std::size_t>(layers.back().weight.rows()); }

  std::vector<std::size_t> layer_sizes() const {
    std::vector<std::size_t> sizes{input_dim()};
    for (const auto& l : layers) sizes.push_back(static_cast<std::size_t>(l.weight.rows()));
    return sizes;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
    return n;
  }

  bool all_finite() const {
    for (const auto& l : layers) {
      if (!l.weight.allFinite() || !l.bias.allFinite()) return false;
    }
    return true;
  }

  // Zero-valued parameters with the same shapes.
  MLPParams zeros_like() const {
    MLPParams z;
    z.head = head;
    for (const auto& l : layers) z.layers.push_back({Matrix::Zero(l.weight.rows(), l.weight.cols()), Vector::Zero(l.bias.size())});
    return z;
  }

  // Visits every scalar parameter in checkpoint order (per layer: weight row-major, then bias).
  template <typename F>
  void for_each(F&& f) {
    for (auto& l : layers) {
      for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
        for (Eigen::Index c = 0; c < l.weight.cols(); ++c) f(l.weight(r, c));
      for (Eigen::Index i = 0; i < l.bias.size(); ++i) f(l.bias(i));
    }
  }
  template <typename F>
  void for_each(F&& f) const {
    for (const auto& l : layers) {
      for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
        for (Eigen::Index c = 0; c < l.weight.cols(); ++c) f(l.weight(r, c));
      for (Eigen::Index i = 0; i < l.bias.size(); ++i) f(l.bias(i));
    }
  }

  friend bool operator==(const MLPParams& a, const MLPParams& b) {
    if (a.head != b.head || a.layers.size() != b.layers.size()) return false;
    for (std::size_t i = 0; i < a.layers.size(); ++i) {
      const auto& x = a.layers[i];
      const auto& y = b.layers[i];
      if (x.weight.rows() != y.weight.rows() || x.weight.cols() != y.weight.cols() || x.weight != y.weight ||
          x.bias != y.bias)
        return false;
    }
    return true;
  }
};

inline constexpr double kProbabilityFloor = 1e-8;
inline constexpr std::size_t kDefaultHidden = 64;

// Uniform(-a, a) with a = gain / sqrt(fan_in), zero biases. The output layer
// uses a small gain so a fresh actor is close to uniform.
inline MLPParams init_params(std::uint64_t seed, const std::vector<std::size_t>& layer_sizes, Head head,
                             double output_gain = 0.01) {
  require(layer_sizes.size() == 4, "a three-layer network needs four layer sizes");
  for (auto n : layer_sizes) require(n > 0, "layer sizes must be positive");
  std::mt19937_64 rng(seed);
  MLPParams p;
  p.head = head;
  for (std::size_t i = 0; i + 1 < layer_sizes.size(); ++i) {
    const auto in = static_cast<Eigen::Index>(layer_sizes[i]);
    const auto out = static_cast<Eigen::Index>(layer_sizes[i + 1]);
    const bool last = i + 2 == layer_sizes.size();
    const double bound = (last ? output_gain : 1.0) * std::sqrt(3.0 / static_cast<double>(in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Layer layer{Matrix(out, in), Vector::Zero(out)};
    for (Eigen::Index r = 0; r < out; ++r)
      for (Eigen::Index c = 0; c < in; ++c) layer.weight(r, c) = dist(rng);
    p.layers.push_back(std::move(layer));
  }
  return p;
}

// Activations kept for the backward pass.
struct ForwardCache {
  std::vector<Matrix> inputs;  // input to each layer
  Matrix output;               // raw network output (logits or values), out x batch
};

inline ForwardCache forward_batch(const MLPParams& params, const Matrix& x) {
  if (static_cast<std::size_t>(x.rows()) != params.input_dim()) {
    throw InvalidArgument("observation dimension " + std::to_string(x.rows()) + " does not match network input " +
                          std::to_string(params.input_dim()));
  }
  ForwardCache cache;
  Matrix h = x;
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    const auto& l = params.layers[i];
    cache.inputs.push_back(h);
    Matrix z = l.weight * h;
    z.colwise() += l.bias;
    if (i + 1 < params.layers.size()) {
      h = z.array().tanh().matrix();
    } else {
      cache.output = std::move(z);
    }
  }
  return cache;
}

inline Matrix as_column(std::span<const double> obs) {
  Matrix x(static_cast<Eigen::Index>(obs.size()), 1);
  for (std::size_t i = 0; i < obs.size(); ++i) x(static_cast<Eigen::Index>(i), 0) = obs[i];
  return x;
}

struct ActionDistribution {
  std::vector<double> probabilities;
  std::vector<double> log_probabilities;

  std::size_t size() const { return probabilities.size(); }
};

// Softmax mixed with a uniform floor: p = (1 - Y*floor) * softmax(z) + floor.
inline ActionDistribution distribution_from_logits(const Eigen::Ref<const Vector>& logits,
                                                   double floor = kProbabilityFloor) {
  const auto y = logits.size();
  const double max = logits.maxCoeff();
  Vector e = (logits.array() - max).exp().matrix();
  const double total = e.sum();
  ActionDistribution d;
  d.probabilities.resize(static_cast<std::size_t>(y));
  d.log_probabilities.resize(static_cast<std::size_t>(y));
  const double scale = 1.0 - static_cast<double>(y) * floor;
  for (Eigen::Index i = 0; i < y; ++i) {
    const double p = scale * e(i) / total + floor;
    d.probabilities[static_cast<std::size_t>(i)] = p;
    d.log_probabilities[static_cast<std::size_t>(i)] = std::log(p);
  }
  return d;
}

inline ActionDistribution actor_forward(const MLPParams& params, std::span<const double> obs) {
  require(params.head == Head::Softmax, "actor_forward needs a softmax network");
  const ForwardCache cache = forward_batch(params, as_column(obs));
  return distribution_from_logits(cache.output.col(0));
}

inline double critic_forward(const MLPParams& params, std::span<const double> obs) {
  require(params.head == Head::Value && params.output_dim() == 1, "critic_forward needs a scalar value network");
  return forward_batch(params, as_column(obs)).output(0, 0);
}

struct SampledAction {
  int index = 0;
  double log_prob = 0.0;
};

// Inverse-CDF draw from one uniform variate.
inline SampledAction sample_action(const ActionDistribution& dist, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double u = unit(rng);
  double cumulative = 0.0;
  std::size_t index = dist.size() - 1;
  for (std::size_t i = 0; i < dist.size(); ++i) {
    cumulative += dist.probabilities[i];
    if (u < cumulative) {
      index = i;
      break;
    }
  }
  return {static_cast<int>(index), dist.log_probabilities[index]};
}

inline SampledAction greedy_action(const ActionDistribution& dist) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < dist.size(); ++i)
    if (dist.probabilities[i] > dist.probabilities[best]) best = i;
  return {static_cast<int>(best), dist.log_probabilities[best]};
}

// Reverse pass given dL/d(output) for every sample (out x batch).
inline MLPParams backward_batch(const MLPParams& params, const ForwardCache& cache, const Matrix& output_grad) {
  MLPParams grads = params.zeros_like();
  Matrix delta = output_grad;
  for (std::size_t i = params.layers.size(); i-- > 0;) {
    const Matrix& input = cache.inputs[i];
    grads.layers[i].weight = delta * input.transpose();
    grads.layers[i].bias = delta.rowwise().sum();
    if (!grads.layers[i].weight.allFinite() || !grads.layers[i].bias.allFinite()) {
      throw NumericalError("non-finite gradient in layer " + std::to_string(i));
    }
    if (i > 0) {
      // input of layer i is tanh output of layer i-1
      delta = (params.layers[i].weight.transpose() * delta).cwiseProduct((1.0 - input.array().square()).matrix());
    }
  }
  return grads;
}

// Loss evaluated at the network output for a batch: total loss and dL/d(output).
struct OutputLoss {
  double loss = 0.0;
  Matrix output_grad;
};

// Gradient of loss_at_output(outputs) with respect to every network parameter.
template <typename LossAtOutput>
std::pair<double, MLPParams> gradients(const MLPParams& params, const Matrix& inputs, LossAtOutput&& loss_at_output) {
  const ForwardCache cache = forward_batch(params, inputs);
  if (!cache.output.allFinite()) throw NumericalError("non-finite network output in layer " +
                                                      std::to_string(params.layers.size() - 1));
  OutputLoss l = loss_at_output(cache.output);
  if (!std::isfinite(l.loss)) throw NumericalError("non-finite loss value");
  return {l.loss, backward_batch(params, cache, l.output_grad)};
}

// ---------------------------------------------------------------------------
// Checkpoints
//
//   coadapt-mlp 1
//   head <softmax|value>
//   sizes <n0> <n1> <n2> <n3>
//   <layer 0 weights, row-major, space separated>
//   <layer 0 biases>
//   ... one weight line and one bias line per layer
//
// Values are written as shortest round-trip decimals.

inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view text) {
  double v = 0.0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    throw InvalidArgument("not a number: '" + std::string(text) + "'");
  }
  return v;
}

inline void write_checkpoint(std::ostream& os, const MLPParams& params) {
  os << "coadapt-mlp 1\n";
  os << "head " << head_name(params.head) << "\n";
  os << "sizes";
  for (auto n : params.layer_sizes()) os << ' ' << n;
  os << '\n';
  for (const auto& l : params.layers) {
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) os << (r == 0 && c == 0 ? "" : " ") << format_double(l.weight(r, c));
    os << '\n';
    for (Eigen::Index i = 0; i < l.bias.size(); ++i) os << (i == 0 ? "" : " ") << format_double(l.bias(i));
    os << '\n';
  }
}

inline MLPParams read_checkpoint(std::istream& is) {
  std::string magic;
  int version = 0;
  is >> magic >> version;
  require(is && magic == "coadapt-mlp" && version == 1, "not a coadapt-mlp v1 checkpoint");
  std::string key, head;
  is >> key >> head;
  require(is && key == "head" && (head == "softmax" || head == "value"), "checkpoint: bad head line");
  is >> key;
  require(is && key == "sizes", "checkpoint: missing sizes line");
  std::string rest;
  std::getline(is, rest);
  std::istringstream sizes_line(rest);
  std::vector<std::size_t> sizes;
  for (std::size_t n; sizes_line >> n;) sizes.push_back(n);
  require(sizes.size() >= 2, "checkpoint: need at least two layer sizes");

  MLPParams p;
  p.head = head == "softmax" ? Head::Softmax : Head::Value;
  for (std::size_t i = 0; i + 1 < sizes.size(); ++i) {
    p.layers.push_back({Matrix(static_cast<Eigen::Index>(sizes[i + 1]), static_cast<Eigen::Index>(sizes[i])),
                        Vector(static_cast<Eigen::Index>(sizes[i + 1]))});
  }
  p.for_each([&](double& v) {
    std::string token;
    is >> token;
    require(static_cast<bool>(is), "checkpoint: truncated parameter list");
    v = parse_double(token);
  });
  require(p.all_finite(), "checkpoint: non-finite parameter");
  return p;
}

inline void save_checkpoint(const std::string& path, const MLPParams& params) {
  std::ofstream os(path, std::ios::binary);
  require(static_cast<bool>(os), "cannot open checkpoint for writing: " + path);
  write_checkpoint(os, params);
}

inline MLPParams load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  require(static_cast<bool>(is), "cannot open checkpoint: " + path);
  return read_checkpoint(is);
}

}  // namespace coadapt
