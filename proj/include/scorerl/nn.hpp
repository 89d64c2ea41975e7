#pragma once

#include <Eigen/Dense>
#include <json.hpp>

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "scorerl/error.hpp"

namespace scorerl {

using Rng = std::mt19937_64;
using Index = Eigen::Index;

enum class Activation { relu, leaky_relu, tanh, identity };

inline constexpr double kLeakySlope = 0.01;

inline std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::relu: return "relu";
    case Activation::leaky_relu: return "leaky_relu";
    case Activation::tanh: return "tanh";
    case Activation::identity: return "identity";
  }
  return "identity";
}

inline Activation activation_from_string(std::string_view name) {
  if (name == "relu") return Activation::relu;
  if (name == "leaky_relu") return Activation::leaky_relu;
  if (name == "tanh") return Activation::tanh;
  if (name == "identity") return Activation::identity;
  throw ValidationError("unknown activation '" + std::string(name) + "'");
}

namespace detail {

inline Eigen::MatrixXd activate(const Eigen::MatrixXd& z, Activation a) {
  switch (a) {
    case Activation::relu: return z.cwiseMax(0.0);
    case Activation::leaky_relu:
      return z.unaryExpr([](double v) { return v > 0.0 ? v : kLeakySlope * v; });
    case Activation::tanh: return z.array().tanh().matrix();
    case Activation::identity: return z;
  }
  return z;
}

// Derivative of the activation, expressed through the pre-activation `z` and
// the activation output `y`.
inline Eigen::MatrixXd activation_slope(const Eigen::MatrixXd& z, const Eigen::MatrixXd& y,
                                        Activation a) {
  switch (a) {
    case Activation::relu:
      return z.unaryExpr([](double v) { return v > 0.0 ? 1.0 : 0.0; });
    case Activation::leaky_relu:
      return z.unaryExpr([](double v) { return v > 0.0 ? 1.0 : kLeakySlope; });
    case Activation::tanh: return (1.0 - y.array().square()).matrix();
    case Activation::identity: return Eigen::MatrixXd::Ones(z.rows(), z.cols());
  }
  return Eigen::MatrixXd::Ones(z.rows(), z.cols());
}

}  // namespace detail

struct DenseLayer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;    // out
  Activation activation = Activation::identity;

  Index in_dim() const { return weight.cols(); }
  Index out_dim() const { return weight.rows(); }
};

// Parameter-shaped container; also used for Adam moments.
struct Gradients {
  std::vector<Eigen::MatrixXd> weight;
  std::vector<Eigen::VectorXd> bias;

  std::size_t size() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l < weight.size(); ++l)
      n += static_cast<std::size_t>(weight[l].size() + bias[l].size());
    return n;
  }

  // Flat view in the same order as DenseNet::parameter().
  double flat(std::size_t i) const {
    for (std::size_t l = 0; l < weight.size(); ++l) {
      const auto nw = static_cast<std::size_t>(weight[l].size());
      if (i < nw) {
        const auto cols = static_cast<std::size_t>(weight[l].cols());
        return weight[l](static_cast<Index>(i / cols), static_cast<Index>(i % cols));
      }
      i -= nw;
      const auto nb = static_cast<std::size_t>(bias[l].size());
      if (i < nb) return bias[l](static_cast<Index>(i));
      i -= nb;
    }
    throw std::out_of_range("gradient index out of range");
  }

  bool all_finite() const {
    for (std::size_t l = 0; l < weight.size(); ++l)
      if (!weight[l].allFinite() || !bias[l].allFinite()) return false;
    return true;
  }

  bool all_zero() const {
    for (std::size_t l = 0; l < weight.size(); ++l)
      if (!weight[l].isZero(0.0) || !bias[l].isZero(0.0)) return false;
    return true;
  }

  Gradients& operator+=(const Gradients& other) {
    for (std::size_t l = 0; l < weight.size(); ++l) {
      weight[l] += other.weight[l];
      bias[l] += other.bias[l];
    }
    return *this;
  }
};

// Activations recorded by forward_cached(); columns are samples.
struct ForwardCache {
  std::vector<Eigen::MatrixXd> inputs;       // input to layer l
  std::vector<Eigen::MatrixXd> pre;          // W x + b of layer l
  std::vector<Eigen::MatrixXd> activations;  // output of layer l

  const Eigen::MatrixXd& output() const { return activations.back(); }
};

struct BackwardResult {
  Gradients params;
  Eigen::MatrixXd input;  // d loss / d input, same shape as the forward input
};

class DenseNet {
 public:
  DenseNet() = default;

  explicit DenseNet(std::vector<DenseLayer> layers) : layers_(std::move(layers)) {
    if (layers_.empty()) throw ValidationError("network needs at least one layer");
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      const auto& layer = layers_[l];
      if (layer.out_dim() <= 0 || layer.in_dim() <= 0)
        throw ValidationError("layer dimensions must be positive");
      if (layer.bias.size() != layer.out_dim())
        throw ValidationError("bias length does not match layer output");
      if (l > 0 && layers_[l - 1].out_dim() != layer.in_dim())
        throw ValidationError("layer dimensions do not chain");
    }
    if (!all_finite()) throw ValidationError("network parameters must be finite");
  }

  // Fully connected stack `input -> hidden... -> output`, weights and biases
  // drawn from U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
  static DenseNet mlp(Index input_dim, const std::vector<Index>& hidden, Index output_dim,
                      Activation hidden_activation, Activation output_activation, Rng& rng) {
    std::vector<DenseLayer> layers;
    Index fan_in = input_dim;
    auto make = [&](Index out, Activation act) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
      std::uniform_real_distribution<double> init(-bound, bound);
      DenseLayer layer;
      layer.weight.resize(out, fan_in);
      // Row-major fill so the draw order matches the JSON layout.
      for (Index r = 0; r < out; ++r)
        for (Index c = 0; c < fan_in; ++c) layer.weight(r, c) = init(rng);
      layer.bias.resize(out);
      for (Index r = 0; r < out; ++r) layer.bias(r) = init(rng);
      layer.activation = act;
      layers.push_back(std::move(layer));
      fan_in = out;
    };
    for (Index h : hidden) make(h, hidden_activation);
    make(output_dim, output_activation);
    return DenseNet(std::move(layers));
  }

  Index input_dim() const { return layers_.front().in_dim(); }
  Index output_dim() const { return layers_.back().out_dim(); }
  const std::vector<DenseLayer>& layers() const { return layers_; }
  std::vector<DenseLayer>& layers() { return layers_; }

  Eigen::VectorXd forward(const Eigen::VectorXd& x) const {
    if (x.size() != input_dim())
      throw ValidationError("forward: expected input of length " + std::to_string(input_dim()) +
                            ", got " + std::to_string(x.size()));
    Eigen::VectorXd h = x;
    for (const auto& layer : layers_) {
      Eigen::VectorXd z = layer.weight * h + layer.bias;
      h = detail::activate(z, layer.activation);
    }
    return h;
  }

  // Columns of `x` are independent samples.
  Eigen::MatrixXd forward_batch(const Eigen::MatrixXd& x) const {
    check_batch(x);
    Eigen::MatrixXd h = x;
    for (const auto& layer : layers_) {
      Eigen::MatrixXd z = layer.weight * h;
      z.colwise() += layer.bias;
      h = detail::activate(z, layer.activation);
    }
    return h;
  }

  ForwardCache forward_cached(const Eigen::MatrixXd& x) const {
    check_batch(x);
    ForwardCache cache;
    cache.inputs.reserve(layers_.size());
    cache.pre.reserve(layers_.size());
    cache.activations.reserve(layers_.size());
    const Eigen::MatrixXd* h = &x;
    for (const auto& layer : layers_) {
      cache.inputs.push_back(*h);
      Eigen::MatrixXd z = layer.weight * *h;
      z.colwise() += layer.bias;
      cache.activations.push_back(detail::activate(z, layer.activation));
      cache.pre.push_back(std::move(z));
      h = &cache.activations.back();
    }
    return cache;
  }

  // Reverse-mode pass. `upstream` is d loss / d output for every column of
  // the cached batch; parameter gradients are summed over columns. With
  // `want_params` false only the input gradient is produced.
  BackwardResult backward(const ForwardCache& cache, const Eigen::MatrixXd& upstream,
                          bool want_params = true) const {
    if (upstream.rows() != output_dim() || upstream.cols() != cache.output().cols())
      throw ValidationError("backward: upstream gradient shape mismatch");
    BackwardResult result;
    const std::size_t n = layers_.size();
    result.params.weight.resize(n);
    result.params.bias.resize(n);
    Eigen::MatrixXd delta = upstream;
    for (std::size_t k = n; k-- > 0;) {
      const auto& layer = layers_[k];
      delta.array() *=
          detail::activation_slope(cache.pre[k], cache.activations[k], layer.activation).array();
      if (want_params) {
        result.params.weight[k].noalias() = delta * cache.inputs[k].transpose();
        result.params.bias[k] = delta.rowwise().sum();
      }
      Eigen::MatrixXd next = layer.weight.transpose() * delta;
      delta = std::move(next);
    }
    result.input = std::move(delta);
    return result;
  }

  BackwardResult backward(const Eigen::VectorXd& x, const Eigen::VectorXd& upstream) const {
    if (x.size() != input_dim()) throw ValidationError("backward: input length mismatch");
    if (upstream.size() != output_dim())
      throw ValidationError("backward: upstream gradient length mismatch");
    return backward(forward_cached(x), Eigen::MatrixXd(upstream));
  }

  Gradients zero_like() const {
    Gradients g;
    for (const auto& layer : layers_) {
      g.weight.push_back(Eigen::MatrixXd::Zero(layer.out_dim(), layer.in_dim()));
      g.bias.push_back(Eigen::VectorXd::Zero(layer.out_dim()));
    }
    return g;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& layer : layers_)
      n += static_cast<std::size_t>(layer.weight.size() + layer.bias.size());
    return n;
  }

  // Flat parameter access: per layer, W row-major then b.
  double& parameter(std::size_t i) {
    for (auto& layer : layers_) {
      const auto nw = static_cast<std::size_t>(layer.weight.size());
      if (i < nw) {
        const auto cols = static_cast<std::size_t>(layer.weight.cols());
        return layer.weight(static_cast<Index>(i / cols), static_cast<Index>(i % cols));
      }
      i -= nw;
      const auto nb = static_cast<std::size_t>(layer.bias.size());
      if (i < nb) return layer.bias(static_cast<Index>(i));
      i -= nb;
    }
    throw std::out_of_range("parameter index out of range");
  }

  double parameter(std::size_t i) const { return const_cast<DenseNet*>(this)->parameter(i); }

  bool all_finite() const {
    for (const auto& layer : layers_)
      if (!layer.weight.allFinite() || !layer.bias.allFinite()) return false;
    return true;
  }

  friend bool operator==(const DenseNet& a, const DenseNet& b) {
    if (a.layers_.size() != b.layers_.size()) return false;
    for (std::size_t l = 0; l < a.layers_.size(); ++l) {
      const auto& x = a.layers_[l];
      const auto& y = b.layers_[l];
      if (x.activation != y.activation || x.weight.rows() != y.weight.rows() ||
          x.weight.cols() != y.weight.cols() || x.weight != y.weight || x.bias != y.bias)
        return false;
    }
    return true;
  }

 private:
  void check_batch(const Eigen::MatrixXd& x) const {
    if (layers_.empty()) throw ValidationError("network is empty");
    if (x.rows() != input_dim())
      throw ValidationError("forward: expected " + std::to_string(input_dim()) +
                            " input rows, got " + std::to_string(x.rows()));
  }

  std::vector<DenseLayer> layers_;
};

// ---------------------------------------------------------------------------
// Adam

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  AdamConfig config;
  Gradients first_moment;
  Gradients second_moment;
  std::int64_t step_count = 0;
};

inline AdamState make_adam_state(const DenseNet& net, AdamConfig config = {}) {
  return AdamState{config, net.zero_like(), net.zero_like(), 0};
}

namespace detail {

template <class Param, class Grad, class Moment>
void adam_apply(Param& p, const Grad& g, Moment& m, Moment& v, const AdamConfig& c,
                double bias1, double bias2) {
  m.array() = c.beta1 * m.array() + (1.0 - c.beta1) * g.array();
  v.array() = c.beta2 * v.array() + (1.0 - c.beta2) * g.array().square();
  p.array() -= c.learning_rate * (m.array() / bias1) /
               ((v.array() / bias2).sqrt() + c.epsilon);
}

}  // namespace detail

// Bias-corrected Adam. Throws DivergenceError (and leaves `net` and `state`
// untouched) when any gradient is non-finite.
inline void adam_step(DenseNet& net, const Gradients& grads, AdamState& state,
                      const std::string& source = "adam") {
  auto& layers = net.layers();
  if (grads.weight.size() != layers.size() || grads.bias.size() != layers.size())
    throw ValidationError("adam_step: gradient layer count mismatch");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    if (grads.weight[l].rows() != layers[l].weight.rows() ||
        grads.weight[l].cols() != layers[l].weight.cols() ||
        grads.bias[l].size() != layers[l].bias.size())
      throw ValidationError("adam_step: gradient shape mismatch");
  }
  if (!grads.all_finite()) throw DivergenceError(source, "non-finite gradient");

  state.step_count += 1;
  const auto t = static_cast<double>(state.step_count);
  const double bias1 = 1.0 - std::pow(state.config.beta1, t);
  const double bias2 = 1.0 - std::pow(state.config.beta2, t);
  for (std::size_t l = 0; l < layers.size(); ++l) {
    detail::adam_apply(layers[l].weight, grads.weight[l], state.first_moment.weight[l],
                       state.second_moment.weight[l], state.config, bias1, bias2);
    detail::adam_apply(layers[l].bias, grads.bias[l], state.first_moment.bias[l],
                       state.second_moment.bias[l], state.config, bias1, bias2);
  }
}

// Adam on a single scalar parameter (SAC's log-temperature).
struct ScalarAdam {
  AdamConfig config;
  double first_moment = 0.0;
  double second_moment = 0.0;
  std::int64_t step_count = 0;

  void step(double& param, double grad, const std::string& source = "adam") {
    if (!std::isfinite(grad)) throw DivergenceError(source, "non-finite gradient");
    step_count += 1;
    const auto t = static_cast<double>(step_count);
    first_moment = config.beta1 * first_moment + (1.0 - config.beta1) * grad;
    second_moment = config.beta2 * second_moment + (1.0 - config.beta2) * grad * grad;
    const double m_hat = first_moment / (1.0 - std::pow(config.beta1, t));
    const double v_hat = second_moment / (1.0 - std::pow(config.beta2, t));
    param -= config.learning_rate * m_hat / (std::sqrt(v_hat) + config.epsilon);
  }
};

// ---------------------------------------------------------------------------
// JSON snapshots: {"layer_0": {"W": [row-major], "b": [...], "activation": "..."}, ...}

inline nlohmann::json to_json(const DenseNet& net) {
  nlohmann::json out = nlohmann::json::object();
  const auto& layers = net.layers();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& layer = layers[l];
    std::vector<double> w;
    w.reserve(static_cast<std::size_t>(layer.weight.size()));
    for (Index r = 0; r < layer.weight.rows(); ++r)
      for (Index c = 0; c < layer.weight.cols(); ++c) w.push_back(layer.weight(r, c));
    std::vector<double> b(layer.bias.data(), layer.bias.data() + layer.bias.size());
    out["layer_" + std::to_string(l)] = {
        {"W", std::move(w)}, {"b", std::move(b)}, {"activation", to_string(layer.activation)}};
  }
  return out;
}

inline DenseNet dense_net_from_json(const nlohmann::json& j) {
  if (!j.is_object() || j.empty()) throw ValidationError("network snapshot must be an object");
  std::vector<DenseLayer> layers(j.size());
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const std::string key = "layer_" + std::to_string(l);
    if (!j.contains(key)) throw ValidationError("network snapshot is missing " + key);
    const auto& entry = j.at(key);
    const auto w = entry.at("W").get<std::vector<double>>();
    const auto b = entry.at("b").get<std::vector<double>>();
    if (b.empty() || w.size() % b.size() != 0)
      throw ValidationError(key + ": W size is not a multiple of b size");
    const auto out = static_cast<Index>(b.size());
    const auto in = static_cast<Index>(w.size() / b.size());
    auto& layer = layers[l];
    layer.weight.resize(out, in);
    for (Index r = 0; r < out; ++r)
      for (Index c = 0; c < in; ++c) layer.weight(r, c) = w[static_cast<std::size_t>(r * in + c)];
    layer.bias = Eigen::Map<const Eigen::VectorXd>(b.data(), out);
    layer.activation = activation_from_string(entry.at("activation").get<std::string>());
  }
  return DenseNet(std::move(layers));
}

}  // namespace scorerl
