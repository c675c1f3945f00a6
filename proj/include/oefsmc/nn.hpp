#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "oefsmc/tensor.hpp"

namespace oefsmc::nn {

// Floor applied to probabilities inside every log term.
inline constexpr double kProbEpsilon = 1e-12;

enum class LayerKind { dense, conv2d, relu, max_pool, flatten, softmax_head };

std::string to_string(LayerKind kind);
LayerKind layer_kind_from_string(const std::string& name);

// Per-kind dimensions:
//   dense / softmax_head: in, out features
//   conv2d: in, out channels; square kernel, stride, zero padding
//   max_pool: square window `kernel` with stride equal to the window
struct LayerSpec {
  LayerKind kind = LayerKind::relu;
  std::size_t in = 0;
  std::size_t out = 0;
  std::size_t kernel = 0;
  std::size_t stride = 1;
  std::size_t padding = 0;

  static LayerSpec dense(std::size_t in, std::size_t out) { return {LayerKind::dense, in, out, 0, 1, 0}; }
  static LayerSpec head(std::size_t in, std::size_t classes) {
    return {LayerKind::softmax_head, in, classes, 0, 1, 0};
  }
  static LayerSpec conv2d(std::size_t in_ch, std::size_t out_ch, std::size_t kernel, std::size_t stride = 1,
                          std::size_t padding = 0) {
    return {LayerKind::conv2d, in_ch, out_ch, kernel, stride, padding};
  }
  static LayerSpec relu() { return {LayerKind::relu, 0, 0, 0, 1, 0}; }
  static LayerSpec max_pool(std::size_t window) { return {LayerKind::max_pool, 0, 0, window, window, 0}; }
  static LayerSpec flatten() { return {LayerKind::flatten, 0, 0, 0, 1, 0}; }

  bool has_params() const {
    return kind == LayerKind::dense || kind == LayerKind::conv2d || kind == LayerKind::softmax_head;
  }

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

struct Layer {
  LayerSpec spec;
  Tensor weight;  // dense/head: [out, in]; conv2d: [out, in, k, k]
  Tensor bias;    // [out]
};

enum class NetworkRole { teacher, student };

// Per-sample output shape of every layer; throws ShapeError naming the
// first layer whose input does not compose.
std::vector<Shape> infer_shapes(const Shape& input_shape, std::span<const LayerSpec> specs);

std::size_t parameter_count(const Shape& input_shape, std::span<const LayerSpec> specs);

class Network {
 public:
  // Fresh network with seeded fan-in-scaled uniform weights and zero biases.
  Network(Shape input_shape, std::vector<LayerSpec> specs, NetworkRole role, std::uint64_t seed);
  // Network from explicit parameters; shapes are validated.
  Network(Shape input_shape, std::vector<Layer> layers, NetworkRole role);

  const Shape& input_shape() const { return input_shape_; }
  std::size_t num_layers() const { return layers_.size(); }
  std::span<const Layer> layers() const { return layers_; }
  const Layer& layer(std::size_t i) const { return layers_.at(i); }
  std::vector<LayerSpec> specs() const;

  // Parameter tensors are mutable in place; their shapes are fixed.
  Tensor& weight(std::size_t i) { return layers_.at(i).weight; }
  Tensor& bias(std::size_t i) { return layers_.at(i).bias; }

  const Shape& output_shape(std::size_t i) const { return shapes_.at(i); }
  std::size_t num_classes() const { return shapes_.back()[0]; }
  std::size_t parameter_count() const;

  NetworkRole role() const { return role_; }
  void set_role(NetworkRole role) { role_ = role; }

  friend bool operator==(const Network& a, const Network& b) {
    if (a.input_shape_ != b.input_shape_ || a.layers_.size() != b.layers_.size()) return false;
    for (std::size_t i = 0; i < a.layers_.size(); ++i) {
      const auto &x = a.layers_[i], &y = b.layers_[i];
      if (!(x.spec == y.spec) || !(x.weight == y.weight) || !(x.bias == y.bias)) return false;
    }
    return true;
  }

 private:
  void validate();

  Shape input_shape_;
  std::vector<Layer> layers_;
  std::vector<Shape> shapes_;
  NetworkRole role_;
};

// Everything backward needs from a forward pass.
struct Trace {
  // activations[0] is the input batch; activations[l + 1] is layer l's output.
  std::vector<Tensor> activations;
  // Flat input offset of the winning element for every max-pool output.
  std::vector<std::vector<std::size_t>> pool_argmax;

  bool empty() const { return activations.empty(); }
};

struct ForwardResult {
  Tensor logits;  // [batch, K]
  Trace trace;    // populated only when requested
};

ForwardResult forward(const Network& net, const Tensor& batch, bool keep_trace = false);

inline Tensor predict_logits(const Network& net, const Tensor& batch) { return forward(net, batch).logits; }

struct Gradients {
  std::vector<Tensor> weight;
  std::vector<Tensor> bias;

  static Gradients zeros_like(const Network& net);
  void add_scaled(const Gradients& other, double scale);
  double squared_norm() const;
  bool all_finite() const;
};

// Reverse pass for a loss whose gradient w.r.t. the logits is `dlogits`.
Gradients backward(const Network& net, const Trace& trace, const Tensor& dlogits);

std::vector<double> softmax(std::span<const double> logits, double temperature = 1.0);
double cross_entropy(std::span<const double> probabilities, std::size_t label);
double kl_divergence(std::span<const double> p_teacher, std::span<const double> p_student);

struct LossAndGrad {
  double loss = 0.0;
  Tensor dlogits;
};

// Batch mean of weight[y_i] * CE(softmax(z_i), y_i). Empty `class_weights`
// means unit weight for every class.
LossAndGrad cross_entropy_loss(const Tensor& logits, std::span<const int> labels,
                               std::span<const double> class_weights = {});

// Batch mean of T^2 * KL(softmax(t_i / T) || softmax(s_i / T)).
LossAndGrad distillation_loss(const Tensor& teacher_logits, const Tensor& student_logits, double temperature = 1.0);

struct OptimizerState {
  double learning_rate = 0.01;
  double momentum = 0.9;
  Gradients velocity;
};

OptimizerState make_optimizer(const Network& net, double learning_rate, double momentum);

// v <- mu * v - lr * g; theta <- theta + v. Refuses non-finite gradients.
void sgd_step(OptimizerState& state, Network& net, const Gradients& grads);

void save_network(const Network& net, const std::filesystem::path& path);
Network load_network(const std::filesystem::path& path);

}  // namespace oefsmc::nn
