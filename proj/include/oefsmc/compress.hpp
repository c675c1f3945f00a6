#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "oefsmc/dataset.hpp"
#include "oefsmc/nn.hpp"

namespace oefsmc::compress {

// Dense and conv layers that feed another parametric layer. The
// classification head is never prunable.
std::vector<std::size_t> prunable_layers(const nn::Network& net);

// scores[k][j]: mean over class-j samples of the spatially averaged absolute
// post-activation of channel k. "Post-activation" is the output of the ReLU
// that directly follows the layer, or the layer output itself otherwise.
struct LayerImportance {
  std::size_t layer = 0;
  std::vector<std::vector<double>> scores;  // [C_l][K]
};

struct ChannelImportance {
  std::vector<LayerImportance> layers;
};

ChannelImportance per_class_importance(const nn::Network& net, const data::Dataset& data);

enum class WeightMode { paper_frequency, inverse_frequency };

std::string to_string(WeightMode mode);
WeightMode weight_mode_from_string(const std::string& name);

struct ClassWeights {
  std::vector<double> w;
};

// paper_frequency: w_j proportional to m_j (so w_j = m_j / M).
// inverse_frequency: w_j proportional to 1 / m_j.
ClassWeights frequency_weights(std::span<const std::size_t> counts, WeightMode mode);

struct LayerScores {
  std::size_t layer = 0;
  std::vector<double> scores;  // s_k = sum_j w_j s_kj
};

std::vector<LayerScores> aggregate_scores(const ChannelImportance& importance, const ClassWeights& weights);

struct LayerPlan {
  std::size_t layer = 0;
  std::size_t channels = 0;           // C_l before pruning
  std::vector<std::size_t> removed;  // sorted ascending
};

struct PruningPlan {
  double ratio = 0.0;
  std::vector<LayerPlan> layers;

  bool empty() const;
};

// Per layer, the floor(r C_l) lowest-scoring channels; equal scores prune
// the lower channel index first.
PruningPlan select_prune(std::span<const LayerScores> scores, double ratio);

// Drops the planned output channels and the matching input slices of the
// next parametric layer. Surviving weights are copied verbatim.
nn::Network apply_prune(const nn::Network& net, const PruningPlan& plan);

struct DistillationConfig {
  double lambda = 0.5;
  double temperature = 1.0;
  std::size_t epochs = 100;
  std::size_t batch_size = 32;
  double learning_rate = 0.01;
  double momentum = 0.9;
  std::uint64_t seed = 0;
};

struct JointLoss {
  double loss = 0.0;
  double few_term = 0.0;
  double ood_term = 0.0;
  nn::Gradients grads;
};

// lambda * KD(few) + (1 - lambda) * KD(aux) for precomputed teacher logits.
// A term whose weight is zero is skipped entirely.
JointLoss joint_distillation_objective(const nn::Network& student, const Tensor& few_x, const Tensor& few_teacher,
                                       const Tensor& aux_x, const Tensor& aux_teacher, double lambda,
                                       double temperature);

struct DistillResult {
  nn::Network student;
  std::vector<double> loss_history;  // mean step loss per epoch
};

// Mini-batch SGD on the joint objective. Each step pairs a batch of D_few
// with the next batch of D_aux (independent shuffles; D_aux cycles); an
// epoch is one pass over D_few.
DistillResult joint_distill(const nn::Network& teacher, nn::Network student, const data::Dataset& few,
                            const data::Dataset& aux, const DistillationConfig& cfg);

}  // namespace oefsmc::compress
