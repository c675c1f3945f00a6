#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <vector>

#include "oefsmc/dataset.hpp"
#include "oefsmc/nn.hpp"
#include "oefsmc/rebalance.hpp"

namespace oefsmc::finetune {

struct FinetuneConfig {
  double eta = 2.5;
  std::size_t epochs = 100;
  std::size_t patience = 10;
  std::size_t batch_size = 32;
  double learning_rate = 0.01;
  double momentum = 0.9;
  std::uint64_t seed = 0;
};

// Mean over D_aux of gamma[y~] * CE(f(x~), y~).
double regularization_loss(const nn::Network& net, const data::Dataset& aux, std::span<const double> gamma);

// Mean CE over D_few + eta * regularization_loss.
double total_loss(const nn::Network& net, const data::Dataset& few, const data::Dataset& aux,
                  std::span<const double> gamma, double eta);

struct ObjectiveValue {
  double loss = 0.0;
  double ce_term = 0.0;
  double reg_term = 0.0;
  nn::Gradients grads;
};

// Value and gradient of the fine-tuning objective on the given rows. The
// auxiliary term is skipped when eta is zero or no auxiliary rows are given.
ObjectiveValue finetune_objective(const nn::Network& net, const Tensor& few_x, std::span<const int> few_y,
                                  const Tensor& aux_x, std::span<const int> aux_y, std::span<const double> gamma,
                                  double eta);

struct EpochLog {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double reg_loss = 0.0;
  double val_top1 = 0.0;
};

struct FinetuneResult {
  nn::Network network;  // best-validation snapshot
  std::vector<EpochLog> log;
  std::size_t best_epoch = 0;
  double best_val = 0.0;
};

// Validation score of a network after a given epoch; defaults to top-1 on
// the validation set.
using ValidationMetric = std::function<double(const nn::Network&, std::size_t epoch)>;

struct FinetuneOptions {
  ValidationMetric metric;
  // When set, auxiliary labels are redrawn from this distribution at the
  // start of every epoch after the first.
  const rebalance::ComplementaryDistribution* relabel_each_epoch = nullptr;
};

// Mini-batch SGD with early stopping: stops once the validation score has
// not improved for `patience` epochs or the cap is reached, and returns the
// earliest best-scoring snapshot.
FinetuneResult finetune(nn::Network student, const data::Dataset& few, const data::Dataset& aux,
                        std::span<const double> gamma, const FinetuneConfig& cfg, const data::Dataset& validation,
                        const FinetuneOptions& options = {});

void write_epoch_log_csv(std::ostream& os, std::span<const EpochLog> log);

}  // namespace oefsmc::finetune
