#pragma once

#include <optional>
#include <span>
#include <vector>

#include "oefsmc/dataset.hpp"
#include "oefsmc/nn.hpp"

namespace oefsmc::harness {

struct Evaluation {
  double top1 = 0.0;
  // recall[j] is empty when class j has no test samples.
  std::vector<std::optional<double>> recall;

  // Mean of the defined recalls among `classes`; NaN when none is defined.
  double mean_recall(std::span<const std::size_t> classes) const;
};

// Top-1 accuracy and per-class recall; argmax ties go to the lower class.
Evaluation evaluate(const nn::Network& net, const data::Dataset& test);

std::vector<std::size_t> predict(const nn::Network& net, const Tensor& features);

}  // namespace oefsmc::harness
