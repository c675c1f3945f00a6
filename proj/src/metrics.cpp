#include "oefsmc/metrics.hpp"

#include <cmath>

#include "oefsmc/error.hpp"

namespace oefsmc::harness {

double Evaluation::mean_recall(std::span<const std::size_t> classes) const {
  double sum = 0.0;
  std::size_t n = 0;
  for (auto j : classes) {
    if (j < recall.size() && recall[j]) {
      sum += *recall[j];
      ++n;
    }
  }
  return n ? sum / static_cast<double>(n) : std::nan("");
}

std::vector<std::size_t> predict(const nn::Network& net, const Tensor& features) {
  const Tensor logits = nn::predict_logits(net, features);
  std::vector<std::size_t> out(logits.dim(0));
  for (std::size_t r = 0; r < out.size(); ++r) {
    const auto z = logits.row(r);
    std::size_t best = 0;
    for (std::size_t j = 1; j < z.size(); ++j)
      if (z[j] > z[best]) best = j;
    out[r] = best;
  }
  return out;
}

Evaluation evaluate(const nn::Network& net, const data::Dataset& test) {
  if (!test.has_labels) throw DomainError("evaluation needs labeled data");
  if (test.empty()) throw DomainError("evaluation needs a nonempty test set");
  const auto pred = predict(net, test.features);
  const std::size_t k = test.num_classes;
  std::vector<std::size_t> hits(k, 0), totals(k, 0);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const auto y = static_cast<std::size_t>(test.labels[i]);
    ++totals[y];
    if (pred[i] == y) {
      ++hits[y];
      ++correct;
    }
  }
  Evaluation ev;
  ev.top1 = static_cast<double>(correct) / static_cast<double>(pred.size());
  ev.recall.resize(k);
  for (std::size_t j = 0; j < k; ++j) {
    if (totals[j]) ev.recall[j] = static_cast<double>(hits[j]) / static_cast<double>(totals[j]);
  }
  return ev;
}

}  // namespace oefsmc::harness
