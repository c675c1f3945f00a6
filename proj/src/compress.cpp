#include "oefsmc/compress.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "oefsmc/batching.hpp"
#include "oefsmc/error.hpp"

namespace oefsmc::compress {

namespace {

using nn::LayerKind;

constexpr std::size_t kScoringChunk = 256;

std::size_t next_param_layer(const nn::Network& net, std::size_t l) {
  for (std::size_t n = l + 1; n < net.num_layers(); ++n) {
    if (net.layer(n).spec.has_params()) return n;
  }
  return net.num_layers();
}

// Index of the activation (in trace.activations) that holds layer l's
// post-activation output.
std::size_t post_activation_index(const nn::Network& net, std::size_t l) {
  if (l + 1 < net.num_layers() && net.layer(l + 1).spec.kind == LayerKind::relu) return l + 2;
  return l + 1;
}

}  // namespace

std::vector<std::size_t> prunable_layers(const nn::Network& net) {
  std::vector<std::size_t> out;
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    const auto kind = net.layer(l).spec.kind;
    if ((kind == LayerKind::dense || kind == LayerKind::conv2d) && next_param_layer(net, l) < net.num_layers()) {
      out.push_back(l);
    }
  }
  return out;
}

ChannelImportance per_class_importance(const nn::Network& net, const data::Dataset& data) {
  if (!data.has_labels) throw DomainError("per-class importance needs labeled data");
  const std::size_t k = data.num_classes;
  const auto layers = prunable_layers(net);
  ChannelImportance imp;
  std::vector<std::vector<std::vector<double>>> sums;
  for (std::size_t l : layers) {
    const std::size_t c = net.output_shape(l)[0];
    imp.layers.push_back({l, std::vector<std::vector<double>>(c, std::vector<double>(k, 0.0))});
  }
  const auto counts = data.class_counts();
  for (std::size_t start = 0; start < data.size(); start += kScoringChunk) {
    std::vector<std::size_t> rows(std::min(kScoringChunk, data.size() - start));
    std::iota(rows.begin(), rows.end(), start);
    const auto fr = nn::forward(net, gather_rows(data.features, rows), true);
    for (auto& li : imp.layers) {
      const Tensor& act = fr.trace.activations[post_activation_index(net, li.layer)];
      const std::size_t c = li.scores.size();
      const std::size_t spatial = act.row_size() / c;
      for (std::size_t r = 0; r < rows.size(); ++r) {
        const auto y = static_cast<std::size_t>(data.labels[rows[r]]);
        const auto a = act.row(r);
        for (std::size_t ch = 0; ch < c; ++ch) {
          double s = 0.0;
          for (std::size_t p = 0; p < spatial; ++p) s += std::abs(a[ch * spatial + p]);
          li.scores[ch][y] += s / static_cast<double>(spatial);
        }
      }
    }
  }
  for (auto& li : imp.layers) {
    for (auto& row : li.scores) {
      for (std::size_t j = 0; j < k; ++j) row[j] = counts[j] ? row[j] / static_cast<double>(counts[j]) : 0.0;
    }
  }
  return imp;
}

std::string to_string(WeightMode mode) {
  return mode == WeightMode::paper_frequency ? "paper-frequency" : "inverse-frequency";
}

WeightMode weight_mode_from_string(const std::string& name) {
  if (name == "paper-frequency") return WeightMode::paper_frequency;
  if (name == "inverse-frequency") return WeightMode::inverse_frequency;
  throw DomainError("unknown weight mode '" + name + "'");
}

ClassWeights frequency_weights(std::span<const std::size_t> counts, WeightMode mode) {
  const double total = std::accumulate(counts.begin(), counts.end(), 0.0,
                                       [](double a, std::size_t c) { return a + static_cast<double>(c); });
  if (total < 1.0) throw DomainError("class weights of all-zero counts");
  ClassWeights w;
  w.w.reserve(counts.size());
  if (mode == WeightMode::paper_frequency) {
    for (auto c : counts) w.w.push_back(static_cast<double>(c) / total);
    return w;
  }
  double norm = 0.0;
  for (std::size_t j = 0; j < counts.size(); ++j) {
    if (counts[j] == 0) throw DomainError("inverse-frequency weights: class " + std::to_string(j) + " has no samples");
    norm += 1.0 / static_cast<double>(counts[j]);
  }
  for (auto c : counts) w.w.push_back((1.0 / static_cast<double>(c)) / norm);
  return w;
}

std::vector<LayerScores> aggregate_scores(const ChannelImportance& importance, const ClassWeights& weights) {
  std::vector<LayerScores> out;
  for (const auto& li : importance.layers) {
    LayerScores ls{li.layer, {}};
    for (const auto& row : li.scores) {
      if (row.size() != weights.w.size()) {
        throw ShapeError("importance has " + std::to_string(row.size()) + " classes, weights " +
                         std::to_string(weights.w.size()));
      }
      double s = 0.0;
      for (std::size_t j = 0; j < row.size(); ++j) s += weights.w[j] * row[j];
      ls.scores.push_back(s);
    }
    out.push_back(std::move(ls));
  }
  return out;
}

bool PruningPlan::empty() const {
  return std::all_of(layers.begin(), layers.end(), [](const LayerPlan& p) { return p.removed.empty(); });
}

PruningPlan select_prune(std::span<const LayerScores> scores, double ratio) {
  if (!(ratio >= 0.0 && ratio < 1.0)) throw DomainError("pruning ratio must lie in [0, 1)");
  PruningPlan plan{ratio, {}};
  for (const auto& ls : scores) {
    const std::size_t c = ls.scores.size();
    const auto drop = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(c) + 1e-9));
    if (drop >= c) throw CapacityError("pruning would empty layer " + std::to_string(ls.layer));
    std::vector<std::size_t> order(c);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return ls.scores[a] < ls.scores[b]; });
    LayerPlan lp{ls.layer, c, std::vector<std::size_t>(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(drop))};
    std::sort(lp.removed.begin(), lp.removed.end());
    plan.layers.push_back(std::move(lp));
  }
  return plan;
}

nn::Network apply_prune(const nn::Network& net, const PruningPlan& plan) {
  std::vector<nn::Layer> layers(net.layers().begin(), net.layers().end());
  const auto prunable = prunable_layers(net);
  std::vector<bool> seen(net.num_layers(), false);
  for (const auto& lp : plan.layers) {
    const std::size_t l = lp.layer;
    if (std::find(prunable.begin(), prunable.end(), l) == prunable.end()) {
      throw ShapeError("plan targets layer " + std::to_string(l) + ", which is not prunable");
    }
    if (seen[l]) throw ShapeError("plan lists layer " + std::to_string(l) + " twice");
    seen[l] = true;
    const std::size_t c = net.output_shape(l)[0];
    if (lp.channels != c) {
      throw ShapeError("plan expects " + std::to_string(lp.channels) + " channels at layer " + std::to_string(l) +
                       ", network has " + std::to_string(c));
    }
    std::vector<bool> drop(c, false);
    for (std::size_t idx : lp.removed) {
      if (idx >= c || drop[idx]) throw ShapeError("plan index " + std::to_string(idx) + " invalid or repeated");
      drop[idx] = true;
    }
    if (lp.removed.size() >= c) throw ShapeError("plan removes every channel of layer " + std::to_string(l));
    if (lp.removed.empty()) continue;
    std::vector<std::size_t> keep;
    for (std::size_t i = 0; i < c; ++i)
      if (!drop[i]) keep.push_back(i);

    // Output side: rows of the weight and bias.
    auto& L = layers[l];
    const std::size_t row_len = L.weight.size() / c;
    Shape ws = L.weight.shape();
    ws[0] = keep.size();
    Tensor w(ws), b({keep.size()});
    for (std::size_t i = 0; i < keep.size(); ++i) {
      std::copy_n(L.weight.data().begin() + static_cast<std::ptrdiff_t>(keep[i] * row_len), row_len,
                  w.data().begin() + static_cast<std::ptrdiff_t>(i * row_len));
      b[i] = L.bias[keep[i]];
    }
    L.weight = std::move(w);
    L.bias = std::move(b);
    L.spec.out = keep.size();

    // Input side of the next parametric layer. Each channel maps to a block
    // of `block` consecutive inputs (the spatial extent when a flatten sits
    // between the two layers, else 1).
    const std::size_t n = next_param_layer(net, l);
    auto& N = layers[n];
    const std::size_t in_total = net.layer(n).spec.in;
    const std::size_t block = in_total / c;
    std::vector<std::size_t> keep_in;
    for (std::size_t ch : keep)
      for (std::size_t p = 0; p < block; ++p) keep_in.push_back(ch * block + p);
    const std::size_t outs = N.weight.dim(0);
    const std::size_t per_in = N.weight.size() / (outs * N.spec.in);  // kernel area for conv, 1 for dense
    Shape ns = N.weight.shape();
    ns[1] = keep_in.size();
    Tensor nw(ns);
    for (std::size_t o = 0; o < outs; ++o) {
      for (std::size_t i = 0; i < keep_in.size(); ++i) {
        const auto src = N.weight.data().begin() + static_cast<std::ptrdiff_t>((o * N.spec.in + keep_in[i]) * per_in);
        std::copy_n(src, per_in, nw.data().begin() + static_cast<std::ptrdiff_t>((o * keep_in.size() + i) * per_in));
      }
    }
    N.weight = std::move(nw);
    N.spec.in = keep_in.size();
  }
  return nn::Network(net.input_shape(), std::move(layers), nn::NetworkRole::student);
}

JointLoss joint_distillation_objective(const nn::Network& student, const Tensor& few_x, const Tensor& few_teacher,
                                       const Tensor& aux_x, const Tensor& aux_teacher, double lambda,
                                       double temperature) {
  JointLoss out;
  out.grads = nn::Gradients::zeros_like(student);
  const auto term = [&](const Tensor& x, const Tensor& t, double weight, double& value) {
    if (weight == 0.0 || x.rank() == 0 || x.dim(0) == 0) return;
    auto fr = nn::forward(student, x, true);
    auto lg = nn::distillation_loss(t, fr.logits, temperature);
    value = lg.loss;
    out.loss += weight * lg.loss;
    out.grads.add_scaled(nn::backward(student, fr.trace, lg.dlogits), weight);
  };
  term(few_x, few_teacher, lambda, out.few_term);
  term(aux_x, aux_teacher, 1.0 - lambda, out.ood_term);
  return out;
}

DistillResult joint_distill(const nn::Network& teacher, nn::Network student, const data::Dataset& few,
                            const data::Dataset& aux, const DistillationConfig& cfg) {
  if (!(cfg.lambda >= 0.0 && cfg.lambda <= 1.0)) throw DomainError("lambda must lie in [0, 1]");
  if (few.empty()) throw DomainError("joint distillation needs a nonempty few-sample set");
  if (aux.empty() && cfg.lambda < 1.0) throw DomainError("joint distillation with lambda < 1 needs auxiliary data");
  if (teacher.num_classes() != student.num_classes()) {
    throw ShapeError("teacher has " + std::to_string(teacher.num_classes()) + " outputs, student " +
                     std::to_string(student.num_classes()));
  }
  const Tensor few_t = nn::predict_logits(teacher, few.features);
  const bool use_aux = cfg.lambda < 1.0;
  const Tensor aux_t = use_aux ? nn::predict_logits(teacher, aux.features) : Tensor();

  BatchStream few_stream(few.size(), cfg.batch_size, stream_seed(cfg.seed, "distill-few"));
  BatchStream aux_stream(use_aux ? aux.size() : 0, cfg.batch_size, stream_seed(cfg.seed, "distill-aux"));
  auto opt = nn::make_optimizer(student, cfg.learning_rate, cfg.momentum);

  DistillResult res{std::move(student), {}};
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    double total = 0.0;
    const auto batches = few_stream.epoch();
    for (const auto& idx : batches) {
      Tensor ax, at;
      if (use_aux) {
        const auto aidx = aux_stream.next();
        ax = gather_rows(aux.features, aidx);
        at = gather_rows(aux_t, aidx);
      }
      auto jl = joint_distillation_objective(res.student, gather_rows(few.features, idx), gather_rows(few_t, idx), ax,
                                             at, cfg.lambda, cfg.temperature);
      total += jl.loss;
      nn::sgd_step(opt, res.student, jl.grads);
    }
    res.loss_history.push_back(total / static_cast<double>(batches.size()));
  }
  return res;
}

}  // namespace oefsmc::compress
