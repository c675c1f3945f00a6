#include "oefsmc/finetune.hpp"

#include <cmath>
#include <ostream>

#include "oefsmc/batching.hpp"
#include "oefsmc/error.hpp"
#include "oefsmc/metrics.hpp"

namespace oefsmc::finetune {

namespace {

void check_gamma(const nn::Network& net, std::span<const double> gamma) {
  if (gamma.size() != net.num_classes()) {
    throw ShapeError("gamma has length " + std::to_string(gamma.size()) + ", network has " +
                     std::to_string(net.num_classes()) + " classes");
  }
}

std::vector<int> gather_labels(std::span<const int> labels, std::span<const std::size_t> idx) {
  std::vector<int> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(labels[i]);
  return out;
}

}  // namespace

double regularization_loss(const nn::Network& net, const data::Dataset& aux, std::span<const double> gamma) {
  check_gamma(net, gamma);
  if (aux.empty()) throw DomainError("regularization loss of an empty auxiliary set");
  return nn::cross_entropy_loss(nn::predict_logits(net, aux.features), aux.labels, gamma).loss;
}

double total_loss(const nn::Network& net, const data::Dataset& few, const data::Dataset& aux,
                  std::span<const double> gamma, double eta) {
  if (few.empty()) throw DomainError("total loss of an empty few-sample set");
  const double ce = nn::cross_entropy_loss(nn::predict_logits(net, few.features), few.labels).loss;
  if (eta == 0.0) return ce;
  return ce + eta * regularization_loss(net, aux, gamma);
}

ObjectiveValue finetune_objective(const nn::Network& net, const Tensor& few_x, std::span<const int> few_y,
                                  const Tensor& aux_x, std::span<const int> aux_y, std::span<const double> gamma,
                                  double eta) {
  ObjectiveValue out;
  out.grads = nn::Gradients::zeros_like(net);
  {
    auto fr = nn::forward(net, few_x, true);
    auto lg = nn::cross_entropy_loss(fr.logits, few_y);
    out.ce_term = lg.loss;
    out.grads.add_scaled(nn::backward(net, fr.trace, lg.dlogits), 1.0);
  }
  out.loss = out.ce_term;
  if (eta != 0.0 && aux_x.rank() > 0 && aux_x.dim(0) > 0) {
    check_gamma(net, gamma);
    auto fr = nn::forward(net, aux_x, true);
    auto lg = nn::cross_entropy_loss(fr.logits, aux_y, gamma);
    out.reg_term = lg.loss;
    out.loss += eta * lg.loss;
    out.grads.add_scaled(nn::backward(net, fr.trace, lg.dlogits), eta);
  }
  return out;
}

FinetuneResult finetune(nn::Network student, const data::Dataset& few, const data::Dataset& aux,
                        std::span<const double> gamma, const FinetuneConfig& cfg, const data::Dataset& validation,
                        const FinetuneOptions& options) {
  if (!(cfg.eta >= 0.0)) throw DomainError("eta must be >= 0");
  if (cfg.patience < 1) throw DomainError("patience must be >= 1");
  if (few.empty()) throw DomainError("fine-tuning needs a nonempty few-sample set");
  if (validation.empty() && !options.metric) throw DomainError("fine-tuning needs a nonempty validation set");
  const bool use_aux = cfg.eta != 0.0 && !aux.empty();
  if (use_aux) check_gamma(student, gamma);

  data::Dataset aux_work = use_aux ? aux : data::Dataset{};
  const ValidationMetric metric =
      options.metric ? options.metric
                     : ValidationMetric([&](const nn::Network& n, std::size_t) { return harness::evaluate(n, validation).top1; });

  BatchStream few_stream(few.size(), cfg.batch_size, stream_seed(cfg.seed, "finetune-few"));
  BatchStream aux_stream(use_aux ? aux.size() : 0, cfg.batch_size, stream_seed(cfg.seed, "finetune-aux"));
  auto opt = nn::make_optimizer(student, cfg.learning_rate, cfg.momentum);

  FinetuneResult res{student, {}, 0, -INFINITY};
  std::size_t since_best = 0;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    if (use_aux && options.relabel_each_epoch && epoch > 1) {
      rebalance::AuxiliaryDataset tmp{std::move(aux_work)};
      rebalance::relabel(tmp, *options.relabel_each_epoch, mix_seed(cfg.seed, epoch));
      aux_work = std::move(tmp.data);
    }
    double loss_sum = 0.0, reg_sum = 0.0;
    const auto batches = few_stream.epoch();
    for (const auto& idx : batches) {
      Tensor ax;
      std::vector<int> ay;
      if (use_aux) {
        const auto aidx = aux_stream.next();
        ax = gather_rows(aux_work.features, aidx);
        ay = gather_labels(aux_work.labels, aidx);
      }
      auto ov = finetune_objective(student, gather_rows(few.features, idx), gather_labels(few.labels, idx), ax, ay,
                                   gamma, use_aux ? cfg.eta : 0.0);
      loss_sum += ov.loss;
      reg_sum += ov.reg_term;
      nn::sgd_step(opt, student, ov.grads);
    }
    const double nb = static_cast<double>(batches.size());
    const double score = metric(student, epoch);
    res.log.push_back({epoch, loss_sum / nb, reg_sum / nb, score});
    if (score > res.best_val) {
      res.best_val = score;
      res.best_epoch = epoch;
      res.network = student;
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      break;
    }
  }
  return res;
}

void write_epoch_log_csv(std::ostream& os, std::span<const EpochLog> log) {
  os << "epoch,train_loss,reg_loss,val_top1\n";
  os.precision(10);
  for (const auto& e : log) os << e.epoch << ',' << e.train_loss << ',' << e.reg_loss << ',' << e.val_top1 << '\n';
}

}  // namespace oefsmc::finetune
