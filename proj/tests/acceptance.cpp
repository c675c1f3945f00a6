// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any
// hard failure.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <functional>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "fd_oracle.hpp"
#include "oefsmc/bayes.hpp"
#include "oefsmc/compress.hpp"
#include "oefsmc/finetune.hpp"
#include "oefsmc/harness.hpp"
#include "oefsmc/rebalance.hpp"
#include "oefsmc/rng.hpp"

using namespace oefsmc;
using nn::LayerSpec;
using nn::Network;
using nn::NetworkRole;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

int failures = 0;

void criterion(const std::string& id, const std::string& name, double budget_seconds, const std::function<Outcome()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (budget_seconds > 0 && secs > budget_seconds) {
    o.pass = false;
    o.detail += " (over time budget " + std::to_string(budget_seconds) + " s)";
  }
  if (!o.pass) ++failures;
  std::printf("%s  %-3s %-28s %8.2fs  %s\n", o.pass ? "PASS" : "FAIL", id.c_str(), name.c_str(), secs, o.detail.c_str());
  std::fflush(stdout);
}

std::string sci(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

std::string fmt(double v, int prec = 2) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", prec, v);
  return buf;
}

Tensor randn(Shape s, std::uint64_t seed) {
  Tensor t(std::move(s));
  Rng rng(seed);
  for (auto& v : t.data()) v = rng.normal();
  return t;
}

data::Dataset make_set(Tensor x, std::vector<int> y, std::size_t k) {
  data::Dataset d;
  d.features = std::move(x);
  d.labels = std::move(y);
  d.num_classes = k;
  return d;
}

std::vector<std::size_t> random_counts(Rng& rng) {
  std::vector<std::size_t> c(2 + rng.below(19));
  for (auto& v : c) v = 1 + rng.below(200);
  return c;
}

Outcome c1_gamma() {
  Rng rng(101);
  double worst_sum = 0.0;
  for (int t = 0; t < 1000; ++t) {
    const auto prior = rebalance::class_prior(random_counts(rng));
    const auto d = rebalance::complementary_distribution(prior);
    const std::size_t k = prior.beta.size();
    worst_sum = std::max(worst_sum, std::abs(std::accumulate(d.gamma_rates.begin(), d.gamma_rates.end(), 0.0) - 1.0));
    for (std::size_t i = 0; i < k; ++i) {
      if (d.gamma_rates[i] < 0.0) return {false, "negative rate"};
      for (std::size_t j = 0; j < k; ++j)
        if (prior.beta[i] < prior.beta[j] && !(d.gamma_rates[i] > d.gamma_rates[j]))
          return {false, "not anti-monotone"};
    }
  }
  if (worst_sum > 1e-12) return {false, "max |sum - 1| = " + sci(worst_sum)};
  for (std::size_t k = 2; k <= 20; ++k) {
    const auto d = rebalance::complementary_distribution({std::vector<double>(k, 1.0 / k)});
    for (double g : d.gamma_rates)
      if (std::abs(g - 1.0 / k) > 1e-12) return {false, "uniform prior not fixed"};
  }
  return {true, "1000 priors, max |sum - 1| = " + sci(worst_sum)};
}

Outcome c2_mixed() {
  Rng rng(202);
  double worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    const auto counts = random_counts(rng);
    const std::size_t m = std::accumulate(counts.begin(), counts.end(), std::size_t{0});
    const auto prior = rebalance::class_prior(counts);
    const auto d = rebalance::complementary_distribution(prior);
    const double target = rebalance::uniformizing_aux_size(prior, m);
    const auto m_aux = static_cast<std::size_t>(std::llround(target));
    if (std::abs(target - static_cast<double>(m_aux)) > 1e-6) return {false, "non-integral uniformizing size"};
    const auto mixed = rebalance::mixed_prior(prior, m, d, m_aux);
    for (double p : mixed) worst = std::max(worst, std::abs(p - 1.0 / counts.size()));
  }
  return {worst <= 1e-12, "max deviation " + sci(worst)};
}

Outcome c3_bayes() {
  const auto rep = bayes::theorem1_check(1000, 303);
  std::ostringstream os;
  os << rep.points << " points, uniform shift rate " << rep.uniform_shift_rate << ", complementary shift rate "
     << rep.complementary_shift_rate;
  return {rep.uniform_shift_rate == 0.0 && rep.trials == 1000, os.str()};
}

// Covers every layer kind: conv (stride 2, padding 1), relu, max-pool,
// flatten, dense, head. 71 parameters.
Network grad_net(std::uint64_t seed) {
  return Network({1, 8, 8},
                 {LayerSpec::conv2d(1, 2, 3, 2, 1), LayerSpec::relu(), LayerSpec::max_pool(2), LayerSpec::flatten(),
                  LayerSpec::dense(8, 4), LayerSpec::relu(), LayerSpec::head(4, 3)},
                 NetworkRole::student, seed);
}

Outcome c4_gradients() {
  std::ostringstream os;
  bool ok = true;
  auto record = [&](const char* what, const fdcheck::Result& r) {
    ok = ok && r.ok && r.checked > 0;
    os << what << (r.ok ? " ok" : " FAIL at " + r.worst_where) << "; ";
  };
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const Network net = grad_net(seed);
    if (net.parameter_count() > 200) return {false, "fixture too large"};
    const Tensor x = randn({4, 1, 8, 8}, 10 + seed), a = randn({3, 1, 8, 8}, 20 + seed);
    const std::vector<int> y{0, 2, 1, 1}, ay{2, 1, 2};
    const std::vector<double> gamma{0.4, 1.1, 1.5};

    auto fwd = nn::forward(net, x, true);
    const auto ce = nn::cross_entropy_loss(fwd.logits, y);
    record("layers/CE", fdcheck::compare(net, nn::backward(net, fwd.trace, ce.dlogits), [&](const Network& n) {
             return nn::cross_entropy_loss(nn::forward(n, x).logits, y).loss;
           }));

    const Network teacher = grad_net(100 + seed);
    const Tensor ft = nn::forward(teacher, x).logits, at = nn::forward(teacher, a).logits;
    const auto j = compress::joint_distillation_objective(net, x, ft, a, at, 0.4, 2.5);
    record("joint KD", fdcheck::compare(net, j.grads, [&](const Network& n) {
             return compress::joint_distillation_objective(n, x, ft, a, at, 0.4, 2.5).loss;
           }));

    const auto o = finetune::finetune_objective(net, x, y, a, ay, gamma, 2.5);
    record("fine-tune", fdcheck::compare(net, o.grads, [&](const Network& n) {
             return finetune::finetune_objective(n, x, y, a, ay, gamma, 2.5).loss;
           }));
  }
  return {ok, os.str()};
}

Network mlp(std::uint64_t seed) {
  return Network({4}, {LayerSpec::dense(4, 6), LayerSpec::relu(), LayerSpec::dense(6, 5), LayerSpec::relu(),
                       LayerSpec::head(5, 3)},
                 NetworkRole::teacher, seed);
}

// Unweighted mean |post-ReLU activation| over all samples, computed with an
// independent forward pass.
std::vector<std::vector<double>> plain_importance(const Network& net, const Tensor& x) {
  std::vector<std::vector<double>> out{std::vector<double>(6, 0.0), std::vector<double>(5, 0.0)};
  const std::size_t n = x.shape()[0];
  for (std::size_t s = 0; s < n; ++s) {
    std::vector<double> in(x.row(s).begin(), x.row(s).end());
    for (std::size_t li = 0; li < 2; ++li) {
      const std::size_t l = 2 * li;
      const std::size_t rows = net.layer(l).bias.size(), cols = in.size();
      std::vector<double> h(rows);
      for (std::size_t o = 0; o < rows; ++o) {
        double z = net.layer(l).bias[o];
        for (std::size_t i = 0; i < cols; ++i) z += net.layer(l).weight[o * cols + i] * in[i];
        h[o] = std::max(z, 0.0);
        out[li][o] += h[o];
      }
      in = h;
    }
  }
  for (auto& layer : out)
    for (auto& v : layer) v /= static_cast<double>(n);
  return out;
}

Outcome c5_equivalences() {
  std::ostringstream os;
  double worst_importance = 0.0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Network t = mlp(seed);
    const Tensor x = randn({20, 4}, 50 + seed);
    std::vector<int> y(20);
    std::vector<std::size_t> counts(3, 0);
    for (std::size_t i = 0; i < 20; ++i) {
      y[i] = i < 12 ? 0 : (i < 17 ? 1 : 2);
      ++counts[y[i]];
    }
    const auto data = make_set(x, y, 3);

    // Class-weighted importance with w_j = m_j / M against the plain mean.
    const auto weighted = compress::aggregate_scores(
        compress::per_class_importance(t, data),
        compress::frequency_weights(counts, compress::WeightMode::paper_frequency));
    const auto plain = plain_importance(t, x);
    std::vector<compress::LayerScores> plain_scores;
    for (std::size_t li = 0; li < 2; ++li) {
      plain_scores.push_back({2 * li, plain[li]});
      for (std::size_t k = 0; k < plain[li].size(); ++k)
        worst_importance = std::max(worst_importance, std::abs(weighted[li].scores[k] - plain[li][k]));
    }
    for (double r : {0.2, 0.4, 0.6}) {
      const auto a = compress::select_prune(weighted, r), b = compress::select_prune(plain_scores, r);
      for (std::size_t l = 0; l < a.layers.size(); ++l)
        if (a.layers[l].removed != b.layers[l].removed) return {false, "frequency-weighted plan differs"};
    }

    // Fine-tuning objective at eta = 0 is plain CE, value and gradient.
    const Tensor a = randn({6, 4}, 60 + seed);
    const std::vector<int> ay{2, 2, 1, 0, 2, 1};
    const auto ft = finetune::finetune_objective(t, x, y, a, ay, std::vector<double>{0.5, 1.0, 1.5}, 0.0);
    auto fwd = nn::forward(t, x, true);
    const auto ce = nn::cross_entropy_loss(fwd.logits, y);
    const auto ce_g = nn::backward(t, fwd.trace, ce.dlogits);
    if (ft.loss != ce.loss) return {false, "eta = 0 loss differs from CE"};
    for (std::size_t l = 0; l < t.num_layers(); ++l)
      if (ft.grads.weight[l] != ce_g.weight[l] || ft.grads.bias[l] != ce_g.bias[l])
        return {false, "eta = 0 gradient differs from CE"};

    // Joint KD at lambda 1 and 0.
    const Network s = compress::apply_prune(t, compress::select_prune(weighted, 0.4));
    const Tensor tx = nn::forward(t, x).logits, ta = nn::forward(t, a).logits;
    for (double lam : {1.0, 0.0}) {
      const auto j = compress::joint_distillation_objective(s, x, tx, a, ta, lam, 3.0);
      const Tensor& in = lam == 1.0 ? x : a;
      auto sf = nn::forward(s, in, true);
      const auto kd = nn::distillation_loss(lam == 1.0 ? tx : ta, sf.logits, 3.0);
      const auto g = nn::backward(s, sf.trace, kd.dlogits);
      if (j.loss != kd.loss) return {false, "lambda " + fmt(lam, 0) + " loss differs from single KD"};
      for (std::size_t l = 0; l < s.num_layers(); ++l)
        if (j.grads.weight[l] != g.weight[l] || j.grads.bias[l] != g.bias[l])
          return {false, "lambda " + fmt(lam, 0) + " gradient differs from single KD"};
    }
  }
  os << "5 seeds; importance max |diff| " << worst_importance << " (summation order), plans identical";
  return {worst_importance <= 1e-12, os.str()};
}

// Closed-form parameter count of the fixture architectures after removing
// floor(r C) channels from every prunable layer.
std::size_t expected_params(const harness::ExperimentConfig& cfg, double r) {
  auto keep = [&](std::size_t c) { return c - static_cast<std::size_t>(std::floor(r * static_cast<double>(c))); };
  std::size_t total = 0, width = 0;
  if (cfg.arch == "conv") {
    std::size_t ch = cfg.input_shape[0], hw = cfg.input_shape[1] * cfg.input_shape[2];
    for (std::size_t i = 0; i < cfg.conv_channels.size(); ++i) {
      const std::size_t c = keep(cfg.conv_channels[i]);
      total += c * ch * 9 + c;
      ch = c;
      if (i == 0) hw /= 4;
    }
    width = ch * hw;
  } else {
    width = cfg.dim;
  }
  for (std::size_t h : cfg.hidden) {
    const std::size_t c = keep(h);
    total += c * width + c;
    width = c;
  }
  return total + cfg.num_classes * width + cfg.num_classes;
}

Outcome c6_pruning() {
  std::ostringstream os;
  const Network t = mlp(7);
  const Tensor x = randn({9, 4}, 8);
  const auto data = make_set(x, {0, 1, 2, 0, 1, 2, 0, 0, 0}, 3);
  const auto scores = compress::aggregate_scores(compress::per_class_importance(t, data),
                                                 compress::ClassWeights{{0.2, 0.3, 0.5}});
  const auto plan0 = compress::select_prune(scores, 0.0);
  const Network same = compress::apply_prune(t, plan0);
  if (!plan0.empty() || !(nn::forward(same, x).logits == nn::forward(t, x).logits)) return {false, "r = 0 changed outputs"};

  Network nulled = t;
  for (std::size_t o = 0; o < 5; ++o) nulled.weight(2)[o * 6 + 3] = 0.0;
  const Network cut = compress::apply_prune(nulled, {0.1, {compress::LayerPlan{0, 6, {3}}}});
  if (!(nn::forward(cut, x).logits == nn::forward(nulled, x).logits)) return {false, "null channel changed outputs"};

  harness::ExperimentConfig mlp_cfg;
  harness::ExperimentConfig conv_cfg;
  conv_cfg.arch = "conv";
  conv_cfg.input_shape = {1, 4, 4};
  conv_cfg.conv_channels = {8, 8};
  conv_cfg.hidden = {32};
  for (const auto* cfg : {&mlp_cfg, &conv_cfg}) {
    auto [in, specs] = harness::build_architecture(*cfg);
    const Network net(in, specs, NetworkRole::teacher, 3);
    for (double r : {0.0, 0.25, 0.5, 0.6, 0.75}) {
      std::vector<compress::LayerScores> s;
      for (std::size_t l : compress::prunable_layers(net)) {
        compress::LayerScores ls{l, std::vector<double>(net.layer(l).bias.size())};
        std::iota(ls.scores.begin(), ls.scores.end(), 0.0);
        s.push_back(ls);
      }
      const std::size_t got = compress::apply_prune(net, compress::select_prune(s, r)).parameter_count();
      const std::size_t want = expected_params(*cfg, r);
      if (got != want)
        return {false, cfg->arch + " r=" + fmt(r) + ": " + std::to_string(got) + " != " + std::to_string(want)};
      if (r == 0.5) os << cfg->arch << " " << net.parameter_count() << " -> " << got << "; ";
    }
  }
  return {true, os.str()};
}

// Shared fixture runs.
struct Fixture {
  harness::ExperimentConfig cfg;
  harness::Environment env;
  std::map<std::size_t, harness::ExperimentReport> by_nmax;
};

double top1(const harness::ExperimentReport& r, const std::string& v, const std::string& sweep_value = "") {
  return 100.0 * r.aggregate(v, sweep_value).mean_top1;
}

Outcome c7_balanced(Fixture& f) {
  std::ostringstream os;
  bool ok = true;
  for (std::size_t n : {10, 30, 50}) {
    auto cfg = f.cfg;
    cfg.n_max = n;
    cfg.variants = harness::variant_names();
    f.by_nmax[n] = harness::run_experiment(cfg, &f.env);
    const double gap = top1(f.by_nmax[n], "balanced-baseline") - top1(f.by_nmax[n], "wo-all");
    ok = ok && gap > 1.0;
    os << "n=" << n << " gap " << fmt(gap) << "; ";
  }
  return {ok, os.str()};
}

Outcome c8_full_vs_woall(Fixture& f) {
  std::ostringstream os;
  std::vector<double> gaps;
  for (std::size_t n : {10, 30, 50}) {
    const auto& r = f.by_nmax.at(n);
    gaps.push_back(top1(r, "full") - top1(r, "wo-all"));
    os << "n=" << n << " gap " << fmt(gaps.back()) << "; ";
  }
  const auto& r10 = f.by_nmax.at(10);
  const double tail_full = r10.aggregate("full").mean_tail_recall, tail_wo = r10.aggregate("wo-all").mean_tail_recall;
  os << "(reuses C7 runs) tail recall " << fmt(100 * tail_full) << " vs " << fmt(100 * tail_wo);
  const bool ok = gaps[0] >= 2.0 && gaps[1] <= gaps[0] && gaps[2] <= gaps[1] && tail_full > tail_wo;
  return {ok, os.str()};
}

Outcome c9_ablation(Fixture& f) {
  const auto& r = f.by_nmax.at(f.cfg.n_max);
  const double full = top1(r, "full"), comp = top1(r, "wo-comp"), ft = top1(r, "wo-ft"), all = top1(r, "wo-all");
  std::ostringstream os;
  os << "full " << fmt(full) << ", wo-comp " << fmt(comp) << ", wo-ft " << fmt(ft) << ", wo-all " << fmt(all);
  if (!(ft >= comp)) {
    os << "; WARNING: wo-ft < wo-comp (soft expectation)";
    std::printf("WARN  C9  soft ordering wo-ft >= wo-comp does not hold (%.2f < %.2f)\n", ft, comp);
  }
  return {full >= comp && full >= ft && comp >= all && ft >= all, os.str()};
}

Outcome c10_sensitivity(Fixture& f) {
  auto cfg = f.cfg;
  cfg.variants = {"full"};
  const std::vector<std::string> lambdas{"0", "0.2", "0.4", "0.5", "0.6", "0.8", "1"};
  const std::vector<std::string> etas{"0.1", "0.5", "1.5", "2.5", "3.5", "5"};
  const auto lr = harness::sweep(cfg, "lambda", lambdas, &f.env);
  const auto er = harness::sweep(cfg, "eta", etas, &f.env);
  double best = -1.0;
  std::ostringstream os;
  os << "lambda:";
  for (const auto& v : lambdas) {
    best = std::max(best, top1(lr, "full", v));
    os << " " << fmt(top1(lr, "full", v));
  }
  const double at_half = top1(lr, "full", "0.5");
  os << "; eta:";
  for (const auto& v : etas) os << " " << fmt(top1(er, "full", v));
  const double e25 = top1(er, "full", "2.5");
  const bool ok = best - at_half <= 1.0 && e25 > top1(er, "full", "0.1") && e25 > top1(er, "full", "5");
  return {ok, os.str()};
}

// Paired runs of the full pipeline at eta = 2.5 and eta = 0.
Outcome tail_recall_eta(Fixture& f) {
  auto cfg = f.cfg;
  cfg.variants = {"full"};
  const auto r = harness::sweep(cfg, "eta", {"0", "2.5"}, &f.env);
  const double with = r.aggregate("full", "2.5").mean_tail_recall, without = r.aggregate("full", "0").mean_tail_recall;
  return {with > without, "tail recall eta 2.5 " + fmt(100 * with) + " vs eta 0 " + fmt(100 * without)};
}

Outcome c11_determinism(const Fixture& f) {
  auto cfg = f.cfg;
  cfg.variants = harness::variant_names();
  cfg.jobs = 4;
  std::ostringstream a, b;
  harness::write_report_csv(harness::run_experiment(cfg), a);
  cfg.jobs = 1;
  harness::write_report_csv(harness::run_experiment(cfg), b);
  const bool same = a.str() == b.str() && !a.str().empty();
  return {same, same ? "report.csv identical across two fresh executions (" + std::to_string(a.str().size()) + " bytes)"
                     : "report.csv differs"};
}

}  // namespace

int main() {
  criterion("C1", "complementary distribution", 1.0, c1_gamma);
  criterion("C2", "mixed-prior uniformity", 1.0, c2_mixed);
  criterion("C3", "uniform mixing oracle", 10.0, c3_bayes);
  criterion("C4", "gradient fidelity", 30.0, c4_gradients);
  criterion("C5", "equation equivalences", 0.0, c5_equivalences);
  criterion("C6", "pruning contracts", 0.0, c6_pruning);

  harness::ExperimentConfig cfg;
  harness::validate_config(cfg);
  Fixture f{cfg, harness::prepare_environment(cfg), {}};
  std::printf("INFO  fixture teacher test top-1 %.2f%%\n", 100.0 * f.env.teacher_test_top1);

  criterion("C7", "balanced vs long-tail", 600.0, [&] { return c7_balanced(f); });
  criterion("C8", "full vs wo-all", 900.0, [&] { return c8_full_vs_woall(f); });
  criterion("C9", "ablation ordering", 0.0, [&] { return c9_ablation(f); });
  criterion("C10", "sensitivity shape", 1200.0, [&] { return c10_sensitivity(f); });
  criterion("F1", "fine-tune tail recall", 0.0, [&] { return tail_recall_eta(f); });
  criterion("C11", "determinism", 0.0, [&] { return c11_determinism(f); });

  std::printf("%s: %d criterion failure(s)\n", failures == 0 ? "ALL PASS" : "FAILED", failures);
  return failures == 0 ? 0 : 1;
}
