#include "oefsmc/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <mutex>
#include <sstream>
#include <thread>

#include "oefsmc/batching.hpp"
#include "oefsmc/error.hpp"
#include "oefsmc/rng.hpp"

namespace oefsmc::harness {

namespace {

data::Dataset reshape_samples(data::Dataset d, const Shape& sample) {
  Shape s{d.size()};
  s.insert(s.end(), sample.begin(), sample.end());
  d.features = d.features.reshaped(s);
  return d;
}

std::vector<std::size_t> classes_with_count(const std::vector<std::size_t>& counts, bool want_max) {
  const auto target = want_max ? *std::max_element(counts.begin(), counts.end())
                               : *std::min_element(counts.begin(), counts.end());
  std::vector<std::size_t> out;
  for (std::size_t j = 0; j < counts.size(); ++j)
    if (counts[j] == target) out.push_back(j);
  return out;
}

template <class Fn>
void parallel_for(std::size_t n, std::size_t jobs, Fn&& fn) {
  jobs = std::max<std::size_t>(1, std::min(jobs, n));
  if (jobs == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex mu;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < jobs; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(mu);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace

const std::vector<std::string>& variant_names() {
  static const std::vector<std::string> names = {"full", "wo-comp", "wo-ft", "wo-all", "balanced-baseline"};
  return names;
}

VariantFlags resolve_variant(const std::string& name) {
  VariantFlags flags;
  std::stringstream ss(name);
  std::string part;
  bool any = false;
  while (std::getline(ss, part, '+')) {
    any = true;
    if (part == "full") {
    } else if (part == "wo-comp") {
      flags.ood_compress = false;
    } else if (part == "wo-ft") {
      flags.ood_finetune = false;
    } else if (part == "wo-all") {
      flags.ood_compress = flags.ood_finetune = false;
    } else if (part == "balanced-baseline") {
      flags.ood_compress = flags.ood_finetune = false;
      flags.balanced = true;
    } else {
      throw DomainError("unknown variant '" + part + "'");
    }
  }
  if (!any) throw DomainError("empty variant name");
  return flags;
}

std::uint64_t run_seed(std::uint64_t master_seed, std::size_t run_index) {
  return mix_seed(stream_seed(master_seed, "run"), run_index);
}

const std::vector<std::string>& environment_keys() {
  static const std::vector<std::string> keys = {
      "train_file",   "test_file",      "ood_file",   "num_classes",     "dim",        "train_per_class",
      "test_per_class", "separation",   "ood_source_size", "ood_clusters", "ood_radius", "ood_spread",
      "validation_fraction", "arch",    "hidden",     "input_shape",     "conv_channels", "teacher_epochs",
      "teacher_lr",   "batch_size",     "momentum",   "master_seed"};
  return keys;
}

std::string environment_fingerprint(const ExperimentConfig& cfg) {
  std::string fp;
  for (const auto& k : environment_keys()) fp += k + "=" + get_config_value(cfg, k) + ";";
  return fp;
}

nn::Network train_teacher(const ExperimentConfig& cfg, const data::Dataset& full, std::uint64_t seed) {
  const auto [input, specs] = build_architecture(cfg);
  nn::Network net(input, specs, nn::NetworkRole::teacher, stream_seed(seed, "teacher-init"));
  auto opt = nn::make_optimizer(net, cfg.teacher_lr, cfg.momentum);
  BatchStream stream(full.size(), cfg.batch_size, stream_seed(seed, "teacher-batches"));
  for (std::size_t e = 0; e < cfg.teacher_epochs; ++e) {
    for (const auto& idx : stream.epoch()) {
      auto ov = finetune::finetune_objective(net, gather_rows(full.features, idx),
                                             [&] {
                                               std::vector<int> y;
                                               for (auto i : idx) y.push_back(full.labels[i]);
                                               return y;
                                             }(),
                                             Tensor(), {}, {}, 0.0);
      nn::sgd_step(opt, net, ov.grads);
    }
  }
  return net;
}

Environment prepare_environment(const ExperimentConfig& cfg) {
  validate_config(cfg);
  const std::uint64_t seed = cfg.master_seed;
  data::Dataset full, test_pool;
  if (!cfg.train_file.empty()) {
    full = data::read_dataset(cfg.train_file);
    test_pool = data::read_dataset(cfg.test_file);
    if (full.num_classes != cfg.num_classes || test_pool.num_classes != cfg.num_classes) {
      throw ConfigError("key 'num_classes': data files declare a different class count");
    }
    if (!full.has_labels || !test_pool.has_labels) throw ConfigError("key 'train_file': data files must be labeled");
    full.provenance = data::Provenance::full;
    test_pool.provenance = data::Provenance::test;
  } else {
    auto split = data::synth_dataset(cfg.num_classes, cfg.dim, cfg.train_per_class, cfg.test_per_class,
                                     cfg.separation, stream_seed(seed, "data"));
    full = std::move(split.train);
    test_pool = std::move(split.test);
  }
  const std::size_t dim = shape_size(full.sample_shape());
  if (dim != cfg.dim) throw ConfigError("key 'dim': data rows have " + std::to_string(dim) + " features");

  data::Dataset ood;
  if (!cfg.ood_file.empty()) {
    ood = data::read_dataset(cfg.ood_file);
    ood.has_labels = false;
    ood.labels.clear();
  } else {
    ood = data::synth_ood({dim, cfg.ood_source_size, cfg.ood_clusters, cfg.ood_radius, cfg.ood_spread},
                          stream_seed(seed, "ood-source"));
  }
  ood.provenance = data::Provenance::ood_pool;
  ood.num_classes = cfg.num_classes;

  auto vs = data::split_validation(test_pool, cfg.validation_fraction, stream_seed(seed, "validation"));
  const auto [input, specs] = build_architecture(cfg);
  (void)specs;

  Environment env{reshape_samples(std::move(full), input),
                  reshape_samples(std::move(vs.validation), input),
                  reshape_samples(std::move(vs.test), input),
                  reshape_samples(std::move(ood), input),
                  nn::Network(input, build_architecture(cfg).second, nn::NetworkRole::teacher, 0),
                  0.0,
                  0.0,
                  environment_fingerprint(cfg)};
  env.teacher = train_teacher(cfg, env.full, seed);
  env.teacher_val_top1 = evaluate(env.teacher, env.validation).top1;
  env.teacher_test_top1 = evaluate(env.teacher, env.test).top1;
  return env;
}

std::size_t resolve_m_aux(const std::string& spec, const rebalance::ClassPrior& prior, std::size_t few_size) {
  if (spec == "M") return few_size;
  if (spec == "uniform") {
    return static_cast<std::size_t>(std::llround(rebalance::uniformizing_aux_size(prior, few_size)));
  }
  return static_cast<std::size_t>(std::stoull(spec));
}

SampleStage sample_stage(const data::Dataset& full, const data::Dataset& ood_source, const ExperimentConfig& cfg,
                         const VariantFlags& flags, std::uint64_t seed) {
  SampleStage s;
  s.plan = data::long_tail_counts(cfg.num_classes, cfg.rho, cfg.n_max);
  if (flags.balanced) s.plan = data::balanced_plan(cfg.num_classes, s.plan.total());
  s.few = data::subsample(full, s.plan, stream_seed(seed, "few"));
  s.pool = data::build_ood_pool(ood_source, full, cfg.ood_pool_size, stream_seed(seed, "pool"));
  s.prior = rebalance::class_prior(s.few.class_counts());
  s.dist = rebalance::complementary_distribution(s.prior);
  s.gamma = rebalance::gamma_weights(s.dist);
  const std::size_t m_aux = resolve_m_aux(cfg.m_aux, s.prior, s.few.size());
  s.aux = rebalance::assign_ood_labels(s.pool, s.dist, m_aux, stream_seed(seed, "aux"));
  return s;
}

CompressStage compress_stage(const nn::Network& teacher, const data::Dataset& few, const data::Dataset& aux,
                             const ExperimentConfig& cfg, const VariantFlags& flags, std::uint64_t seed) {
  CompressStage c{teacher, {}, {}, {}, {}, 1.0, teacher.parameter_count(), 0};
  const bool with_aux = flags.ood_compress && !aux.empty();
  const auto counts = few.class_counts();
  const auto mode =
      flags.ood_compress ? compress::weight_mode_from_string(cfg.weight_mode) : compress::WeightMode::paper_frequency;
  c.weights = compress::frequency_weights(counts, mode);
  const data::Dataset scoring =
      with_aux && cfg.importance_source == "mixture" ? data::merge(few, aux, data::Provenance::few) : few;
  c.scores = compress::aggregate_scores(compress::per_class_importance(teacher, scoring), c.weights);
  c.plan = compress::select_prune(c.scores, cfg.prune_ratio);
  nn::Network student = compress::apply_prune(teacher, c.plan);
  c.params_after = student.parameter_count();

  c.lambda = with_aux ? cfg.lambda : 1.0;
  compress::DistillationConfig dc;
  dc.lambda = c.lambda;
  dc.temperature = cfg.temperature;
  dc.epochs = cfg.distill_epochs;
  dc.batch_size = cfg.batch_size;
  dc.learning_rate = cfg.distill_lr;
  dc.momentum = cfg.momentum;
  dc.seed = stream_seed(seed, "distill");
  auto dr = compress::joint_distill(teacher, std::move(student), few, with_aux ? aux : data::Dataset{}, dc);
  c.student = std::move(dr.student);
  c.loss_history = std::move(dr.loss_history);
  return c;
}

finetune::FinetuneResult finetune_stage(const nn::Network& student, const data::Dataset& few,
                                        const data::Dataset& aux, std::span<const double> gamma,
                                        const rebalance::ComplementaryDistribution& dist,
                                        const data::Dataset& validation, const ExperimentConfig& cfg,
                                        const VariantFlags& flags, std::uint64_t seed) {
  finetune::FinetuneConfig fc;
  fc.eta = flags.ood_finetune ? cfg.eta : 0.0;
  fc.epochs = cfg.finetune_epochs;
  fc.patience = cfg.patience;
  fc.batch_size = cfg.batch_size;
  fc.learning_rate = cfg.finetune_lr;
  fc.momentum = cfg.momentum;
  fc.seed = stream_seed(seed, "finetune");
  finetune::FinetuneOptions opts;
  if (cfg.resample_aux_labels) opts.relabel_each_epoch = &dist;
  return finetune::finetune(student, few, flags.ood_finetune ? aux : data::Dataset{}, gamma, fc, validation, opts);
}

CellResult run_cell(const Environment& env, const ExperimentConfig& cfg, const std::string& variant,
                    std::size_t run_index) {
  const auto start = std::chrono::steady_clock::now();
  const VariantFlags flags = resolve_variant(variant);
  const std::uint64_t seed = run_seed(cfg.master_seed, run_index);

  const auto s = sample_stage(env.full, env.ood_source, cfg, flags, seed);
  const auto c = compress_stage(env.teacher, s.few, s.aux.data, cfg, flags, seed);
  const auto f = finetune_stage(c.student, s.few, s.aux.data, s.gamma, s.dist, env.validation, cfg, flags, seed);

  CellResult r;
  r.variant = variant;
  r.run_index = run_index;
  r.seed = seed;
  r.num = cfg.n_max;
  r.few_size = s.few.size();
  r.m_aux = s.aux.size();
  r.eval = evaluate(f.network, env.test);
  r.counts = s.plan.counts;
  r.head_recall = r.eval.mean_recall(classes_with_count(r.counts, true));
  r.tail_recall = r.eval.mean_recall(classes_with_count(r.counts, false));
  r.params_before = c.params_before;
  r.params_after = c.params_after;
  r.beta = s.prior.beta;
  r.gamma_rates = s.dist.gamma_rates;
  r.gamma = s.gamma;
  r.alpha = s.dist.alpha;
  r.plan = c.plan;
  r.distill_loss = c.loss_history;
  r.best_epoch = f.best_epoch;
  r.epochs_run = f.log.size();
  r.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

std::vector<Aggregate> ExperimentReport::aggregates() const {
  std::vector<Aggregate> out;
  for (const auto& cell : cells) {
    auto it = std::find_if(out.begin(), out.end(), [&](const Aggregate& a) {
      return a.variant == cell.variant && a.sweep_value == cell.sweep_value;
    });
    if (it == out.end()) {
      out.push_back({cell.variant, cell.sweep_value, 0, 0, 0, 0, 0});
      it = out.end() - 1;
    }
    ++it->runs;
    it->mean_top1 += cell.eval.top1;
    it->mean_head_recall += cell.head_recall;
    it->mean_tail_recall += cell.tail_recall;
  }
  for (auto& a : out) {
    const double n = static_cast<double>(a.runs);
    a.mean_top1 /= n;
    a.mean_head_recall /= n;
    a.mean_tail_recall /= n;
    double ss = 0.0;
    for (const auto& cell : cells) {
      if (cell.variant == a.variant && cell.sweep_value == a.sweep_value) {
        ss += (cell.eval.top1 - a.mean_top1) * (cell.eval.top1 - a.mean_top1);
      }
    }
    a.std_top1 = a.runs > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
  }
  return out;
}

Aggregate ExperimentReport::aggregate(const std::string& variant, const std::string& sweep_value) const {
  for (const auto& a : aggregates())
    if (a.variant == variant && a.sweep_value == sweep_value) return a;
  throw DomainError("report has no cells for variant '" + variant + "'" +
                    (sweep_value.empty() ? "" : " at value " + sweep_value));
}

namespace {

ExperimentReport run_grid(const ExperimentConfig& base, const std::string& param, const std::vector<std::string>& values,
                          const Environment* env) {
  validate_config(base);
  std::optional<Environment> owned;
  if (!env) {
    owned = prepare_environment(base);
    env = &*owned;
  } else if (env->fingerprint != environment_fingerprint(base)) {
    throw ConfigError("shared environment was built from a different data/teacher configuration");
  }
  std::vector<ExperimentConfig> cfgs;
  for (const auto& v : values) {
    ExperimentConfig c = base;
    if (!param.empty()) {
      set_config_value(c, param, v);
      validate_config(c);
    }
    cfgs.push_back(std::move(c));
  }
  struct Task {
    std::size_t value;
    std::string variant;
    std::size_t run_index;
  };
  std::vector<Task> tasks;
  for (std::size_t vi = 0; vi < cfgs.size(); ++vi)
    for (const auto& variant : base.variants)
      for (auto run : base.seeds) tasks.push_back({vi, variant, run});

  std::vector<CellResult> cells(tasks.size());
  parallel_for(tasks.size(), base.jobs, [&](std::size_t i) {
    const auto& t = tasks[i];
    cells[i] = run_cell(*env, cfgs[t.value], t.variant, t.run_index);
    if (!param.empty()) cells[i].sweep_value = values[t.value];
  });

  ExperimentReport rep;
  rep.config = base;
  rep.sweep_param = param;
  rep.teacher_val_top1 = env->teacher_val_top1;
  rep.teacher_test_top1 = env->teacher_test_top1;
  rep.cells = std::move(cells);
  return rep;
}

}  // namespace

ExperimentReport run_experiment(const ExperimentConfig& cfg, const Environment* env) {
  return run_grid(cfg, "", {""}, env);
}

ExperimentReport sweep(const ExperimentConfig& cfg, const std::string& param, const std::vector<std::string>& values,
                       const Environment* env) {
  const auto keys = config_keys();
  if (std::find(keys.begin(), keys.end(), param) == keys.end()) throw ConfigError("unknown sweep parameter '" + param + "'");
  const auto& ek = environment_keys();
  if (std::find(ek.begin(), ek.end(), param) != ek.end() || param == "variants" || param == "seeds" ||
      param == "jobs" || param == "out_dir") {
    throw ConfigError("parameter '" + param + "' cannot be swept");
  }
  if (values.empty()) throw ConfigError("sweep needs at least one value");
  return run_grid(cfg, param, values, env);
}

}  // namespace oefsmc::harness
