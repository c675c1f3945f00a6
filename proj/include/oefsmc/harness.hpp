#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "oefsmc/compress.hpp"
#include "oefsmc/config.hpp"
#include "oefsmc/dataset.hpp"
#include "oefsmc/finetune.hpp"
#include "oefsmc/metrics.hpp"
#include "oefsmc/nn.hpp"
#include "oefsmc/rebalance.hpp"

namespace oefsmc::harness {

// Which parts of the method a variant keeps.
//   full               OOD data in compression and fine-tuning
//   wo-comp            no OOD data in compression (count-proportional
//                      importance weights, lambda = 1)
//   wo-ft              no OOD data in fine-tuning (eta = 0)
//   wo-all             neither
//   balanced-baseline  wo-all on an equal-count plan of the same total M
// Names joined with '+' compose (e.g. "wo-comp+wo-ft" == "wo-all").
struct VariantFlags {
  bool ood_compress = true;
  bool ood_finetune = true;
  bool balanced = false;

  friend bool operator==(const VariantFlags&, const VariantFlags&) = default;
};

VariantFlags resolve_variant(const std::string& name);
const std::vector<std::string>& variant_names();

// Seed of run `run_index`, shared by every variant of that run.
std::uint64_t run_seed(std::uint64_t master_seed, std::size_t run_index);

// Everything that depends only on the data/teacher part of the config.
struct Environment {
  data::Dataset full;
  data::Dataset validation;
  data::Dataset test;
  data::Dataset ood_source;
  nn::Network teacher;
  double teacher_val_top1 = 0.0;
  double teacher_test_top1 = 0.0;
  std::string fingerprint;
};

// Config keys that determine the Environment.
const std::vector<std::string>& environment_keys();
std::string environment_fingerprint(const ExperimentConfig& cfg);

nn::Network train_teacher(const ExperimentConfig& cfg, const data::Dataset& full, std::uint64_t seed);
Environment prepare_environment(const ExperimentConfig& cfg);

struct SampleStage {
  data::LongTailPlan plan;
  data::Dataset few;
  data::OODPool pool;
  rebalance::ClassPrior prior;
  rebalance::ComplementaryDistribution dist;
  std::vector<double> gamma;
  rebalance::AuxiliaryDataset aux;
};

// "M" -> few_size; "uniform" -> round(M (K alpha - 1)); otherwise the count.
std::size_t resolve_m_aux(const std::string& spec, const rebalance::ClassPrior& prior, std::size_t few_size);

SampleStage sample_stage(const data::Dataset& full, const data::Dataset& ood_source, const ExperimentConfig& cfg,
                         const VariantFlags& flags, std::uint64_t seed);

struct CompressStage {
  nn::Network student;
  compress::ClassWeights weights;
  std::vector<compress::LayerScores> scores;
  compress::PruningPlan plan;
  std::vector<double> loss_history;
  double lambda = 1.0;
  std::size_t params_before = 0;
  std::size_t params_after = 0;
};

CompressStage compress_stage(const nn::Network& teacher, const data::Dataset& few, const data::Dataset& aux,
                             const ExperimentConfig& cfg, const VariantFlags& flags, std::uint64_t seed);

finetune::FinetuneResult finetune_stage(const nn::Network& student, const data::Dataset& few,
                                        const data::Dataset& aux, std::span<const double> gamma,
                                        const rebalance::ComplementaryDistribution& dist,
                                        const data::Dataset& validation, const ExperimentConfig& cfg,
                                        const VariantFlags& flags, std::uint64_t seed);

struct CellResult {
  std::string variant;
  std::string sweep_value;  // empty outside sweeps
  std::size_t run_index = 0;
  std::uint64_t seed = 0;
  std::size_t num = 0;  // head-class count n_max
  std::size_t few_size = 0;
  std::size_t m_aux = 0;
  Evaluation eval;
  double head_recall = 0.0;
  double tail_recall = 0.0;
  std::size_t params_before = 0;
  std::size_t params_after = 0;
  std::vector<std::size_t> counts;
  std::vector<double> beta;
  std::vector<double> gamma_rates;
  std::vector<double> gamma;
  double alpha = 0.0;
  compress::PruningPlan plan;
  std::vector<double> distill_loss;
  std::size_t best_epoch = 0;
  std::size_t epochs_run = 0;
  double wall_seconds = 0.0;
};

CellResult run_cell(const Environment& env, const ExperimentConfig& cfg, const std::string& variant,
                    std::size_t run_index);

struct Aggregate {
  std::string variant;
  std::string sweep_value;
  std::size_t runs = 0;
  double mean_top1 = 0.0;
  double std_top1 = 0.0;
  double mean_head_recall = 0.0;
  double mean_tail_recall = 0.0;
};

struct ExperimentReport {
  ExperimentConfig config;
  std::string sweep_param;  // empty unless produced by sweep()
  double teacher_val_top1 = 0.0;
  double teacher_test_top1 = 0.0;
  std::vector<CellResult> cells;  // sorted by (sweep value, variant, run index)

  std::vector<Aggregate> aggregates() const;
  // Aggregate for one (variant, sweep value); throws when absent.
  Aggregate aggregate(const std::string& variant, const std::string& sweep_value = "") const;
};

// Runs every (variant, run index) of the config. `env` may be shared across
// calls with configs of the same environment fingerprint.
ExperimentReport run_experiment(const ExperimentConfig& cfg, const Environment* env = nullptr);

// One run_experiment per value of `param` (any non-environment key),
// sharing the environment and run seeds.
ExperimentReport sweep(const ExperimentConfig& cfg, const std::string& param, const std::vector<std::string>& values,
                       const Environment* env = nullptr);

// report.csv: variant, seed, num, top1, recall_0..recall_{K-1},
// params_before, params_after (plus param, value for sweeps).
void write_report_csv(const ExperimentReport& report, std::ostream& os);
std::string report_json(const ExperimentReport& report);
void write_report(const ExperimentReport& report, const std::filesystem::path& dir);

// Human-readable aggregate table of a report.json file.
std::string summarize_report_file(const std::filesystem::path& path);

}  // namespace oefsmc::harness
