#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "oefsmc/nn.hpp"

namespace oefsmc::harness {

// Every knob of one experiment. The text form is a flat `key = value` file;
// see `config_keys()` for the schema and README.md for documentation.
struct ExperimentConfig {
  // Data. Empty paths select the synthetic generators.
  std::string train_file;
  std::string test_file;
  std::string ood_file;
  std::size_t num_classes = 10;
  std::size_t dim = 16;
  std::size_t train_per_class = 200;
  std::size_t test_per_class = 100;
  double separation = 3.5;
  std::size_t ood_source_size = 2000;
  std::size_t ood_clusters = 10;
  double ood_radius = 0.7;
  double ood_spread = 1.0;
  double validation_fraction = 0.2;

  // Few-sample plan.
  double rho = 100.0;
  std::size_t n_max = 10;

  // Architecture: "mlp" (dense hidden layers) or "conv" (3x3 conv stack on
  // input_shape, then dense hidden layers).
  std::string arch = "mlp";
  std::vector<std::size_t> hidden = {64, 64};
  std::vector<std::size_t> input_shape = {1, 4, 4};
  std::vector<std::size_t> conv_channels = {8};

  // Teacher training.
  std::size_t teacher_epochs = 30;
  double teacher_lr = 0.01;

  // Shared optimizer settings.
  std::size_t batch_size = 32;
  double momentum = 0.9;

  // Compression.
  double prune_ratio = 0.6;
  double lambda = 0.5;
  double temperature = 3.0;
  std::size_t distill_epochs = 200;
  double distill_lr = 0.01;
  std::string weight_mode = "inverse-frequency";
  std::string importance_source = "mixture";  // or "few"

  // Auxiliary data: "M" (match |D_few|), "uniform" (M (K alpha - 1)) or a count.
  std::string m_aux = "M";
  std::size_t ood_pool_size = 500;
  bool resample_aux_labels = false;

  // Fine-tuning.
  double eta = 2.5;
  std::size_t finetune_epochs = 100;
  double finetune_lr = 0.01;
  std::size_t patience = 5;

  // Runs.
  std::vector<std::string> variants = {"full"};
  std::vector<std::size_t> seeds = {0, 1, 2, 3, 4};
  std::uint64_t master_seed = 0;
  std::string out_dir = "out";
  std::size_t jobs = 1;
};

std::vector<std::string> config_keys();

// Sets one key from its text form; unknown keys and unparsable values raise
// ConfigError.
void set_config_value(ExperimentConfig& cfg, const std::string& key, const std::string& value);
std::string get_config_value(const ExperimentConfig& cfg, const std::string& key);

// Parses `key = value` lines (# starts a comment) on top of `base`.
ExperimentConfig parse_config(const std::string& text, ExperimentConfig base = {});
ExperimentConfig load_config(const std::filesystem::path& path, ExperimentConfig base = {});

// Every key with its current value, in schema order.
std::vector<std::pair<std::string, std::string>> config_entries(const ExperimentConfig& cfg);

// Domain checks for every field; raises ConfigError naming the first
// offending key.
void validate_config(const ExperimentConfig& cfg);

// Layer stack and per-sample input shape for the configured architecture.
std::pair<Shape, std::vector<nn::LayerSpec>> build_architecture(const ExperimentConfig& cfg);

}  // namespace oefsmc::harness
