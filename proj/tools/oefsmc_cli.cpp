// Command-line front end: every pipeline stage plus experiments and sweeps.
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "oefsmc/bayes.hpp"
#include "oefsmc/error.hpp"
#include "oefsmc/harness.hpp"

namespace fs = std::filesystem;
using namespace oefsmc;
using namespace oefsmc::harness;

namespace {

struct Common {
  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> variant;
  std::optional<std::string> out;
  std::optional<std::size_t> jobs;
  std::size_t run = 0;
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config_path, "key = value config file");
  sub->add_option("--set", c.overrides, "override one key (key=value); repeatable");
  sub->add_option("--seed", c.seed, "master seed");
  sub->add_option("--variant", c.variant, "variant name(s), comma separated");
  sub->add_option("--out", c.out, "output directory");
  sub->add_option("--jobs", c.jobs, "worker threads");
}

ExperimentConfig resolve_config(const Common& c) {
  ExperimentConfig cfg = c.config_path.empty() ? ExperimentConfig{} : load_config(c.config_path);
  for (const auto& kv : c.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    set_config_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (c.seed) cfg.master_seed = *c.seed;
  if (c.variant) set_config_value(cfg, "variants", *c.variant);
  if (c.out) cfg.out_dir = *c.out;
  if (c.jobs) cfg.jobs = *c.jobs;
  validate_config(cfg);
  return cfg;
}

void write_text(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path().empty() ? fs::path(".") : path.parent_path());
  std::ofstream os(path);
  if (!os) throw Error("cannot write " + path.string());
  os << text;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

nlohmann::json sample_json(const SampleStage& s) {
  return {{"counts", s.plan.counts}, {"few_size", s.few.size()},  {"m_aux", s.aux.size()},
          {"beta", s.prior.beta},    {"alpha", s.dist.alpha},     {"Gamma", s.dist.gamma_rates},
          {"gamma", s.gamma},        {"aux_counts", s.aux.data.class_counts()}};
}

int run(int argc, char** argv) {
  CLI::App app{"Few-sample compression of class-imbalanced data with labelled OOD data"};
  app.require_subcommand(1);
  Common c;

  auto* teacher = app.add_subcommand("teacher-train", "train the teacher and save it");
  auto* sample = app.add_subcommand("sample", "draw D_few and D_aux for one run");
  auto* compress_cmd = app.add_subcommand("compress", "prune and distill the teacher for one run");
  auto* finetune_cmd = app.add_subcommand("finetune", "full pipeline for one run, with the fine-tuning log");
  auto* experiment = app.add_subcommand("experiment", "every (variant, seed) cell of the config");
  auto* sweep_cmd = app.add_subcommand("sweep", "experiment once per value of one parameter");
  auto* theorem = app.add_subcommand("verify-theorem1", "random check of Bayes invariance under OOD mixing");
  auto* report = app.add_subcommand("report", "summarize a report.json");

  for (auto* s : {teacher, sample, compress_cmd, finetune_cmd, experiment, sweep_cmd}) add_common(s, c);
  for (auto* s : {sample, compress_cmd, finetune_cmd}) s->add_option("--run", c.run, "run index");

  std::string param, values;
  sweep_cmd->add_option("--param", param, "parameter to vary")->required();
  sweep_cmd->add_option("--values", values, "comma separated values")->required();

  std::size_t trials = 1000;
  std::uint64_t theorem_seed = 0;
  std::string theorem_out;
  bool disjoint = false;
  theorem->add_option("--trials", trials, "random instances");
  theorem->add_option("--seed", theorem_seed, "seed");
  theorem->add_option("--out", theorem_out, "also write the JSON report here");
  theorem->add_flag("--disjoint", disjoint, "OOD support disjoint from the data support");

  std::string report_path;
  report->add_option("path", report_path, "report.json or a directory containing it")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  if (*theorem) {
    bayes::InstanceSpec spec;
    spec.disjoint_ood = disjoint;
    const auto rep = bayes::theorem1_check(trials, theorem_seed, spec);
    std::cout << rep.to_json() << '\n';
    if (!theorem_out.empty()) write_text(theorem_out, rep.to_json() + "\n");
    return 0;
  }
  if (*report) {
    fs::path p = report_path;
    if (fs::is_directory(p)) p /= "report.json";
    std::cout << summarize_report_file(p);
    return 0;
  }

  const ExperimentConfig cfg = resolve_config(c);
  const fs::path out = cfg.out_dir;

  if (*experiment) {
    const auto rep = run_experiment(cfg);
    write_report(rep, out);
    std::cout << summarize_report_file(out / "report.json");
    return 0;
  }
  if (*sweep_cmd) {
    const auto rep = harness::sweep(cfg, param, split_list(values));
    write_report(rep, out);
    std::cout << summarize_report_file(out / "report.json");
    return 0;
  }

  const Environment env = prepare_environment(cfg);
  if (*teacher) {
    fs::create_directories(out);
    nn::save_network(env.teacher, out / "teacher.json");
    nlohmann::json j{{"val_top1", env.teacher_val_top1},
                     {"test_top1", env.teacher_test_top1},
                     {"parameters", env.teacher.parameter_count()}};
    write_text(out / "teacher_summary.json", j.dump(2) + "\n");
    std::cout << j.dump(2) << '\n';
    return 0;
  }

  const std::string variant = cfg.variants.front();
  const VariantFlags flags = resolve_variant(variant);
  const std::uint64_t seed = run_seed(cfg.master_seed, c.run);
  const SampleStage s = sample_stage(env.full, env.ood_source, cfg, flags, seed);
  fs::create_directories(out);
  if (*sample) {
    data::write_dataset(s.few, out / "few.bin");
    data::write_dataset(s.aux.data, out / "aux.bin");
    write_text(out / "sample.json", sample_json(s).dump(2) + "\n");
    std::cout << sample_json(s).dump(2) << '\n';
    return 0;
  }

  const CompressStage cs = compress_stage(env.teacher, s.few, s.aux.data, cfg, flags, seed);
  if (*compress_cmd) {
    nn::save_network(cs.student, out / "student.json");
    nlohmann::json j{{"params_before", cs.params_before},
                     {"params_after", cs.params_after},
                     {"lambda", cs.lambda},
                     {"weights", cs.weights.w},
                     {"distill_loss", cs.loss_history},
                     {"student_test_top1", evaluate(cs.student, env.test).top1}};
    write_text(out / "compress.json", j.dump(2) + "\n");
    std::cout << "params " << cs.params_before << " -> " << cs.params_after
              << ", distilled student top1 " << j["student_test_top1"].get<double>() << '\n';
    return 0;
  }

  const auto ft = finetune_stage(cs.student, s.few, s.aux.data, s.gamma, s.dist, env.validation, cfg, flags, seed);
  nn::save_network(ft.network, out / "finetuned.json");
  std::ofstream log(out / "finetune_log.csv");
  finetune::write_epoch_log_csv(log, ft.log);
  const auto ev = evaluate(ft.network, env.test);
  std::cout << "best epoch " << ft.best_epoch << ", test top1 " << ev.top1 << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
