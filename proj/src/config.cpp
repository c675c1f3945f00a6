#include "oefsmc/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

#include "oefsmc/error.hpp"
#include "oefsmc/harness.hpp"

namespace oefsmc::harness {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::string fmt_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "': '" + v + "' is not a number");
  }
}

std::uint64_t parse_uint(const std::string& key, const std::string& v) {
  if (v.empty() || !std::all_of(v.begin(), v.end(), [](unsigned char c) { return std::isdigit(c); })) {
    throw ConfigError("key '" + key + "': '" + v + "' is not a nonnegative integer");
  }
  try {
    return std::stoull(v);
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "': '" + v + "' is out of range");
  }
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("key '" + key + "': '" + v + "' is not a boolean");
}

struct Field {
  std::string key;
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

template <class T>
Field field(const char* key, T ExperimentConfig::*member) {
  Field f;
  f.key = key;
  if constexpr (std::is_same_v<T, double>) {
    f.set = [member, key](ExperimentConfig& c, const std::string& v) { c.*member = parse_double(key, v); };
    f.get = [member](const ExperimentConfig& c) { return fmt_double(c.*member); };
  } else if constexpr (std::is_same_v<T, bool>) {
    f.set = [member, key](ExperimentConfig& c, const std::string& v) { c.*member = parse_bool(key, v); };
    f.get = [member](const ExperimentConfig& c) { return std::string(c.*member ? "true" : "false"); };
  } else if constexpr (std::is_same_v<T, std::string>) {
    f.set = [member](ExperimentConfig& c, const std::string& v) { c.*member = v; };
    f.get = [member](const ExperimentConfig& c) { return c.*member; };
  } else if constexpr (std::is_same_v<T, std::vector<std::size_t>>) {
    f.set = [member, key](ExperimentConfig& c, const std::string& v) {
      std::vector<std::size_t> out;
      for (const auto& s : split_list(v)) out.push_back(static_cast<std::size_t>(parse_uint(key, s)));
      c.*member = std::move(out);
    };
    f.get = [member](const ExperimentConfig& c) {
      std::string s;
      for (std::size_t i = 0; i < (c.*member).size(); ++i) s += (i ? "," : "") + std::to_string((c.*member)[i]);
      return s;
    };
  } else if constexpr (std::is_same_v<T, std::vector<std::string>>) {
    f.set = [member](ExperimentConfig& c, const std::string& v) { c.*member = split_list(v); };
    f.get = [member](const ExperimentConfig& c) {
      std::string s;
      for (std::size_t i = 0; i < (c.*member).size(); ++i) s += (i ? "," : "") + (c.*member)[i];
      return s;
    };
  } else {
    f.set = [member, key](ExperimentConfig& c, const std::string& v) { c.*member = static_cast<T>(parse_uint(key, v)); };
    f.get = [member](const ExperimentConfig& c) { return std::to_string(c.*member); };
  }
  return f;
}

const std::vector<Field>& fields() {
  using C = ExperimentConfig;
  static const std::vector<Field> table = {
      field("train_file", &C::train_file),
      field("test_file", &C::test_file),
      field("ood_file", &C::ood_file),
      field("num_classes", &C::num_classes),
      field("dim", &C::dim),
      field("train_per_class", &C::train_per_class),
      field("test_per_class", &C::test_per_class),
      field("separation", &C::separation),
      field("ood_source_size", &C::ood_source_size),
      field("ood_clusters", &C::ood_clusters),
      field("ood_radius", &C::ood_radius),
      field("ood_spread", &C::ood_spread),
      field("validation_fraction", &C::validation_fraction),
      field("rho", &C::rho),
      field("n_max", &C::n_max),
      field("arch", &C::arch),
      field("hidden", &C::hidden),
      field("input_shape", &C::input_shape),
      field("conv_channels", &C::conv_channels),
      field("teacher_epochs", &C::teacher_epochs),
      field("teacher_lr", &C::teacher_lr),
      field("batch_size", &C::batch_size),
      field("momentum", &C::momentum),
      field("prune_ratio", &C::prune_ratio),
      field("lambda", &C::lambda),
      field("temperature", &C::temperature),
      field("distill_epochs", &C::distill_epochs),
      field("distill_lr", &C::distill_lr),
      field("weight_mode", &C::weight_mode),
      field("importance_source", &C::importance_source),
      field("m_aux", &C::m_aux),
      field("ood_pool_size", &C::ood_pool_size),
      field("resample_aux_labels", &C::resample_aux_labels),
      field("eta", &C::eta),
      field("finetune_epochs", &C::finetune_epochs),
      field("finetune_lr", &C::finetune_lr),
      field("patience", &C::patience),
      field("variants", &C::variants),
      field("seeds", &C::seeds),
      field("master_seed", &C::master_seed),
      field("out_dir", &C::out_dir),
      field("jobs", &C::jobs),
  };
  return table;
}

const Field& find_field(const std::string& key) {
  for (const auto& f : fields())
    if (f.key == key) return f;
  throw ConfigError("unknown config key '" + key + "'");
}

}  // namespace

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& f : fields()) keys.push_back(f.key);
  return keys;
}

void set_config_value(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
  find_field(key).set(cfg, trim(value));
}

std::string get_config_value(const ExperimentConfig& cfg, const std::string& key) { return find_field(key).get(cfg); }

ExperimentConfig parse_config(const std::string& text, ExperimentConfig base) {
  std::istringstream is(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    set_config_value(base, trim(line.substr(0, eq)), line.substr(eq + 1));
  }
  return base;
}

ExperimentConfig load_config(const std::filesystem::path& path, ExperimentConfig base) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read config " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_config(ss.str(), std::move(base));
}

std::vector<std::pair<std::string, std::string>> config_entries(const ExperimentConfig& cfg) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& f : fields()) out.emplace_back(f.key, f.get(cfg));
  return out;
}

void validate_config(const ExperimentConfig& c) {
  const auto require = [](bool ok, const std::string& key, const std::string& why) {
    if (!ok) throw ConfigError("key '" + key + "': " + why);
  };
  require(c.num_classes >= 2, "num_classes", "must be >= 2");
  require(c.dim >= 2, "dim", "must be >= 2");
  require(c.train_per_class >= 1, "train_per_class", "must be >= 1");
  require(c.test_per_class >= 2, "test_per_class", "must be >= 2");
  require(c.separation >= 0.0 && std::isfinite(c.separation), "separation", "must be a finite value >= 0");
  require(c.ood_clusters >= 1, "ood_clusters", "must be >= 1");
  require(c.ood_radius >= 0.0, "ood_radius", "must be >= 0");
  require(c.ood_spread > 0.0, "ood_spread", "must be > 0");
  require(c.validation_fraction > 0.0 && c.validation_fraction < 1.0, "validation_fraction", "must lie in (0, 1)");
  require(c.rho >= 1.0 && std::isfinite(c.rho), "rho", "must be >= 1");
  require(c.n_max >= 1, "n_max", "must be >= 1");
  require(c.arch == "mlp" || c.arch == "conv", "arch", "must be mlp or conv");
  require(std::all_of(c.hidden.begin(), c.hidden.end(), [](std::size_t h) { return h >= 1; }), "hidden",
          "widths must be >= 1");
  if (c.arch == "conv") {
    require(c.input_shape.size() == 3 && shape_size(c.input_shape) == c.dim, "input_shape",
            "must be C,H,W with C*H*W == dim");
    require(!c.conv_channels.empty(), "conv_channels", "needs at least one conv layer");
  } else {
    require(!c.hidden.empty(), "hidden", "mlp needs at least one hidden layer");
  }
  require(c.teacher_lr > 0.0, "teacher_lr", "must be > 0");
  require(c.batch_size >= 1, "batch_size", "must be >= 1");
  require(c.momentum >= 0.0 && c.momentum < 1.0, "momentum", "must lie in [0, 1)");
  require(c.prune_ratio >= 0.0 && c.prune_ratio < 1.0, "prune_ratio", "must lie in [0, 1)");
  require(c.lambda >= 0.0 && c.lambda <= 1.0, "lambda", "must lie in [0, 1]");
  require(c.temperature > 0.0, "temperature", "must be > 0");
  require(c.distill_lr > 0.0, "distill_lr", "must be > 0");
  require(c.weight_mode == "inverse-frequency" || c.weight_mode == "paper-frequency", "weight_mode",
          "must be inverse-frequency or paper-frequency");
  require(c.importance_source == "mixture" || c.importance_source == "few", "importance_source",
          "must be mixture or few");
  if (c.m_aux != "M" && c.m_aux != "uniform") {
    const bool digits = !c.m_aux.empty() && std::all_of(c.m_aux.begin(), c.m_aux.end(), [](unsigned char ch) {
      return std::isdigit(ch);
    });
    require(digits, "m_aux", "must be M, uniform or a count");
    require(std::stoull(c.m_aux) <= c.ood_pool_size, "m_aux", "exceeds ood_pool_size");
  }
  require(c.ood_pool_size >= 1, "ood_pool_size", "must be >= 1");
  require(!c.ood_file.empty() || c.ood_source_size >= c.ood_pool_size, "ood_source_size",
          "must be >= ood_pool_size");
  require(c.eta >= 0.0 && std::isfinite(c.eta), "eta", "must be >= 0");
  require(c.finetune_lr > 0.0, "finetune_lr", "must be > 0");
  require(c.patience >= 1, "patience", "must be >= 1");
  require(!c.variants.empty(), "variants", "needs at least one variant");
  for (const auto& v : c.variants) {
    try {
      resolve_variant(v);
    } catch (const DomainError& e) {
      throw ConfigError("key 'variants': " + std::string(e.what()));
    }
  }
  require(!c.seeds.empty(), "seeds", "needs at least one run index");
  require(c.jobs >= 1, "jobs", "must be >= 1");
  require((c.train_file.empty() && c.test_file.empty()) || (!c.train_file.empty() && !c.test_file.empty()),
          "train_file", "train_file and test_file must be given together");
}

std::pair<Shape, std::vector<nn::LayerSpec>> build_architecture(const ExperimentConfig& cfg) {
  using nn::LayerSpec;
  std::vector<LayerSpec> specs;
  Shape input;
  std::size_t width = 0;
  if (cfg.arch == "conv") {
    input = Shape(cfg.input_shape.begin(), cfg.input_shape.end());
    std::size_t ch = input[0], h = input[1], w = input[2];
    for (std::size_t i = 0; i < cfg.conv_channels.size(); ++i) {
      specs.push_back(LayerSpec::conv2d(ch, cfg.conv_channels[i], 3, 1, 1));
      specs.push_back(LayerSpec::relu());
      ch = cfg.conv_channels[i];
      if (i == 0 && h >= 4 && w >= 4) {
        specs.push_back(LayerSpec::max_pool(2));
        h /= 2;
        w /= 2;
      }
    }
    specs.push_back(LayerSpec::flatten());
    width = ch * h * w;
  } else {
    input = {cfg.dim};
    width = cfg.dim;
  }
  for (std::size_t h : cfg.hidden) {
    specs.push_back(LayerSpec::dense(width, h));
    specs.push_back(LayerSpec::relu());
    width = h;
  }
  specs.push_back(LayerSpec::head(width, cfg.num_classes));
  return {input, specs};
}

}  // namespace oefsmc::harness
