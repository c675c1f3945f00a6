#include <cmath>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "json.hpp"
#include "oefsmc/error.hpp"
#include "oefsmc/harness.hpp"

namespace oefsmc::harness {

namespace {

// Shortest text that round-trips the double.
std::string num(double v) {
  if (std::isnan(v)) return "NA";
  std::ostringstream os;
  os << std::setprecision(17) << v;
  double back = 0.0;
  for (int p = 6; p <= 17; ++p) {
    std::ostringstream t;
    t << std::setprecision(p) << v;
    std::istringstream(t.str()) >> back;
    if (back == v) return t.str();
  }
  return os.str();
}

nlohmann::json nullable(double v) { return std::isnan(v) ? nlohmann::json(nullptr) : nlohmann::json(v); }

nlohmann::json plan_json(const compress::PruningPlan& plan) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : plan.layers) layers.push_back({{"layer", l.layer}, {"channels", l.channels}, {"removed", l.removed}});
  return {{"ratio", plan.ratio}, {"layers", layers}};
}

}  // namespace

void write_report_csv(const ExperimentReport& report, std::ostream& os) {
  const std::size_t k = report.config.num_classes;
  os << "variant,seed,num,top1";
  for (std::size_t j = 0; j < k; ++j) os << ",recall_" << j;
  os << ",params_before,params_after";
  const bool swept = !report.sweep_param.empty();
  if (swept) os << ",param,value";
  os << '\n';
  for (const auto& c : report.cells) {
    os << c.variant << ',' << c.run_index << ',' << c.num << ',' << num(c.eval.top1);
    for (std::size_t j = 0; j < k; ++j) {
      const auto& r = j < c.eval.recall.size() ? c.eval.recall[j] : std::optional<double>{};
      os << ',' << (r ? num(*r) : "NA");
    }
    os << ',' << c.params_before << ',' << c.params_after;
    if (swept) os << ',' << report.sweep_param << ',' << c.sweep_value;
    os << '\n';
  }
}

std::string report_json(const ExperimentReport& report) {
  using nlohmann::json;
  json j;
  json cfg = json::object();
  for (const auto& [key, value] : config_entries(report.config)) cfg[key] = value;
  j["config"] = cfg;
  j["sweep_param"] = report.sweep_param;
  j["teacher"] = {{"val_top1", report.teacher_val_top1}, {"test_top1", report.teacher_test_top1}};
  json cells = json::array();
  for (const auto& c : report.cells) {
    json recall = json::array();
    for (const auto& r : c.eval.recall) recall.push_back(r ? json(*r) : json(nullptr));
    cells.push_back({{"variant", c.variant},
                     {"sweep_value", c.sweep_value},
                     {"run_index", c.run_index},
                     {"seed", c.seed},
                     {"num", c.num},
                     {"few_size", c.few_size},
                     {"m_aux", c.m_aux},
                     {"counts", c.counts},
                     {"beta", c.beta},
                     {"alpha", c.alpha},
                     {"Gamma", c.gamma_rates},
                     {"gamma", c.gamma},
                     {"top1", c.eval.top1},
                     {"recall", recall},
                     {"head_recall", nullable(c.head_recall)},
                     {"tail_recall", nullable(c.tail_recall)},
                     {"params_before", c.params_before},
                     {"params_after", c.params_after},
                     {"pruning_plan", plan_json(c.plan)},
                     {"distill_loss", c.distill_loss},
                     {"best_epoch", c.best_epoch},
                     {"epochs_run", c.epochs_run},
                     {"wall_seconds", c.wall_seconds}});
  }
  j["cells"] = cells;
  json aggs = json::array();
  for (const auto& a : report.aggregates()) {
    aggs.push_back({{"variant", a.variant},
                    {"sweep_value", a.sweep_value},
                    {"runs", a.runs},
                    {"mean_top1", a.mean_top1},
                    {"std_top1", a.std_top1},
                    {"mean_head_recall", nullable(a.mean_head_recall)},
                    {"mean_tail_recall", nullable(a.mean_tail_recall)}});
  }
  j["aggregates"] = aggs;
  return j.dump(2);
}

void write_report(const ExperimentReport& report, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream csv(dir / "report.csv");
  std::ofstream js(dir / "report.json");
  if (!csv || !js) throw Error("cannot write report files under " + dir.string());
  write_report_csv(report, csv);
  js << report_json(report) << '\n';
}

std::string summarize_report_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  if (!j.contains("aggregates")) throw FormatError(path.string() + ": no aggregates");
  std::ostringstream os;
  const std::string param = j.value("sweep_param", "");
  os << std::left << std::setw(20) << "variant";
  if (!param.empty()) os << std::setw(12) << param;
  os << std::right << std::setw(6) << "runs" << std::setw(10) << "top1" << std::setw(9) << "std" << std::setw(10)
     << "head" << std::setw(10) << "tail" << '\n';
  auto pct = [](const nlohmann::json& v) {
    std::ostringstream t;
    if (v.is_null()) t << "NA";
    else t << std::fixed << std::setprecision(2) << 100.0 * v.get<double>();
    return t.str();
  };
  for (const auto& a : j["aggregates"]) {
    os << std::left << std::setw(20) << a["variant"].get<std::string>();
    if (!param.empty()) os << std::setw(12) << a["sweep_value"].get<std::string>();
    os << std::right << std::setw(6) << a["runs"].get<std::size_t>() << std::setw(10) << pct(a["mean_top1"])
       << std::setw(9) << pct(a["std_top1"]) << std::setw(10) << pct(a["mean_head_recall"]) << std::setw(10)
       << pct(a["mean_tail_recall"]) << '\n';
  }
  return os.str();
}

}  // namespace oefsmc::harness
