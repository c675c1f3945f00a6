#include "oefsmc/dataset.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <sstream>

#include "oefsmc/error.hpp"
#include "oefsmc/rng.hpp"

namespace oefsmc::data {

namespace {

double to_f32(double v) { return static_cast<double>(static_cast<float>(v)); }

void put_u32(std::ostream& os, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                     static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  os.write(b, 4);
}

void put_u16(std::ostream& os, std::uint16_t v) {
  const char b[2] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff)};
  os.write(b, 2);
}

std::uint32_t get_u32(std::istream& is, const std::string& what) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) throw FormatError("truncated dataset file reading " + what);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

std::vector<std::vector<std::size_t>> rows_by_class(const Dataset& d) {
  std::vector<std::vector<std::size_t>> by(d.num_classes);
  for (std::size_t i = 0; i < d.size(); ++i) by[static_cast<std::size_t>(d.labels[i])].push_back(i);
  return by;
}

}  // namespace

std::string to_string(Provenance p) {
  switch (p) {
    case Provenance::full:
      return "full";
    case Provenance::few:
      return "few";
    case Provenance::ood_pool:
      return "ood-pool";
    case Provenance::auxiliary:
      return "auxiliary";
    case Provenance::validation:
      return "validation";
    case Provenance::test:
      return "test";
  }
  return "unknown";
}

std::vector<std::size_t> Dataset::class_counts() const {
  std::vector<std::size_t> m(num_classes, 0);
  if (!has_labels) return m;
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= num_classes) {
      throw IndexError("label " + std::to_string(y) + " outside [0, " + std::to_string(num_classes) + ")");
    }
    ++m[static_cast<std::size_t>(y)];
  }
  return m;
}

void Dataset::validate() const {
  if (features.rank() < 2) throw ShapeError("dataset features must be [n, ...], got " + shape_str(features.shape()));
  if (has_labels && labels.size() != size()) {
    throw ShapeError("dataset has " + std::to_string(size()) + " rows but " + std::to_string(labels.size()) +
                     " labels");
  }
  if (!has_labels && !labels.empty()) throw ShapeError("unlabeled dataset carries labels");
  class_counts();
}

Dataset subset(const Dataset& source, std::span<const std::size_t> rows, Provenance provenance) {
  Dataset out;
  out.features = gather_rows(source.features, rows);
  out.has_labels = source.has_labels;
  out.num_classes = source.num_classes;
  out.provenance = provenance;
  if (source.has_labels) {
    out.labels.reserve(rows.size());
    for (std::size_t r : rows) out.labels.push_back(source.labels[r]);
  }
  return out;
}

Dataset merge(const Dataset& a, const Dataset& b, Provenance provenance) {
  if (!a.has_labels || !b.has_labels) throw DomainError("merge requires labeled datasets");
  if (a.num_classes != b.num_classes) throw ShapeError("merge: class counts differ");
  Dataset out;
  out.features = concat_rows(a.features, b.features);
  out.labels = a.labels;
  out.labels.insert(out.labels.end(), b.labels.begin(), b.labels.end());
  out.num_classes = a.num_classes;
  out.provenance = provenance;
  return out;
}

std::size_t LongTailPlan::total() const {
  std::size_t t = 0;
  for (auto c : counts) t += c;
  return t;
}

LongTailPlan long_tail_counts(std::size_t num_classes, double rho, std::size_t n_max) {
  if (num_classes < 2) throw DomainError("long-tail plan needs K >= 2");
  if (!(rho >= 1.0) || !std::isfinite(rho)) throw DomainError("imbalance ratio must be >= 1");
  if (n_max < 1) throw DomainError("head-class count must be >= 1");
  LongTailPlan plan{num_classes, rho, n_max, {}};
  const double n = static_cast<double>(n_max);
  const auto floor_count = static_cast<std::size_t>(std::max(1.0, std::ceil(n / rho - 1e-9)));
  for (std::size_t j = 0; j < num_classes; ++j) {
    const double e = -static_cast<double>(j) / static_cast<double>(num_classes - 1);
    const auto c = static_cast<std::size_t>(std::llround(n * std::pow(rho, e)));
    plan.counts.push_back(std::max(floor_count, c));
  }
  return plan;
}

LongTailPlan balanced_plan(std::size_t num_classes, std::size_t total) {
  if (num_classes < 1) throw DomainError("balanced plan needs K >= 1");
  LongTailPlan plan{num_classes, 1.0, 0, std::vector<std::size_t>(num_classes, total / num_classes)};
  for (std::size_t j = 0; j < total % num_classes; ++j) ++plan.counts[j];
  plan.n_max = plan.counts[0];
  return plan;
}

Dataset subsample(const Dataset& source, const LongTailPlan& plan, std::uint64_t seed) {
  if (!source.has_labels) throw DomainError("subsample requires a labeled source");
  if (plan.counts.size() != source.num_classes) {
    throw ShapeError("plan has " + std::to_string(plan.counts.size()) + " classes, source has " +
                     std::to_string(source.num_classes));
  }
  auto by = rows_by_class(source);
  Rng rng(stream_seed(seed, "subsample"));
  std::vector<std::size_t> picked;
  for (std::size_t j = 0; j < by.size(); ++j) {
    if (by[j].size() < plan.counts[j]) {
      throw CapacityError("class " + std::to_string(j) + " has " + std::to_string(by[j].size()) +
                          " samples, plan needs " + std::to_string(plan.counts[j]));
    }
    rng.shuffle(by[j]);
    picked.insert(picked.end(), by[j].begin(), by[j].begin() + static_cast<std::ptrdiff_t>(plan.counts[j]));
  }
  return subset(source, picked, Provenance::few);
}

Digest row_digest(std::span<const double> row) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (double v : row) {
    const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
    for (int s = 0; s < 32; s += 8) {
      h ^= (bits >> s) & 0xffu;
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

std::unordered_set<Digest> digest_set(const Dataset& d) {
  std::unordered_set<Digest> out;
  out.reserve(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) out.insert(row_digest(d.features.row(i)));
  return out;
}

OODPool build_ood_pool(const Dataset& ood_source, const Dataset& d_full, std::size_t n, std::uint64_t seed) {
  if (ood_source.size() > 0 && d_full.size() > 0 && ood_source.sample_shape() != d_full.sample_shape()) {
    throw ShapeError("OOD source rows " + shape_str(ood_source.sample_shape()) + " vs full-set rows " +
                     shape_str(d_full.sample_shape()));
  }
  OODPool pool;
  pool.excluded = digest_set(d_full);
  std::unordered_set<Digest> seen;
  std::vector<std::size_t> survivors;
  for (std::size_t i = 0; i < ood_source.size(); ++i) {
    const Digest h = row_digest(ood_source.features.row(i));
    if (pool.excluded.contains(h) || !seen.insert(h).second) continue;
    survivors.push_back(i);
  }
  if (survivors.size() < n) {
    throw CapacityError("OOD source has " + std::to_string(survivors.size()) +
                        " rows after deduplication, pool needs " + std::to_string(n));
  }
  Rng rng(stream_seed(seed, "ood-pool"));
  rng.shuffle(survivors);
  survivors.resize(n);
  pool.data = subset(ood_source, survivors, Provenance::ood_pool);
  pool.data.has_labels = false;
  pool.data.labels.clear();
  pool.data.num_classes = d_full.num_classes;
  return pool;
}

SynthSplit synth_dataset(std::size_t num_classes, std::size_t dim, std::size_t per_class_train,
                         std::size_t per_class_test, double separation, std::uint64_t seed) {
  if (num_classes < 2) throw DomainError("synthetic data needs K >= 2");
  if (dim < 2) throw DomainError("synthetic data needs dim >= 2");
  if (!(separation >= 0.0)) throw DomainError("separation must be >= 0");
  Rng rng(stream_seed(seed, "synth"));
  const double radius = separation / std::sqrt(2.0);
  std::vector<std::vector<double>> means(num_classes, std::vector<double>(dim, 0.0));
  for (std::size_t j = 0; j < num_classes; ++j) {
    if (num_classes <= dim) {
      means[j][j] = radius;
      continue;
    }
    double norm = 0.0;
    for (auto& v : means[j]) {
      v = rng.normal();
      norm += v * v;
    }
    norm = std::sqrt(norm);
    for (auto& v : means[j]) v *= radius / norm;
  }
  const auto make = [&](std::size_t per_class, Provenance prov) {
    Dataset d;
    d.num_classes = num_classes;
    d.provenance = prov;
    d.features = Tensor({per_class * num_classes, dim});
    d.labels.reserve(per_class * num_classes);
    std::size_t r = 0;
    for (std::size_t i = 0; i < per_class; ++i) {
      for (std::size_t j = 0; j < num_classes; ++j, ++r) {
        auto row = d.features.row(r);
        for (std::size_t k = 0; k < dim; ++k) row[k] = to_f32(means[j][k] + rng.normal());
        d.labels.push_back(static_cast<int>(j));
      }
    }
    return d;
  };
  SynthSplit out;
  out.train = make(per_class_train, Provenance::full);
  out.test = make(per_class_test, Provenance::test);
  return out;
}

Dataset synth_ood(const OODSpec& spec, std::uint64_t seed) {
  if (spec.dim < 1 || spec.clusters < 1) throw DomainError("OOD generator needs dim >= 1 and clusters >= 1");
  Rng rng(stream_seed(seed, "synth-ood"));
  std::vector<std::vector<double>> centres(spec.clusters, std::vector<double>(spec.dim));
  for (auto& c : centres) {
    double norm = 0.0;
    for (auto& v : c) {
      v = rng.normal();
      norm += v * v;
    }
    norm = std::sqrt(norm);
    for (auto& v : c) v *= spec.radius / norm;
  }
  Dataset d;
  d.has_labels = false;
  d.provenance = Provenance::ood_pool;
  d.features = Tensor({spec.size, spec.dim});
  for (std::size_t r = 0; r < spec.size; ++r) {
    const auto& c = centres[r % spec.clusters];
    auto row = d.features.row(r);
    for (std::size_t k = 0; k < spec.dim; ++k) row[k] = to_f32(c[k] + spec.spread * rng.normal());
  }
  return d;
}

ValidationSplit split_validation(const Dataset& pool, double fraction, std::uint64_t seed) {
  if (!pool.has_labels) throw DomainError("validation split requires labels");
  if (!(fraction >= 0.0 && fraction <= 1.0)) throw DomainError("validation fraction must lie in [0, 1]");
  auto by = rows_by_class(pool);
  Rng rng(stream_seed(seed, "validation"));
  std::vector<std::size_t> val, test;
  for (auto& rows : by) {
    rng.shuffle(rows);
    const auto nv = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(rows.size())));
    val.insert(val.end(), rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(nv));
    test.insert(test.end(), rows.begin() + static_cast<std::ptrdiff_t>(nv), rows.end());
  }
  std::sort(val.begin(), val.end());
  std::sort(test.begin(), test.end());
  return {subset(pool, val, Provenance::validation), subset(pool, test, Provenance::test)};
}

void write_dataset(const Dataset& d, const std::filesystem::path& path) {
  d.validate();
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cannot write " + path.string());
  os.write("OEFS1", 5);
  put_u32(os, static_cast<std::uint32_t>(d.size()));
  put_u32(os, static_cast<std::uint32_t>(d.num_classes));
  const Shape dims = d.sample_shape();
  put_u32(os, static_cast<std::uint32_t>(dims.size()));
  for (auto v : dims) put_u32(os, static_cast<std::uint32_t>(v));
  os.put(d.has_labels ? 1 : 0);
  for (double v : d.features.data()) put_u32(os, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  if (d.has_labels) {
    for (int y : d.labels) put_u16(os, static_cast<std::uint16_t>(y));
  }
  if (!os) throw FormatError("write failed for " + path.string());
}

Dataset read_dataset(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot read " + path.string());
  char magic[5];
  if (!is.read(magic, 5) || std::string(magic, 5) != "OEFS1") throw FormatError(path.string() + ": bad magic");
  Dataset d;
  const std::uint32_t n = get_u32(is, "n");
  d.num_classes = get_u32(is, "K");
  const std::uint32_t rank = get_u32(is, "rank");
  if (rank == 0 || rank > 8) throw FormatError(path.string() + ": implausible feature rank");
  Shape shape{n};
  for (std::uint32_t i = 0; i < rank; ++i) shape.push_back(get_u32(is, "dims"));
  const int flag = is.get();
  if (flag != 0 && flag != 1) throw FormatError(path.string() + ": bad has_labels flag");
  d.has_labels = flag == 1;
  d.features = Tensor(shape);
  for (double& v : d.features.data()) v = static_cast<double>(std::bit_cast<float>(get_u32(is, "features")));
  if (d.has_labels) {
    d.labels.resize(n);
    for (auto& y : d.labels) {
      unsigned char b[2];
      if (!is.read(reinterpret_cast<char*>(b), 2)) throw FormatError(path.string() + ": truncated labels");
      y = static_cast<int>(b[0] | (b[1] << 8));
    }
  }
  if (is.peek() != std::char_traits<char>::eof()) throw FormatError(path.string() + ": trailing bytes");
  d.validate();
  return d;
}

Dataset read_csv(const std::filesystem::path& path, std::size_t num_classes) {
  std::ifstream is(path);
  if (!is) throw FormatError("cannot read " + path.string());
  std::vector<double> values;
  std::vector<int> labels;
  std::size_t width = 0;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(cell, &used));
      } catch (const std::exception&) {
        throw FormatError(path.string() + ":" + std::to_string(lineno) + ": bad number '" + cell + "'");
      }
    }
    if (row.size() < 2) throw FormatError(path.string() + ":" + std::to_string(lineno) + ": need features + label");
    if (width == 0) width = row.size() - 1;
    if (row.size() - 1 != width) throw FormatError(path.string() + ":" + std::to_string(lineno) + ": ragged row");
    const double y = row.back();
    if (y < 0 || y != std::floor(y)) throw FormatError(path.string() + ":" + std::to_string(lineno) + ": bad label");
    labels.push_back(static_cast<int>(y));
    for (std::size_t k = 0; k < width; ++k) values.push_back(to_f32(row[k]));
  }
  Dataset d;
  d.features = Tensor({labels.size(), width}, std::move(values));
  d.labels = std::move(labels);
  int max_label = -1;
  for (int y : d.labels) max_label = std::max(max_label, y);
  d.num_classes = num_classes ? num_classes : static_cast<std::size_t>(max_label + 1);
  d.validate();
  return d;
}

}  // namespace oefsmc::data
