#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "oefsmc/tensor.hpp"

namespace oefsmc::data {

enum class Provenance { full, few, ood_pool, auxiliary, validation, test };

std::string to_string(Provenance p);

struct Dataset {
  Tensor features;          // [n, sample dims...]
  std::vector<int> labels;  // length n when has_labels
  bool has_labels = true;
  std::size_t num_classes = 0;
  Provenance provenance = Provenance::full;

  std::size_t size() const { return features.rank() == 0 ? 0 : features.dim(0); }
  bool empty() const { return size() == 0; }
  Shape sample_shape() const { return Shape(features.shape().begin() + 1, features.shape().end()); }
  // m_j per class; sums to size() for labeled data.
  std::vector<std::size_t> class_counts() const;
  // Throws ShapeError / IndexError when the invariants do not hold.
  void validate() const;
};

Dataset subset(const Dataset& source, std::span<const std::size_t> rows, Provenance provenance);

// Concatenation of two labeled sets with the same sample shape and K.
Dataset merge(const Dataset& a, const Dataset& b, Provenance provenance);

struct LongTailPlan {
  std::size_t num_classes = 0;
  double rho = 1.0;
  std::size_t n_max = 0;
  std::vector<std::size_t> counts;

  std::size_t total() const;
};

// counts[j] = max(1, round(n_max * rho^(-j/(K-1)))), raised where needed so
// that no count falls below n_max / rho.
LongTailPlan long_tail_counts(std::size_t num_classes, double rho, std::size_t n_max);

// Equal per-class counts with the given total; the remainder goes one each
// to the lowest class indices.
LongTailPlan balanced_plan(std::size_t num_classes, std::size_t total);

// Exactly counts[j] rows of class j, drawn without replacement.
Dataset subsample(const Dataset& source, const LongTailPlan& plan, std::uint64_t seed);

// 64-bit FNV-1a digest of the row's little-endian float32 bytes.
using Digest = std::uint64_t;
Digest row_digest(std::span<const double> row);
std::unordered_set<Digest> digest_set(const Dataset& d);

struct OODPool {
  Dataset data;  // unlabeled, provenance ood_pool
  std::unordered_set<Digest> excluded;

  std::size_t size() const { return data.size(); }
};

// n rows of `ood_source` whose digests are absent from `d_full` (and unique
// within the pool), sampled without replacement.
OODPool build_ood_pool(const Dataset& ood_source, const Dataset& d_full, std::size_t n, std::uint64_t seed);

struct SynthSplit {
  Dataset train;
  Dataset test;
};

// Balanced Gaussian clusters, unit variance. Class means sit on distinct
// axes scaled so that neighbouring means are `separation` apart (random
// directions of the same norm when K exceeds dim). Values are rounded to
// float32 so that the binary file format round-trips them exactly.
SynthSplit synth_dataset(std::size_t num_classes, std::size_t dim, std::size_t per_class_train,
                         std::size_t per_class_test, double separation, std::uint64_t seed);

struct OODSpec {
  std::size_t dim = 16;
  std::size_t size = 2000;
  std::size_t clusters = 10;
  double radius = 2.0;  // norm of each cluster centre
  double spread = 1.0;  // per-coordinate standard deviation
};

// Unlabeled source whose cluster centres point in random directions, so its
// structure is rotated away from the class axes of synth_dataset.
Dataset synth_ood(const OODSpec& spec, std::uint64_t seed);

struct ValidationSplit {
  Dataset validation;
  Dataset test;
};

// Stratified hold-out of `fraction` of each class as validation.
ValidationSplit split_validation(const Dataset& pool, double fraction, std::uint64_t seed);

// Binary container: "OEFS1", u32 n, u32 K, u32 rank, u32 dims[rank], u8
// has_labels, float32 features, u16 labels. All little-endian.
void write_dataset(const Dataset& d, const std::filesystem::path& path);
Dataset read_dataset(const std::filesystem::path& path);

// One sample per line, label in the last column. K is max label + 1 unless
// `num_classes` is nonzero.
Dataset read_csv(const std::filesystem::path& path, std::size_t num_classes = 0);

}  // namespace oefsmc::data
