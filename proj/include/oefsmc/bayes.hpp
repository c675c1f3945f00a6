#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace oefsmc::bayes {

// Joint P(x, y) over a finite support of point ids; table[i][y] belongs to
// support[i].
struct DiscreteJoint {
  std::vector<int> support;
  std::size_t num_classes = 0;
  std::vector<std::vector<double>> table;

  // Row of `x`, or npos.
  std::size_t index_of(int x) const;
  void validate() const;

  static constexpr std::size_t npos = static_cast<std::size_t>(-1);
};

struct OODMarginal {
  std::vector<int> support;
  std::vector<double> marginal;
  double mix_weight = 0.0;  // pi: share of total mass contributed by OOD data
};

// argmax_y P(x, y), lowest class on ties.
std::size_t bayes_predict(const DiscreteJoint& joint, int x);

// P_mix(x, y) = (1 - pi) P_s(x, y) + pi P_out(x) label_dist(y) on the union
// of both supports (in-distribution points first, in their original order).
DiscreteJoint mix(const DiscreteJoint& joint, const OODMarginal& ood, std::span<const double> label_dist);

// P(y) = sum_x P(x, y).
std::vector<double> class_marginal(const DiscreteJoint& joint);

struct ShiftCount {
  std::size_t points = 0;
  std::size_t uniform_changed = 0;
  std::size_t complementary_changed = 0;
  double max_posterior_perturbation = 0.0;  // under uniform labels
};

// Compares Bayes predictions at every in-distribution point before and after
// mixing with uniform labels and with the complementary distribution of the
// joint's class marginal.
ShiftCount measure_shift(const DiscreteJoint& joint, const OODMarginal& ood);

struct InstanceSpec {
  std::size_t max_support = 8;
  std::size_t max_classes = 5;
  bool disjoint_ood = false;  // OOD support shares no point with the joint
};

struct Theorem1Report {
  std::size_t trials = 0;
  std::size_t points = 0;
  double uniform_shift_rate = 0.0;
  double complementary_shift_rate = 0.0;
  double max_posterior_perturbation = 0.0;

  std::string to_json() const;
};

// Aggregates measure_shift over `trials` seeded random instances.
Theorem1Report theorem1_check(std::size_t trials, std::uint64_t seed, const InstanceSpec& spec = {});

}  // namespace oefsmc::bayes
