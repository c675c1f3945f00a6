#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "oefsmc/dataset.hpp"

namespace oefsmc::rebalance {

// beta_j = m_j / M.
struct ClassPrior {
  std::vector<double> beta;

  std::size_t num_classes() const { return beta.size(); }
};

// Label-sampling rates for OOD rows: Gamma_j = (alpha - beta_j) / (K alpha - 1)
// with alpha = max beta + min beta. Rarer classes receive larger rates.
struct ComplementaryDistribution {
  double alpha = 0.0;
  std::vector<double> gamma_rates;

  std::size_t num_classes() const { return gamma_rates.size(); }
};

// OOD rows with labels drawn once from Gamma; provenance `auxiliary`.
struct AuxiliaryDataset {
  data::Dataset data;

  std::size_t size() const { return data.size(); }
  bool empty() const { return data.empty(); }
};

ClassPrior class_prior(std::span<const std::size_t> counts);

ComplementaryDistribution complementary_distribution(const ClassPrior& prior);

// m_aux pool rows without replacement, each labelled independently from Gamma.
// For m_aux >= 200 the label histogram is checked against Gamma with a
// chi-square bound at roughly the 1e-9 tail; a failure raises NumericError.
AuxiliaryDataset assign_ood_labels(const data::OODPool& pool, const ComplementaryDistribution& dist,
                                   std::size_t m_aux, std::uint64_t seed);

// Redraws every label from Gamma, keeping the rows. Used by the per-epoch
// relabelling variant.
void relabel(AuxiliaryDataset& aux, const ComplementaryDistribution& dist, std::uint64_t seed);

// P_mix(j) = (M beta_j + m_aux Gamma_j) / (M + m_aux).
std::vector<double> mixed_prior(const ClassPrior& prior, std::size_t few_size, const ComplementaryDistribution& dist,
                                std::size_t m_aux);

// Auxiliary size M (K alpha - 1) at which the mixed prior is exactly uniform.
double uniformizing_aux_size(const ClassPrior& prior, std::size_t few_size);

// gamma_j = K Gamma_j; mean one over classes, larger for rarer classes.
std::vector<double> gamma_weights(const ComplementaryDistribution& dist);

// Pearson statistic of observed label counts against expected rates.
double label_chi_square(std::span<const std::size_t> observed, std::span<const double> rates);

}  // namespace oefsmc::rebalance
