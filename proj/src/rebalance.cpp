#include "oefsmc/rebalance.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "oefsmc/error.hpp"
#include "oefsmc/rng.hpp"

namespace oefsmc::rebalance {

namespace {

// Wilson-Hilferty approximation of the chi-square quantile at standard
// normal deviate z.
double chi_square_quantile(double df, double z) {
  const double a = 2.0 / (9.0 * df);
  return df * std::pow(1.0 - a + z * std::sqrt(a), 3.0);
}

void draw_labels(data::Dataset& d, const ComplementaryDistribution& dist, std::uint64_t seed) {
  Rng rng(stream_seed(seed, "aux-labels"));
  d.labels.resize(d.size());
  for (auto& y : d.labels) y = static_cast<int>(rng.categorical(dist.gamma_rates));
}

}  // namespace

ClassPrior class_prior(std::span<const std::size_t> counts) {
  const double total = std::accumulate(counts.begin(), counts.end(), 0.0,
                                       [](double a, std::size_t c) { return a + static_cast<double>(c); });
  if (total < 1.0) throw DomainError("class prior of all-zero counts");
  ClassPrior p;
  p.beta.reserve(counts.size());
  for (auto c : counts) p.beta.push_back(static_cast<double>(c) / total);
  return p;
}

ComplementaryDistribution complementary_distribution(const ClassPrior& prior) {
  const std::size_t k = prior.num_classes();
  if (k < 2) throw DomainError("complementary distribution needs K >= 2");
  const auto [lo, hi] = std::minmax_element(prior.beta.begin(), prior.beta.end());
  ComplementaryDistribution d;
  d.alpha = *hi + *lo;
  const double denom = static_cast<double>(k) * d.alpha - 1.0;
  if (denom == 0.0) throw SingularityError("K * alpha == 1; complementary rates undefined");
  d.gamma_rates.reserve(k);
  for (double b : prior.beta) d.gamma_rates.push_back((d.alpha - b) / denom);
  return d;
}

AuxiliaryDataset assign_ood_labels(const data::OODPool& pool, const ComplementaryDistribution& dist,
                                   std::size_t m_aux, std::uint64_t seed) {
  if (m_aux > pool.size()) {
    throw CapacityError("auxiliary set of " + std::to_string(m_aux) + " rows requested from a pool of " +
                        std::to_string(pool.size()));
  }
  std::vector<std::size_t> rows(pool.size());
  std::iota(rows.begin(), rows.end(), 0);
  Rng rng(stream_seed(seed, "aux-rows"));
  rng.shuffle(rows);
  rows.resize(m_aux);

  AuxiliaryDataset aux;
  aux.data = data::subset(pool.data, rows, data::Provenance::auxiliary);
  aux.data.has_labels = true;
  aux.data.num_classes = dist.num_classes();
  draw_labels(aux.data, dist, seed);

  if (m_aux >= 200) {
    const auto counts = aux.data.class_counts();
    const auto positive = std::count_if(dist.gamma_rates.begin(), dist.gamma_rates.end(), [](double g) { return g > 0; });
    if (positive >= 2) {
      const double stat = label_chi_square(counts, dist.gamma_rates);
      const double bound = chi_square_quantile(static_cast<double>(positive - 1), 6.0);
      if (stat > bound) {
        throw NumericError("auxiliary label histogram deviates from Gamma (chi-square " + std::to_string(stat) +
                           " > " + std::to_string(bound) + ")");
      }
    }
  }
  return aux;
}

void relabel(AuxiliaryDataset& aux, const ComplementaryDistribution& dist, std::uint64_t seed) {
  draw_labels(aux.data, dist, seed);
}

std::vector<double> mixed_prior(const ClassPrior& prior, std::size_t few_size, const ComplementaryDistribution& dist,
                                std::size_t m_aux) {
  if (few_size < 1) throw DomainError("mixed prior needs M >= 1");
  if (prior.num_classes() != dist.num_classes()) throw ShapeError("prior and Gamma differ in K");
  const double M = static_cast<double>(few_size), m = static_cast<double>(m_aux);
  std::vector<double> mix(prior.num_classes());
  for (std::size_t j = 0; j < mix.size(); ++j) mix[j] = (M * prior.beta[j] + m * dist.gamma_rates[j]) / (M + m);
  return mix;
}

double uniformizing_aux_size(const ClassPrior& prior, std::size_t few_size) {
  const auto [lo, hi] = std::minmax_element(prior.beta.begin(), prior.beta.end());
  return static_cast<double>(few_size) * (static_cast<double>(prior.num_classes()) * (*hi + *lo) - 1.0);
}

std::vector<double> gamma_weights(const ComplementaryDistribution& dist) {
  std::vector<double> g(dist.gamma_rates);
  const double k = static_cast<double>(g.size());
  for (double& v : g) v *= k;
  return g;
}

double label_chi_square(std::span<const std::size_t> observed, std::span<const double> rates) {
  if (observed.size() != rates.size()) throw ShapeError("chi-square: length mismatch");
  const double n = std::accumulate(observed.begin(), observed.end(), 0.0,
                                   [](double a, std::size_t c) { return a + static_cast<double>(c); });
  double stat = 0.0;
  for (std::size_t j = 0; j < rates.size(); ++j) {
    const double e = n * rates[j];
    if (e <= 0.0) continue;
    const double d = static_cast<double>(observed[j]) - e;
    stat += d * d / e;
  }
  return stat;
}

}  // namespace oefsmc::rebalance
