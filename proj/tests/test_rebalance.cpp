#include <cmath>
#include <numeric>

#include "doctest.h"
#include "oefsmc/error.hpp"
#include "oefsmc/rebalance.hpp"
#include "oefsmc/rng.hpp"

using namespace oefsmc;
using namespace oefsmc::rebalance;

namespace {

std::vector<double> v(std::initializer_list<double> x) { return x; }

data::OODPool pool_of(std::size_t n, std::size_t dim = 2) {
  data::OODPool p;
  std::vector<double> x(n * dim);
  std::iota(x.begin(), x.end(), 0.0);
  p.data.features = Tensor({n, dim}, x);
  p.data.has_labels = false;
  p.data.provenance = data::Provenance::ood_pool;
  return p;
}

}  // namespace

TEST_CASE("class prior") {
  CHECK(class_prior(std::vector<std::size_t>{1, 1, 1, 1}).beta == std::vector<double>(4, 0.25));
  const auto p = class_prior(std::vector<std::size_t>{90, 9, 1}).beta;
  CHECK(p[0] == doctest::Approx(0.9));
  CHECK(p[1] == doctest::Approx(0.09));
  CHECK(p[2] == doctest::Approx(0.01));
  CHECK(class_prior(std::vector<std::size_t>{3, 1}).beta == v({0.75, 0.25}));
  CHECK_THROWS_AS(class_prior(std::vector<std::size_t>{0, 0}), DomainError);
}

TEST_CASE("complementary distribution, hand cases") {
  auto d = complementary_distribution({v({0.25, 0.25, 0.25, 0.25})});
  CHECK(d.alpha == doctest::Approx(0.5));
  for (double g : d.gamma_rates) CHECK(g == doctest::Approx(0.25));
  d = complementary_distribution({v({0.8, 0.2})});
  CHECK(d.alpha == doctest::Approx(1.0));
  CHECK(d.gamma_rates[0] == doctest::Approx(0.2));
  CHECK(d.gamma_rates[1] == doctest::Approx(0.8));
  d = complementary_distribution({v({0.6, 0.3, 0.1})});
  CHECK(d.alpha == doctest::Approx(0.7));
  CHECK(d.gamma_rates[0] == doctest::Approx(0.1 / 1.1));
  CHECK(d.gamma_rates[1] == doctest::Approx(0.4 / 1.1));
  CHECK(d.gamma_rates[2] == doctest::Approx(0.6 / 1.1));
  CHECK_THROWS_AS(complementary_distribution({v({1.0})}), DomainError);
  // K alpha = 1 is reachable only with an invalid prior; the guard still fires.
  CHECK_THROWS_AS(complementary_distribution({v({0.5, 0.0})}), SingularityError);
}

TEST_CASE("complementary distribution properties on random priors") {
  Rng rng(3);
  for (int t = 0; t < 300; ++t) {
    const std::size_t k = 2 + rng.below(19);
    std::vector<std::size_t> counts(k);
    for (auto& c : counts) c = 1 + rng.below(100);
    const auto prior = class_prior(counts);
    const auto d = complementary_distribution(prior);
    CHECK(std::abs(std::accumulate(d.gamma_rates.begin(), d.gamma_rates.end(), 0.0) - 1.0) <= 1e-12);
    for (std::size_t i = 0; i < k; ++i) {
      CHECK(d.gamma_rates[i] >= 0.0);
      for (std::size_t j = 0; j < k; ++j)
        if (prior.beta[i] < prior.beta[j]) CHECK(d.gamma_rates[i] > d.gamma_rates[j]);
    }
  }
}

TEST_CASE("mixed prior") {
  const ClassPrior p{v({0.8, 0.2})};
  const auto d = complementary_distribution(p);
  CHECK(mixed_prior(p, 10, d, 0) == p.beta);
  const auto m = mixed_prior(p, 10, d, 10);
  CHECK(m[0] == doctest::Approx(0.5));
  CHECK(m[1] == doctest::Approx(0.5));
  CHECK(uniformizing_aux_size(p, 10) == doctest::Approx(10.0));
}

TEST_CASE("gamma weights") {
  auto g = gamma_weights({0.5, v({0.25, 0.25, 0.25, 0.25})});
  for (double x : g) CHECK(x == doctest::Approx(1.0));
  g = gamma_weights({1.0, v({0.2, 0.8})});
  CHECK(g[0] == doctest::Approx(0.4));
  CHECK(g[1] == doctest::Approx(1.6));
  g = gamma_weights({0.7, v({0.1 / 1.1, 0.4 / 1.1, 0.6 / 1.1})});
  CHECK(g[0] == doctest::Approx(0.2727).epsilon(1e-3));
  CHECK(g[1] == doctest::Approx(1.0909).epsilon(1e-3));
  CHECK(g[2] == doctest::Approx(1.6364).epsilon(1e-3));
}

TEST_CASE("OOD label assignment") {
  const auto pool = pool_of(50);
  SUBCASE("degenerate one-hot Gamma") {
    const auto aux = assign_ood_labels(pool, {0.0, v({0, 0, 1})}, 40, 1);
    CHECK(aux.size() == 40);
    for (int y : aux.data.labels) CHECK(y == 2);
    CHECK(aux.data.provenance == data::Provenance::auxiliary);
    CHECK(aux.data.num_classes == 3);
  }
  SUBCASE("determinism and capacity") {
    const ComplementaryDistribution d{0.0, v({0.3, 0.7})};
    const auto a = assign_ood_labels(pool, d, 30, 8);
    const auto b = assign_ood_labels(pool, d, 30, 8);
    CHECK(a.data.labels == b.data.labels);
    CHECK(a.data.features == b.data.features);
    CHECK_THROWS_AS(assign_ood_labels(pool, d, 51, 8), CapacityError);
  }
  SUBCASE("rows come from the pool without replacement") {
    const auto aux = assign_ood_labels(pool, {0.0, v({0.5, 0.5})}, 50, 2);
    std::vector<double> firsts;
    for (std::size_t i = 0; i < aux.size(); ++i) firsts.push_back(aux.data.features.row(i)[0]);
    std::sort(firsts.begin(), firsts.end());
    CHECK(std::adjacent_find(firsts.begin(), firsts.end()) == firsts.end());
  }
}

TEST_CASE("uniform Gamma: label frequencies within 3 sigma") {
  const std::size_t k = 5, m = 10000;
  const auto pool = pool_of(m, 1);
  const auto aux = assign_ood_labels(pool, {0.4, std::vector<double>(k, 0.2)}, m, 77);
  const auto counts = aux.data.class_counts();
  const double sigma = std::sqrt(m * 0.2 * 0.8);
  for (auto c : counts) CHECK(std::abs(static_cast<double>(c) - m * 0.2) <= 3.0 * sigma);
}

TEST_CASE("relabel keeps rows and redraws labels") {
  const auto pool = pool_of(300);
  const ComplementaryDistribution d{0.0, v({0.5, 0.5})};
  auto aux = assign_ood_labels(pool, d, 300, 1);
  const auto before = aux;
  relabel(aux, d, 2);
  CHECK(aux.data.features == before.data.features);
  CHECK(aux.data.labels != before.data.labels);
}

TEST_CASE("chi-square statistic") {
  CHECK(label_chi_square(std::vector<std::size_t>{50, 50}, v({0.5, 0.5})) == 0.0);
  CHECK(label_chi_square(std::vector<std::size_t>{60, 40}, v({0.5, 0.5})) == doctest::Approx(4.0));
}
