#include <cmath>
#include <numeric>

#include "doctest.h"
#include "oefsmc/bayes.hpp"
#include "oefsmc/error.hpp"
#include "oefsmc/rng.hpp"

using namespace oefsmc;
using namespace oefsmc::bayes;

namespace {

DiscreteJoint two_by_two() {
  DiscreteJoint j;
  j.support = {0, 1};
  j.num_classes = 2;
  j.table = {{0.3, 0.1}, {0.2, 0.4}};
  return j;
}

double total(const DiscreteJoint& j) {
  double s = 0.0;
  for (const auto& r : j.table) s += std::accumulate(r.begin(), r.end(), 0.0);
  return s;
}

}  // namespace

TEST_CASE("bayes_predict") {
  DiscreteJoint j;
  j.support = {5};
  j.num_classes = 4;
  j.table = {{0.1, 0.0, 0.8, 0.1}};
  CHECK(bayes_predict(j, 5) == 2);
  j.table = {{0.4, 0.1, 0.1, 0.4}};
  CHECK(bayes_predict(j, 5) == 0);
  CHECK_THROWS_AS(bayes_predict(j, 6), DomainError);
}

TEST_CASE("bayes_predict agrees with a brute-force scan and ignores rescaling") {
  Rng rng(4);
  for (int t = 0; t < 200; ++t) {
    DiscreteJoint j;
    j.num_classes = 3;
    for (int x = 0; x < 4; ++x) {
      j.support.push_back(x);
      j.table.push_back({rng.uniform(), rng.uniform(), rng.uniform()});
    }
    for (int x = 0; x < 4; ++x) {
      const auto& r = j.table[x];
      std::size_t scan = 0;
      for (std::size_t y = 0; y < 3; ++y)
        if (r[y] > r[scan]) scan = y;
      CHECK(bayes_predict(j, x) == scan);
      DiscreteJoint scaled = j;
      for (auto& row : scaled.table)
        for (auto& v : row) v *= 7.5;
      CHECK(bayes_predict(scaled, x) == scan);
    }
  }
}

TEST_CASE("mix") {
  const DiscreteJoint j = two_by_two();
  const std::vector<double> uniform{0.5, 0.5};

  OODMarginal none{{1}, {1.0}, 0.0};
  CHECK(mix(j, none, uniform).table == j.table);

  OODMarginal disjoint{{7, 8}, {0.25, 0.75}, 0.4};
  const auto m = mix(j, disjoint, std::vector<double>{0.9, 0.1});
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t y = 0; y < 2; ++y) CHECK(m.table[i][y] == doctest::Approx(0.6 * j.table[i][y]));
  CHECK(m.support.size() == 4);
  CHECK(total(m) == doctest::Approx(1.0));

  // Hand mixture: pi = 0.5, OOD mass all on point 1, uniform labels.
  OODMarginal on_one{{1}, {1.0}, 0.5};
  const auto h = mix(j, on_one, uniform);
  CHECK(h.table[0][0] == doctest::Approx(0.15));
  CHECK(h.table[0][1] == doctest::Approx(0.05));
  CHECK(h.table[1][0] == doctest::Approx(0.35));
  CHECK(h.table[1][1] == doctest::Approx(0.45));
  h.validate();
  CHECK_THROWS_AS(mix(j, on_one, std::vector<double>{1.0}), ShapeError);
}

TEST_CASE("uniform-label mixing never moves the Bayes prediction") {
  const auto rep = theorem1_check(500, 9);
  CHECK(rep.trials == 500);
  CHECK(rep.points > 500);
  CHECK(rep.uniform_shift_rate == 0.0);
  CHECK(rep.complementary_shift_rate >= 0.0);
}

TEST_CASE("disjoint OOD support never moves the Bayes prediction, for any labels") {
  InstanceSpec spec;
  spec.disjoint_ood = true;
  const auto rep = theorem1_check(500, 10, spec);
  CHECK(rep.uniform_shift_rate == 0.0);
  CHECK(rep.complementary_shift_rate == 0.0);
}

TEST_CASE("theorem check report json") {
  const auto rep = theorem1_check(10, 1);
  const auto s = rep.to_json();
  CHECK(s.find("\"uniform_shift_rate\"") != std::string::npos);
  CHECK(s.find("\"complementary_shift_rate\"") != std::string::npos);
  CHECK(s.find("\"max_posterior_perturbation\"") != std::string::npos);
  CHECK_THROWS_AS(theorem1_check(0, 1), DomainError);
}
