#include "oefsmc/bayes.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "json.hpp"
#include "oefsmc/error.hpp"
#include "oefsmc/rebalance.hpp"
#include "oefsmc/rng.hpp"

namespace oefsmc::bayes {

namespace {

std::vector<double> random_simplex(Rng& rng, std::size_t n) {
  std::vector<double> v(n);
  double s = 0.0;
  for (auto& x : v) {
    x = rng.uniform() + 1e-6;
    s += x;
  }
  for (auto& x : v) x /= s;
  return v;
}

DiscreteJoint random_joint(Rng& rng, const InstanceSpec& spec) {
  DiscreteJoint j;
  const std::size_t nx = 1 + rng.below(spec.max_support);
  j.num_classes = 2 + rng.below(spec.max_classes - 1);
  // Skewed class weights so the complementary distribution is non-trivial.
  std::vector<double> skew(j.num_classes);
  for (auto& w : skew) w = std::pow(rng.uniform() + 0.05, 2.0);
  double total = 0.0;
  for (std::size_t i = 0; i < nx; ++i) {
    j.support.push_back(static_cast<int>(i));
    std::vector<double> row(j.num_classes);
    for (std::size_t y = 0; y < j.num_classes; ++y) {
      row[y] = (rng.uniform() + 1e-6) * skew[y];
      total += row[y];
    }
    j.table.push_back(std::move(row));
  }
  for (auto& row : j.table)
    for (auto& v : row) v /= total;
  return j;
}

OODMarginal random_ood(Rng& rng, const DiscreteJoint& joint, const InstanceSpec& spec) {
  OODMarginal o;
  if (!spec.disjoint_ood) {
    for (int x : joint.support)
      if (rng.uniform() < 0.6) o.support.push_back(x);
  }
  const std::size_t fresh = (o.support.empty() ? 1 : 0) + rng.below(3);
  for (std::size_t i = 0; i < fresh; ++i) o.support.push_back(1000 + static_cast<int>(i));
  o.marginal = random_simplex(rng, o.support.size());
  o.mix_weight = rng.uniform() * 0.95;
  return o;
}

}  // namespace

std::size_t DiscreteJoint::index_of(int x) const {
  const auto it = std::find(support.begin(), support.end(), x);
  return it == support.end() ? npos : static_cast<std::size_t>(it - support.begin());
}

void DiscreteJoint::validate() const {
  if (table.size() != support.size()) throw ShapeError("joint table rows do not match support");
  double s = 0.0;
  for (const auto& row : table) {
    if (row.size() != num_classes) throw ShapeError("joint table row has wrong class count");
    for (double v : row) {
      if (!(v >= 0.0)) throw DomainError("joint table has a negative entry");
      s += v;
    }
  }
  if (std::abs(s - 1.0) > 1e-12) throw DomainError("joint table sums to " + std::to_string(s));
}

std::size_t bayes_predict(const DiscreteJoint& joint, int x) {
  const std::size_t i = joint.index_of(x);
  if (i == DiscreteJoint::npos) throw DomainError("point " + std::to_string(x) + " is not in the support");
  const auto& row = joint.table[i];
  std::size_t best = 0;
  for (std::size_t y = 1; y < row.size(); ++y)
    if (row[y] > row[best]) best = y;
  return best;
}

DiscreteJoint mix(const DiscreteJoint& joint, const OODMarginal& ood, std::span<const double> label_dist) {
  if (label_dist.size() != joint.num_classes) throw ShapeError("label distribution has wrong class count");
  if (ood.marginal.size() != ood.support.size()) throw ShapeError("OOD marginal does not match its support");
  if (!(ood.mix_weight >= 0.0 && ood.mix_weight < 1.0)) throw DomainError("mix weight must lie in [0, 1)");
  const double pi = ood.mix_weight;
  DiscreteJoint out;
  out.num_classes = joint.num_classes;
  out.support = joint.support;
  for (const auto& row : joint.table) {
    std::vector<double> r(row.size());
    for (std::size_t y = 0; y < row.size(); ++y) r[y] = (1.0 - pi) * row[y];
    out.table.push_back(std::move(r));
  }
  for (std::size_t i = 0; i < ood.support.size(); ++i) {
    std::size_t at = out.index_of(ood.support[i]);
    if (at == DiscreteJoint::npos) {
      out.support.push_back(ood.support[i]);
      out.table.emplace_back(out.num_classes, 0.0);
      at = out.support.size() - 1;
    }
    for (std::size_t y = 0; y < out.num_classes; ++y) out.table[at][y] += pi * ood.marginal[i] * label_dist[y];
  }
  return out;
}

std::vector<double> class_marginal(const DiscreteJoint& joint) {
  std::vector<double> m(joint.num_classes, 0.0);
  for (const auto& row : joint.table)
    for (std::size_t y = 0; y < row.size(); ++y) m[y] += row[y];
  return m;
}

ShiftCount measure_shift(const DiscreteJoint& joint, const OODMarginal& ood) {
  const std::size_t k = joint.num_classes;
  const std::vector<double> uniform(k, 1.0 / static_cast<double>(k));
  const rebalance::ClassPrior prior{class_marginal(joint)};
  const auto comp = rebalance::complementary_distribution(prior);
  const DiscreteJoint mu = mix(joint, ood, uniform);
  const DiscreteJoint mc = mix(joint, ood, comp.gamma_rates);
  ShiftCount sc;
  for (std::size_t i = 0; i < joint.support.size(); ++i) {
    const int x = joint.support[i];
    const std::size_t before = bayes_predict(joint, x);
    ++sc.points;
    if (bayes_predict(mu, x) != before) ++sc.uniform_changed;
    if (bayes_predict(mc, x) != before) ++sc.complementary_changed;
    const double zs = std::accumulate(joint.table[i].begin(), joint.table[i].end(), 0.0);
    const auto& row = mu.table[mu.index_of(x)];
    const double zm = std::accumulate(row.begin(), row.end(), 0.0);
    for (std::size_t y = 0; y < k; ++y) {
      sc.max_posterior_perturbation =
          std::max(sc.max_posterior_perturbation, std::abs(row[y] / zm - joint.table[i][y] / zs));
    }
  }
  return sc;
}

Theorem1Report theorem1_check(std::size_t trials, std::uint64_t seed, const InstanceSpec& spec) {
  if (trials < 1) throw DomainError("theorem check needs at least one trial");
  if (spec.max_support < 1 || spec.max_classes < 2) throw DomainError("instance spec too small");
  Theorem1Report rep;
  rep.trials = trials;
  std::size_t uchanged = 0, cchanged = 0;
  for (std::size_t t = 0; t < trials; ++t) {
    Rng rng(mix_seed(seed, t));
    const auto joint = random_joint(rng, spec);
    const auto ood = random_ood(rng, joint, spec);
    const auto sc = measure_shift(joint, ood);
    rep.points += sc.points;
    uchanged += sc.uniform_changed;
    cchanged += sc.complementary_changed;
    rep.max_posterior_perturbation = std::max(rep.max_posterior_perturbation, sc.max_posterior_perturbation);
  }
  rep.uniform_shift_rate = static_cast<double>(uchanged) / static_cast<double>(rep.points);
  rep.complementary_shift_rate = static_cast<double>(cchanged) / static_cast<double>(rep.points);
  return rep;
}

std::string Theorem1Report::to_json() const {
  nlohmann::json j;
  j["trials"] = trials;
  j["uniform_shift_rate"] = uniform_shift_rate;
  j["complementary_shift_rate"] = complementary_shift_rate;
  j["max_posterior_perturbation"] = max_posterior_perturbation;
  return j.dump(2);
}

}  // namespace oefsmc::bayes
