#pragma once
// Central finite differences over every parameter of a network.

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>

#include "oefsmc/nn.hpp"

namespace fdcheck {

struct Result {
  std::size_t checked = 0;
  double worst_rel = 0.0;
  std::string worst_where;
  bool ok = true;
};

// Compares `grads` with (f(θ+h) − f(θ−h)) / 2h component by component. A
// component passes when its relative error is below `rel_tol` or its
// absolute error is below `abs_tol`.
inline Result compare(oefsmc::nn::Network net, const oefsmc::nn::Gradients& grads,
                      const std::function<double(const oefsmc::nn::Network&)>& f, double h = 1e-4,
                      double rel_tol = 1e-4, double abs_tol = 1e-6) {
  Result r;
  auto visit = [&](std::size_t l, bool is_bias) {
    oefsmc::Tensor& p = is_bias ? net.bias(l) : net.weight(l);
    const oefsmc::Tensor& g = is_bias ? grads.bias[l] : grads.weight[l];
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double keep = p[i];
      p[i] = keep + h;
      const double up = f(net);
      p[i] = keep - h;
      const double down = f(net);
      p[i] = keep;
      const double numeric = (up - down) / (2.0 * h);
      const double analytic = g[i];
      const double abs_err = std::abs(numeric - analytic);
      const double rel = abs_err / std::max({std::abs(numeric), std::abs(analytic), 1e-300});
      ++r.checked;
      const bool pass = rel < rel_tol || abs_err < abs_tol;
      if (!pass) r.ok = false;
      if (!pass && rel > r.worst_rel) {
        r.worst_rel = rel;
        r.worst_where = "layer " + std::to_string(l) + (is_bias ? " bias[" : " weight[") + std::to_string(i) + "]";
      }
    }
  };
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    if (!net.layer(l).spec.has_params()) continue;
    visit(l, false);
    visit(l, true);
  }
  return r;
}

}  // namespace fdcheck
