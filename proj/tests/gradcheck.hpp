#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "mrcgat/matrix.hpp"

namespace mrcgat::testing {

// |analytic - numeric| / max(|analytic|, |numeric|, floor). The floor keeps
// gradients that are zero up to rounding from dominating the ratio.
inline double relative_error(double analytic, double numeric, double floor = 1e-6) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

// Central differences of `f` with respect to every entry of every input.
inline std::vector<Matrix> numeric_gradient(std::vector<Matrix> inputs,
                                            const std::function<double(const std::vector<Matrix>&)>& f,
                                            double step = 1e-5) {
  std::vector<Matrix> grads;
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    Matrix g(inputs[t].rows(), inputs[t].cols());
    for (std::size_t i = 0; i < inputs[t].size(); ++i) {
      const double saved = inputs[t][i];
      inputs[t][i] = saved + step;
      const double up = f(inputs);
      inputs[t][i] = saved - step;
      const double down = f(inputs);
      inputs[t][i] = saved;
      g[i] = (up - down) / (2.0 * step);
    }
    grads.push_back(std::move(g));
  }
  return grads;
}

inline double max_relative_error(const std::vector<Matrix>& analytic, const std::vector<Matrix>& numeric) {
  double worst = 0.0;
  for (std::size_t t = 0; t < analytic.size(); ++t)
    for (std::size_t i = 0; i < analytic[t].size(); ++i)
      worst = std::max(worst, relative_error(analytic[t][i], numeric[t][i]));
  return worst;
}

}  // namespace mrcgat::testing
