#pragma once

// Central finite-difference check of analytic parameter gradients. The loss
// is sum(C .* f(X)) for a fixed random C, so d(loss)/d(output) = C.

#include "cbnet/nn.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

namespace gradcheck {

using cbnet::nn::Matrix;
using cbnet::nn::Param;

inline constexpr double kStep = 1e-5;

inline double rel_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-6});
}

struct Result {
  double max_rel = 0;
  std::size_t checked = 0;
};

/// `forward` runs the model in training mode; `backward` feeds C back;
/// `params` lists the parameters to probe.
inline Result check(const std::function<Matrix()> &forward, const std::function<void(const Matrix &)> &backward,
                    const std::vector<Param *> &params, const Matrix &c) {
  for (auto *p : params) p->zero_grad();
  forward();
  backward(c);
  Result r;
  for (auto *p : params) {
    const Matrix analytic = p->grad;
    for (Eigen::Index i = 0; i < p->value.size(); ++i) {
      const double keep = p->value(i);
      p->value(i) = keep + kStep;
      const double up = c.cwiseProduct(forward()).sum();
      p->value(i) = keep - kStep;
      const double down = c.cwiseProduct(forward()).sum();
      p->value(i) = keep;
      r.max_rel = std::max(r.max_rel, rel_error(analytic(i), (up - down) / (2 * kStep)));
      ++r.checked;
    }
  }
  return r;
}

} // namespace gradcheck
