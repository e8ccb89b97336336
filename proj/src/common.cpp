#include "perflab/common.hpp"

#include <cmath>

namespace perflab {

Estimate jackknife_mean(const Vector& values) {
  const Index n = values.size();
  if (n < 2) throw DomainError("standard error needs at least two draws");
  const double mean = values.mean();
  // Leave-one-out means are (n * mean - v_i) / (n - 1); their spread gives the
  // jackknife variance, which for the mean equals s^2 / n.
  const double nd = static_cast<double>(n);
  double acc = 0.0;
  for (Index i = 0; i < n; ++i) {
    const double loo = (nd * mean - values[i]) / (nd - 1.0);
    acc += (loo - mean) * (loo - mean);
  }
  return {mean, std::sqrt((nd - 1.0) / nd * acc)};
}

}  // namespace perflab
