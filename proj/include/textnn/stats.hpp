#pragma once

#include <cmath>
#include <string>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

#include "textnn/errors.hpp"

namespace textnn {

struct TTestResult {
  double t = 0.0;
  double p = 1.0;
  double df = 0.0;
  bool reject = false;
};

// Two-sample two-sided Welch t-test (unequal variances). Rejects the null
// hypothesis of equal means iff p < alpha.
inline TTestResult t_test(const std::vector<double>& a, const std::vector<double>& b,
                          double alpha = 0.05) {
  if (a.size() < 2 || b.size() < 2)
    throw ContractError("t_test: each sample needs at least 2 values (got " +
                        std::to_string(a.size()) + " and " + std::to_string(b.size()) + ")");
  if (!(alpha > 0.0) || alpha >= 1.0)
    throw ContractError("t_test: alpha must lie in (0, 1)");
  auto mean = [](const std::vector<double>& x) {
    double s = 0.0;
    for (double v : x) s += v;
    return s / static_cast<double>(x.size());
  };
  auto sample_var = [&mean](const std::vector<double>& x) {
    const double m = mean(x);
    double s = 0.0;
    for (double v : x) s += (v - m) * (v - m);
    return s / static_cast<double>(x.size() - 1);
  };
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  const double va = sample_var(a);
  const double vb = sample_var(b);
  if (va == 0.0 && vb == 0.0)
    throw ContractError("t_test: both samples have zero variance");
  const double se_a = va / na;
  const double se_b = vb / nb;
  TTestResult r;
  r.t = (mean(a) - mean(b)) / std::sqrt(se_a + se_b);
  r.df = (se_a + se_b) * (se_a + se_b) /
         (se_a * se_a / (na - 1.0) + se_b * se_b / (nb - 1.0));
  const boost::math::students_t dist(r.df);
  r.p = 2.0 * boost::math::cdf(dist, -std::fabs(r.t));
  r.reject = r.p < alpha;
  return r;
}

}  // namespace textnn
