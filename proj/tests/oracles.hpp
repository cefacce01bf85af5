// SPDX-License-Identifier: Apache-2.0
// Brute-force reference implementations, written straight from the textbook
// formulas and sharing no code with the library.
#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#ifndef COVCAST_FIXTURE_DIR
#define COVCAST_FIXTURE_DIR "."
#endif

namespace oracle {

inline std::string fixture(const std::string &name) {
  return std::string(COVCAST_FIXTURE_DIR) + "/" + name;
}

inline double msle(const std::vector<double> &y, const std::vector<double> &p) {
  long double s = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const long double d = std::log(1.0L + y[i]) - std::log(1.0L + p[i]);
    s += d * d;
  }
  return static_cast<double>(s / y.size());
}

inline double rmsle(const std::vector<double> &y, const std::vector<double> &p) {
  return std::sqrt(msle(y, p));
}

inline double mape(const std::vector<double> &y, const std::vector<double> &p) {
  long double s = 0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y[i] == 0.0)
      continue;
    s += std::fabs(static_cast<long double>(y[i]) - p[i]) / std::fabs(static_cast<long double>(y[i]));
    ++n;
  }
  return static_cast<double>(100.0L * s / n);
}

inline double explained_variance(const std::vector<double> &y, const std::vector<double> &p) {
  auto var = [](const std::vector<long double> &v) {
    long double m = 0;
    for (auto x : v)
      m += x;
    m /= v.size();
    long double s = 0;
    for (auto x : v)
      s += (x - m) * (x - m);
    return s / v.size();
  };
  std::vector<long double> yy(y.begin(), y.end()), r;
  for (std::size_t i = 0; i < y.size(); ++i)
    r.push_back(static_cast<long double>(y[i]) - p[i]);
  return static_cast<double>(1.0L - var(r) / var(yy));
}

// F(d1, d2) density.
inline long double f_density(long double x, long double d1, long double d2) {
  if (x <= 0)
    return 0;
  const long double log_beta = std::lgamma(d1 / 2) + std::lgamma(d2 / 2) - std::lgamma((d1 + d2) / 2);
  const long double log_f = (d1 / 2) * std::log(d1 * x) + (d2 / 2) * std::log(d2) -
                            ((d1 + d2) / 2) * std::log(d1 * x + d2) - std::log(x) - log_beta;
  return std::exp(log_f);
}

// P(X <= q) by composite Simpson over s with x = s^2, which removes the
// x^(d1/2 - 1) singularity at zero.
inline double f_cdf(double q, double d1, double d2, std::size_t intervals = 200000) {
  if (q <= 0)
    return 0.0;
  const long double b = std::sqrt(static_cast<long double>(q));
  const long double h = b / intervals;
  // Integrand at s = 0 is only nonzero for d1 = 1, where it is the limit below.
  const long double g0 = d1 == 1 ? 2 / std::sqrt(static_cast<long double>(d2)) *
                                       std::exp(std::lgamma((1.0L + d2) / 2) -
                                                std::lgamma(0.5L) - std::lgamma(d2 / 2.0L))
                                 : 0.0L;
  auto g = [&](long double s) { return s == 0 ? g0 : f_density(s * s, d1, d2) * 2 * s; };
  long double sum = g(0) + g(b);
  for (std::size_t i = 1; i < intervals; ++i)
    sum += g(i * h) * (i % 2 ? 4 : 2);
  return static_cast<double>(sum * h / 3);
}

} // namespace oracle
