#include "nercp/ks_test.hpp"

#include <algorithm>
#include <cmath>

#include "nercp/error.hpp"

namespace nercp {

double kolmogorov_survival(double x) {
  if (x <= 0.0) return 1.0;
  if (x < 1.18) {
    // Theta-function form, accurate where the alternating series converges slowly.
    const double y = -M_PI * M_PI / (8.0 * x * x);
    double s = 0.0;
    for (int k = 1; k < 40; k += 2) s += std::exp(y * k * k);
    return std::clamp(1.0 - std::sqrt(2.0 * M_PI) / x * s, 0.0, 1.0);
  }
  double s = 0.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = std::exp(-2.0 * k * k * x * x);
    s += (k % 2 == 1 ? 1.0 : -1.0) * term;
    if (term < 1e-18) break;
  }
  return std::clamp(2.0 * s, 0.0, 1.0);
}

KsResult ks_two_sample(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw InputError("KS test needs two nonempty samples");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double n = static_cast<double>(a.size());
  const double m = static_cast<double>(b.size());
  std::size_t i = 0;
  std::size_t j = 0;
  double d = 0.0;
  while (i < a.size() || j < b.size()) {
    double x = 0.0;
    if (j == b.size() || (i < a.size() && a[i] <= b[j])) x = a[i];
    else x = b[j];
    while (i < a.size() && a[i] == x) ++i;
    while (j < b.size() && b[j] == x) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / n - static_cast<double>(j) / m));
  }
  return {d, kolmogorov_survival(std::sqrt(n * m / (n + m)) * d)};
}

}  // namespace nercp
