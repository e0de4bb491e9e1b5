#include "qfp/bessel.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <string>

#include "qfp/errors.hpp"

namespace qfp {
namespace {

void check_argument(double x) {
  if (!std::isfinite(x) || std::abs(x) > kBesselMaxArgument) {
    throw InvalidArgument("bessel_j: |x| = " + std::to_string(x) +
                          " outside validated range [0, 50]");
  }
}

double parity(int k) { return (k % 2 == 0) ? 1.0 : -1.0; }

// J_0..J_max for x > 0 by downward recurrence from a start order well above
// both max_order and x, normalized with J_0 + 2 sum J_{2k} = 1.
std::vector<double> miller_positive(int max_order, double x) {
  const int top = std::max(max_order, static_cast<int>(std::ceil(x)));
  int start = top + 40 + static_cast<int>(std::sqrt(60.0 * top));
  if (start % 2 != 0) ++start;

  std::vector<double> j(static_cast<std::size_t>(start) + 2, 0.0);
  double next = 0.0;
  double cur = 1e-300;
  double norm = 0.0;
  for (int k = start; k >= 1; --k) {
    j[static_cast<std::size_t>(k)] = cur;
    const double prev = 2.0 * k / x * cur - next;
    next = cur;
    cur = prev;
    if (k % 2 == 0) norm += 2.0 * next;
    if (std::abs(cur) > 1e250) {
      // rescale the tail computed so far
      for (int i = k; i <= start; ++i) j[static_cast<std::size_t>(i)] *= 1e-250;
      next *= 1e-250;
      cur *= 1e-250;
      norm *= 1e-250;
    }
  }
  j[0] = cur;
  norm += cur;
  std::vector<double> out(static_cast<std::size_t>(max_order) + 1);
  for (int k = 0; k <= max_order; ++k) out[static_cast<std::size_t>(k)] = j[static_cast<std::size_t>(k)] / norm;
  return out;
}

}  // namespace

double bessel_j_series(int order, double x) {
  check_argument(x);
  const int n = std::abs(order);
  double sign = (order < 0) ? parity(n) : 1.0;
  if (x < 0) {
    sign *= parity(n);
    x = -x;
  }
  if (x == 0.0) return n == 0 ? 1.0 : 0.0;

  const double half = 0.5 * x;
  // leading term (x/2)^n / n!
  double term = 1.0;
  for (int k = 1; k <= n; ++k) term *= half / k;
  double sum = term;
  const double q = -half * half;
  for (int m = 1; m < 500; ++m) {
    term *= q / (static_cast<double>(m) * (m + n));
    sum += term;
    if (std::abs(term) < 1e-17 * std::abs(sum)) break;
  }
  return sign * sum;
}

double bessel_j_miller(int order, double x) {
  check_argument(x);
  const int n = std::abs(order);
  double sign = (order < 0) ? parity(n) : 1.0;
  if (x < 0) {
    sign *= parity(n);
    x = -x;
  }
  if (x == 0.0) return n == 0 ? 1.0 : 0.0;
  return sign * miller_positive(n, x)[static_cast<std::size_t>(n)];
}

double bessel_j(int order, double x) {
  check_argument(x);
  return std::abs(x) < 2.0 ? bessel_j_series(order, x) : bessel_j_miller(order, x);
}

std::vector<double> bessel_j_sequence(int max_order, double x) {
  check_argument(x);
  if (max_order < 0) throw InvalidArgument("bessel_j_sequence: negative max_order");
  std::vector<double> out(static_cast<std::size_t>(max_order) + 1, 0.0);
  if (x == 0.0) {
    out[0] = 1.0;
    return out;
  }
  if (std::abs(x) < 2.0) {
    for (int k = 0; k <= max_order; ++k) out[static_cast<std::size_t>(k)] = bessel_j_series(k, x);
    return out;
  }
  out = miller_positive(max_order, std::abs(x));
  if (x < 0) {
    for (int k = 1; k <= max_order; k += 2) out[static_cast<std::size_t>(k)] = -out[static_cast<std::size_t>(k)];
  }
  return out;
}

int truncation_order(double depth, double tail_tolerance) {
  if (depth < 0) throw InvalidArgument("truncation_order: negative depth");
  if (depth == 0.0) return 0;
  const int top = static_cast<int>(std::ceil(depth)) + 60;
  const auto j = bessel_j_sequence(top, depth);
  // tail[k] = 2 * sum_{j>k} J_j^2, accumulated from the top to avoid cancellation
  double tail = 0.0;
  std::vector<double> tails(static_cast<std::size_t>(top) + 1, 0.0);
  for (int k = top; k >= 0; --k) {
    tails[static_cast<std::size_t>(k)] = tail;
    tail += 2.0 * j[static_cast<std::size_t>(k)] * j[static_cast<std::size_t>(k)];
  }
  for (int k = 0; k <= top; ++k) {
    if (tails[static_cast<std::size_t>(k)] < tail_tolerance) return k;
  }
  return top;
}

}  // namespace qfp
