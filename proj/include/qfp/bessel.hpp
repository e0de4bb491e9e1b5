#pragma once

#include <vector>

namespace qfp {

// Largest |argument| for which bessel_j is validated.
inline constexpr double kBesselMaxArgument = 50.0;

// Bessel function of the first kind J_order(x) for integer order.
// Uses the ascending series for |x| < 2 and Miller's normalized downward
// recurrence otherwise. Throws InvalidArgument when |x| > kBesselMaxArgument.
double bessel_j(int order, double x);

// The two evaluation routes, exposed for cross-validation.
double bessel_j_series(int order, double x);
double bessel_j_miller(int order, double x);

// J_0(x) ... J_max_order(x) from a single downward recurrence.
std::vector<double> bessel_j_sequence(int max_order, double x);

// Default tail weight: dropped amplitudes stay below 1e-11, so interior
// products of operators are unitary to 1e-10.
inline constexpr double kTruncationTailTolerance = 1e-22;

// Smallest k such that sum_{|j|>k} J_j(depth)^2 < tail_tolerance.
int truncation_order(double depth, double tail_tolerance = kTruncationTailTolerance);

}  // namespace qfp
