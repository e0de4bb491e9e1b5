#pragma once

#include <complex>
#include <string>

#include <Eigen/Dense>

#include "qfp/lattice.hpp"

namespace qfp {

using cplx = std::complex<double>;

// Single-tone sinusoidal drive of a phase modulator: phi(t) = depth * sin(2 pi f t + phase).
struct RfDrive {
  double depth = 0.0;      // rad
  double phase = 0.0;      // rad
  double frequency = 0.0;  // Hz; must match the lattice spacing
  bool enabled = true;

  double effective_depth() const { return enabled ? depth : 0.0; }
};

// Linear map on the bins of a lattice window, indexed (output bin, input bin).
struct ModeOperator {
  FrequencyLattice lattice;
  Eigen::MatrixXcd entries;
  std::string label;

  cplx at(int out_bin, int in_bin) const {
    return entries(static_cast<Eigen::Index>(lattice.index(out_bin)),
                   static_cast<Eigen::Index>(lattice.index(in_bin)));
  }
};

inline constexpr double kUnitarityTolerance = 1e-10;

ModeOperator identity_operator(const FrequencyLattice& lattice, std::string label = "identity");

// Diagonal operator with entry exp(i * l * phase) on bin l.
ModeOperator phase_ramp_operator(const FrequencyLattice& lattice, double phase);

// M[m, n] = J_{m-n}(depth) exp(i (m-n) phase), zero beyond the truncation order.
// Bin n -> n+1 carries J_1 exp(+i phase).
ModeOperator eom_operator(const RfDrive& drive, const FrequencyLattice& lattice);

// max |(M^dag M - I)_{ij}| over bins at distance >= interior_margin from the
// window edges.
double unitarity_deficit(const ModeOperator& op, int interior_margin);

// left * right on a common lattice.
ModeOperator compose(const ModeOperator& left, const ModeOperator& right, std::string label = {});

// Relabels bin l as (l_min + l_max - l) on both axes: the operator seen by a
// photon whose bin label runs opposite to physical frequency.
ModeOperator reverse_frequency_axis(const ModeOperator& op);

}  // namespace qfp
