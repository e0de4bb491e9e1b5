#include "qfp/eom.hpp"

#include <cmath>
#include <utility>

#include "qfp/bessel.hpp"
#include "qfp/errors.hpp"

namespace qfp {

ModeOperator identity_operator(const FrequencyLattice& lattice, std::string label) {
  const auto n = static_cast<Eigen::Index>(lattice.size());
  return ModeOperator{lattice, Eigen::MatrixXcd::Identity(n, n), std::move(label)};
}

ModeOperator phase_ramp_operator(const FrequencyLattice& lattice, double phase) {
  auto op = identity_operator(lattice, "phase_ramp");
  for (int l = lattice.l_min(); l <= lattice.l_max(); ++l) {
    const auto i = static_cast<Eigen::Index>(lattice.index(l));
    op.entries(i, i) = std::polar(1.0, l * phase);
  }
  return op;
}

ModeOperator eom_operator(const RfDrive& drive, const FrequencyLattice& lattice) {
  if (drive.depth < 0.0) throw InvalidArgument("eom_operator: negative modulation depth");
  if (std::abs(drive.frequency - lattice.spacing()) > 1e-9 * lattice.spacing()) {
    throw InvalidArgument("eom_operator: RF frequency must equal the lattice spacing");
  }
  const double depth = drive.effective_depth();
  const int order = truncation_order(depth);
  const auto j = bessel_j_sequence(order, depth);

  const auto n = static_cast<Eigen::Index>(lattice.size());
  Eigen::MatrixXcd m = Eigen::MatrixXcd::Zero(n, n);
  for (Eigen::Index col = 0; col < n; ++col) {
    for (int k = -order; k <= order; ++k) {
      const Eigen::Index row = col + k;
      if (row < 0 || row >= n) continue;
      const int ak = std::abs(k);
      double jk = j[static_cast<std::size_t>(ak)];
      if (k < 0 && ak % 2 == 1) jk = -jk;
      m(row, col) = jk * std::polar(1.0, k * drive.phase);
    }
  }
  return ModeOperator{lattice, std::move(m), "eom"};
}

double unitarity_deficit(const ModeOperator& op, int interior_margin) {
  const auto n = op.entries.cols();
  if (interior_margin < 0 || 2 * static_cast<Eigen::Index>(interior_margin) >= n) {
    throw InvalidArgument("unitarity_deficit: interior margin leaves no interior bins");
  }
  const Eigen::Index width = n - 2 * interior_margin;
  const auto cols = op.entries.middleCols(interior_margin, width);
  const Eigen::MatrixXcd gram = cols.adjoint() * cols;
  return (gram - Eigen::MatrixXcd::Identity(width, width)).cwiseAbs().maxCoeff();
}

ModeOperator compose(const ModeOperator& left, const ModeOperator& right, std::string label) {
  if (!(left.lattice == right.lattice)) throw InvalidArgument("compose: lattice mismatch");
  return ModeOperator{left.lattice, left.entries * right.entries,
                      label.empty() ? left.label + "*" + right.label : std::move(label)};
}

ModeOperator reverse_frequency_axis(const ModeOperator& op) {
  const Eigen::MatrixXcd reversed = op.entries.colwise().reverse().rowwise().reverse();
  return ModeOperator{op.lattice, reversed, op.label + "(reversed)"};
}

}  // namespace qfp
