#pragma once

#include <array>
#include <cstdint>
#include <numbers>
#include <vector>

#include <Eigen/Dense>

#include "qfp/eom.hpp"
#include "qfp/lattice.hpp"

namespace qfp {

// Sum_l beta_l |l l>, with signal and idler both labeled by the source bin l.
struct BiphotonState {
  Eigen::VectorXcd amplitudes;  // beta_l, unit norm
  int first_bin = 0;            // lattice label of beta_0

  int last_bin() const { return first_bin + static_cast<int>(amplitudes.size()) - 1; }
};

// A[m, n] over (signal bin m, idler bin n) on a shared lattice window.
struct JointAmplitude {
  FrequencyLattice lattice;
  Eigen::MatrixXcd a;
};

// Comb placement and the asymmetric-MZI pump filter that shapes its envelope.
// Source bin l sits (offset_bins + l) spacings above the pump (signal) and the
// same distance below it (idler).
struct CombSpec {
  int n_bins = 6;
  double spacing = 15.34e9;  // Hz
  int offset_bins = 49;      // first bin ~752 GHz from the pump, just past a filter peak
  double pf_fsr = 500e9;     // Hz
  double pf_extinction_db = 20.0;
};

// |beta_l| = sqrt(T(nu_s) T(nu_i)), phases zero, normalized. A non-positive
// pf_fsr means a flat filter.
BiphotonState comb_state(const CombSpec& spec, double pf_alignment = 0.0);

// Filter envelope sqrt(T(nu_s) T(nu_i)) at each source bin (not normalized).
std::vector<double> comb_envelope(const CombSpec& spec, double pf_alignment);

struct EnvelopeFit {
  double scale = 0.0;
  double pf_alignment = 0.0;
  std::vector<double> magnitudes;  // model |beta_l| for every comb bin, same scale as the input
};

// Fits scale and filter alignment to the magnitudes of bins
// [first_measured, first_measured + measured.size()) and extrapolates the rest.
EnvelopeFit extrapolate_envelope(const CombSpec& spec, const std::vector<double>& measured, int first_measured);

BiphotonState with_phases(const BiphotonState& state, const std::vector<double>& phases);

// A[m, n] = sum_l S[m, l] I'[n, l] beta_l, where I' is op_idler with its
// frequency axis reversed: the idler label runs opposite to frequency.
JointAmplitude apply_joint(const ModeOperator& op_signal, const ModeOperator& op_idler, const BiphotonState& state);

// Multiplies the idler amplitude of bins first_channel..first_channel+3 by e^{i Phi}.
BiphotonState ws_idler_phases(const BiphotonState& state, const std::array<double, 4>& phases, int first_channel = 1);
JointAmplitude ws_idler_phases(const JointAmplitude& joint, const std::array<double, 4>& phases,
                               int first_channel = 1);

// Adjacent idler bins differ by pi.
inline constexpr std::array<double, 4> kAnticorrelatedPattern = {-0.5 * std::numbers::pi, 0.5 * std::numbers::pi,
                                                                 -0.5 * std::numbers::pi, 0.5 * std::numbers::pi};

struct BinRange {
  int first = 1;
  int last = 4;
  int size() const { return last - first + 1; }
};

enum class JsiNormalization { Max, Integral };

Eigen::MatrixXd jsi(const JointAmplitude& joint, BinRange window, JsiNormalization norm = JsiNormalization::Integral);

// Cosine similarity of the flattened matrices.
double jsi_fidelity(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

// Trace over total of a square JSI.
double diagonal_weight(const Eigen::MatrixXd& jsi_matrix);

// OUT-PM quantum walk of a comb: optional idler WS phases, then one modulator
// seen by both photons.
struct WalkSetup {
  double delta = 0.8;
  double spacing = 15.34e9;  // Hz
  double rf_phase = 0.0;
  std::array<double, 4> idler_phases{0.0, 0.0, 0.0, 0.0};
  int first_channel = 1;
  BinRange measured{1, 4};
};

JointAmplitude simulate_walk(const BiphotonState& state, const WalkSetup& setup);

// Integral-normalized JSI of simulate_walk on setup.measured.
Eigen::MatrixXd walk_jsi(const BiphotonState& state, const WalkSetup& setup);

struct PhaseRetrieval {
  std::vector<double> phases;  // Arg(beta_l), Arg(beta_0) = 0
  double fidelity = 0.0;
  int starts_converged = 0;
};

struct RetrievalOptions {
  int random_starts = 64;
  std::uint64_t seed = 1;
  double fidelity_tolerance = 1e-9;
};

// Maximizes jsi_fidelity(walk_jsi(|beta| e^{i phases}), measured) over the
// free phases. The modulator operators are real, so the JSI is unchanged when
// the effective phases Arg(beta_l) + P_l (P the idler waveshaper pattern) are
// all negated: phases are recovered up to phi -> -phi - 2P. The fidelity
// landscape is multimodal; each simplex endpoint is polished by least squares.
PhaseRetrieval retrieve_phases(const Eigen::MatrixXd& measured, const std::vector<double>& magnitudes,
                               const WalkSetup& setup, const RetrievalOptions& options = {});

using CountMatrix = Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic>;

// Poisson counts with mean total_pairs * (p + floor), p the integral-normalized
// JSI and floor = mean(diag p) / car.
CountMatrix poisson_counts(const Eigen::MatrixXd& jsi_matrix, double total_pairs, double car, std::uint64_t seed);

// (mean diagonal - mean off-diagonal) / mean off-diagonal; meaningful for a
// diagonal source JSI.
double estimate_car(const CountMatrix& counts);

}  // namespace qfp
