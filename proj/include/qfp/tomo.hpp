#pragma once

#include <cstdint>
#include <limits>
#include <vector>

#include <Eigen/Dense>

#include "qfp/biphoton.hpp"
#include "qfp/processor.hpp"

namespace qfp {

// Two-qubit operators in the basis |00>, |01>, |10>, |11> (signal x idler).
using DensityMatrix = Eigen::Matrix4cd;
using PureState = Eigen::Vector4cd;

inline constexpr double kDefaultMeasurementDepth = 0.8169;

// Throws InvalidArgument unless rho is Hermitian, unit trace and PSD within tol.
void validate_density(const DensityMatrix& rho, double tol = 1e-10);

PureState bell_phi_plus();

double state_fidelity(const DensityMatrix& rho, const PureState& target);
double purity(const DensityMatrix& rho);

// Pure state (beta_b0 |00> + beta_b1 |11>) / norm mixed with white noise of
// weight 10^(-suppression_db / 10) standing in for guard-band leakage.
// An infinite suppression gives the pure state.
DensityMatrix carve_bell_state(const BiphotonState& comb, BinPair kept, double suppression_db);

// Computational-basis projection (PM off) or a superposition analyzer:
// WS phase phi on bin 1 followed by the PM mixing bins 0 and 1.
struct PhotonSetting {
  enum class Kind { Z, Superposition };
  Kind kind = Kind::Z;
  int outcome = 0;     // Z only: bin 0 or 1
  double phase = 0.0;  // Superposition only: |v> = (|0> + e^{i phase}|1>)/sqrt(2)
};

struct MeasurementSetting {
  PhotonSetting signal;
  PhotonSetting idler;
  double delta_meas = kDefaultMeasurementDepth;
};

// 1 for Z, 2 J0(delta) J1(delta) for a superposition analyzer.
double photon_efficiency(const PhotonSetting& s, double delta_meas);

// Unit-trace rank-1 projector of a single photon setting.
Eigen::Matrix2cd photon_projector(const PhotonSetting& s);

// Efficiency-weighted POVM element eta_s eta_i (P_s x P_i).
Eigen::Matrix4cd projector(const MeasurementSetting& setting);

// {Z0, Z1, X, Y} on each photon: 16 settings.
std::vector<MeasurementSetting> canonical_settings(double delta_meas = kDefaultMeasurementDepth);

// Mean coincidences per shot: Tr(rho E) plus an accidental floor
// 2 s_s s_i / car built from the two singles rates.
double coincidence_rate(const DensityMatrix& rho, const MeasurementSetting& setting,
                        double car = std::numeric_limits<double>::infinity());

struct FringeCurve {
  std::vector<double> dphi;
  std::vector<double> coincidences;  // per shot
  std::vector<double> singles_signal;
  std::vector<double> singles_idler;
};

// Signal analyzer at phase 0, idler analyzer at dphi.
FringeCurve bell_fringe(const DensityMatrix& rho, const std::vector<double>& dphi_grid,
                        double delta_meas = kDefaultMeasurementDepth,
                        double car = std::numeric_limits<double>::infinity());

enum class FitWeights { Poisson, Residual };

struct VisibilityFit {
  double visibility = 0.0;
  double phase_offset = 0.0;  // chi in B (1 + V cos(dphi + chi))
  double baseline = 0.0;
  double sigma_visibility = 0.0;
  double significance = 0.0;  // (V - 1/sqrt2) / sigma
  bool violates_bell = false; // V - sigma > 1/sqrt2
};

// Linear least squares on c0 + c1 cos + c2 sin. Poisson weights use
// var = max(y, 1); Residual scales an unweighted fit by the residual variance.
VisibilityFit fit_visibility(const std::vector<double>& dphi, const std::vector<double>& counts,
                             FitWeights weights = FitWeights::Poisson);

struct MeasurementRecord {
  MeasurementSetting setting;
  double shots = 0.0;
  double counts = 0.0;
};

// Poisson counts with mean shots * coincidence_rate; expected_value returns the means.
std::vector<MeasurementRecord> simulate_counts(const DensityMatrix& rho, const std::vector<MeasurementSetting>& settings,
                                               double shots_per_setting, double car, std::uint64_t seed,
                                               bool expected_value = false);

struct MleOptions {
  int random_starts = 3;
  std::uint64_t seed = 1;
};

struct MleResult {
  DensityMatrix rho;
  double log_likelihood = 0.0;
  int iterations = 0;
  bool converged = false;
  bool ill_conditioned = false;
  // log-likelihood at each accepted iterate of the winning start
  std::vector<double> history;
};

// rho = T^dag T / Tr(T^dag T) with T upper triangular and real diagonal;
// Poisson likelihood maximized by BFGS from the linear-inversion estimate and
// random starts.
MleResult mle_reconstruct(const std::vector<MeasurementRecord>& records, const MleOptions& options = {});

// Poisson log-likelihood relative to the saturated model (mu = counts) and its gradient in the 16 real
// Cholesky parameters; exposed for testing.
double mle_log_likelihood(const std::vector<MeasurementRecord>& records, const Eigen::VectorXd& params,
                          Eigen::VectorXd* gradient = nullptr);

DensityMatrix density_from_params(const Eigen::VectorXd& params);
Eigen::VectorXd params_from_density(const DensityMatrix& rho);

// Least-squares inversion of the records, projected onto the PSD cone.
DensityMatrix linear_inversion(const std::vector<MeasurementRecord>& records);

}  // namespace qfp
