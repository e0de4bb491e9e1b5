#pragma once

#include <optional>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "qfp/eom.hpp"
#include "qfp/lattice.hpp"
#include "qfp/rings.hpp"

namespace qfp {

using TwoByTwo = Eigen::Matrix2cd;
using BinPair = std::pair<int, int>;

struct WsSettings {
  std::vector<WsUnitConfig> units;
  WsModel model = WsModel::Ideal;
  WsEdgePolicy edges = WsEdgePolicy::ExtendEdges;
};

// IN PM -> WS -> OUT PM on one lattice.
struct ProcessorConfig {
  RfDrive in_drive;
  RfDrive out_drive;
  WsSettings ws;
  FrequencyLattice lattice;
  BinPair computational_bins{0, 1};
};

// M_out * D_ws * M_in.
ModeOperator compose_qfp(const ProcessorConfig& config);

// Equal-depth drives with relative RF phase pi (IN at pi, OUT at 0) and WS
// phases [0, 0, alpha, alpha] on the four channels around the qubit bins.
ProcessorConfig beamsplitter_config(double alpha, double delta, const FrequencyLattice& lattice,
                                    BinPair bins = {0, 1}, const RingParams& ring = default_ws_ring());

struct ReflectTransmit {
  double reflectivity;
  double transmissivity;
};

// R = J0^4 + (1 - J0^4)(1 + cos alpha)/2,  T = jbar (1 - cos alpha).
ReflectTransmit rt_closed_form(double alpha, double delta);

// 2 (sum_{k>=1} J_k J_{k-1})^2; the square is what reproduces T(pi) = 2 jbar.
double jbar(double delta);

TwoByTwo submatrix(const ModeOperator& op, BinPair bins);

double success_probability(const TwoByTwo& v);

// |Tr(V^dag U)|^2 / (4 P); throws UndefinedFidelity when P == 0.
double fidelity(const TwoByTwo& v, const TwoByTwo& target);

// [[cos(t/2), e^{i l} sin(t/2)], [e^{i m} sin(t/2), -e^{i(l+m)} cos(t/2)]]
TwoByTwo target_unitary(double theta, double lambda, double mu);

// Largest splitting angle reachable with the beamsplitter family at this depth.
double max_theta(double delta);

// alpha in [pi, 2 pi] with T / (R + T) = sin^2(theta / 2).
double alpha_for_theta(double theta, double delta);

ProcessorConfig synthesize_gate(double theta, double lambda, double mu, double delta,
                                const FrequencyLattice& lattice, BinPair bins = {0, 1},
                                const RingParams& ring = default_ws_ring());

// |compose_qfp(config) * input|^2 per lattice bin.
Eigen::VectorXd simulate_output_spectrum(const ProcessorConfig& config, const Eigen::VectorXcd& input);

// Input vector with unit amplitude spread over the given (bin, amplitude) pairs.
Eigen::VectorXcd bin_input(const FrequencyLattice& lattice,
                           const std::vector<std::pair<int, std::complex<double>>>& amplitudes);

// Output spectra for the reconstruction protocol. Superposition inputs are
// (bin0 + e^{i gamma} bin1) / sqrt(2).
struct SpectrumSet {
  FrequencyLattice lattice;
  BinPair bins{0, 1};
  Eigen::VectorXd input0;
  Eigen::VectorXd input1;
  Eigen::VectorXd gamma_0;
  Eigen::VectorXd gamma_pi;
  std::optional<Eigen::VectorXd> gamma_half_pi;
  std::optional<Eigen::VectorXd> gamma_three_half_pi;
};

SpectrumSet simulate_spectra(const ProcessorConfig& config, bool with_quadratures);

struct Reconstruction {
  TwoByTwo v;
  double residual = 0.0;        // max deviation of predicted from supplied spectra
  bool sign_ambiguous = false;  // two-gamma data with a nonzero sine term
};

// Gauge: V_00 and V_10 real non-negative. With two-gamma data the sine of each
// row's relative phase is fixed by Im(V_01) >= 0 and column orthogonality.
Reconstruction reconstruct_submatrix(const SpectrumSet& spectra, double tolerance = 1e-3);

// Row-phase gauge used by the reconstruction, applied to an arbitrary V.
TwoByTwo fix_row_gauge(const TwoByTwo& v);

enum class LossNormalization { PerBin, Aggregate };

// Success probability of a PHYSICAL-WS configuration with the WS insertion
// loss on the computational bins divided out.
double normalized_success_probability(const ProcessorConfig& physical, LossNormalization mode);

struct SinglePmBalance {
  double delta;
  double success_probability;
};

// Sweeps the depth of a lone modulator (OUT off, flat WS) for the point where
// |V_00|^2 = |V_10|^2 and returns its success probability.
SinglePmBalance single_pm_balanced_splitting(const FrequencyLattice& lattice, BinPair bins = {0, 1});

}  // namespace qfp
