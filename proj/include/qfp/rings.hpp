#pragma once

#include <complex>
#include <vector>

#include "qfp/eom.hpp"
#include "qfp/lattice.hpp"

namespace qfp {

// Symmetric add-drop microring.
struct RingParams {
  double resonance_wavelength = 1.55e-6;  // m
  double power_coupling = 0.023;          // kappa^2 per coupler
  double round_trip_loss = 1.0;           // amplitude factor a per round trip
  double radius = 50e-6;                  // m
  double effective_index = 2.8;

  double circumference() const;
  double self_coupling() const;  // t_c = sqrt(1 - kappa^2)
  RingParams with_resonance(double wavelength) const;
};

// Round-trip amplitude from propagation loss over the circle circumference.
double round_trip_amplitude(double loss_db_per_cm, double radius);

RingParams make_ring(double resonance_wavelength, double power_coupling, double loss_db_per_cm,
                     double radius, double effective_index);

// Device ring used throughout: kappa^2 = 0.023, 1.2 dB/cm, R = 50 um, n_eff = 2.8.
RingParams default_ws_ring(double resonance_wavelength = 1.55e-6);

// Round-trip phase, zero at the resonance wavelength.
double round_trip_phase(double probe_wavelength, const RingParams& ring);

std::complex<double> ring_through(double probe_wavelength, const RingParams& ring);
std::complex<double> ring_drop(double probe_wavelength, const RingParams& ring);

// Closed-form resonance properties of the single-resonance model.
double free_spectral_range_wavelength(const RingParams& ring);
double linewidth_wavelength(const RingParams& ring);  // FWHM of the through dip
double loaded_q(const RingParams& ring);

enum class WsMode { Phase, Pass, Stop };

// One DEMUX/MUX ring pair. Ring resonances sit at channel_wavelength + detuning;
// the resonance_wavelength stored in demux/mux is not used.
struct WsUnitConfig {
  double channel_wavelength = 1.55e-6;
  RingParams demux;
  RingParams mux;
  double channel_phase = 0.0;  // Phi, rad
  WsMode mode = WsMode::Phase;
  double demux_detuning = 0.0;  // m
  double mux_detuning = 0.0;    // m
};

inline constexpr double kPassDetuningLinewidths = 25.0;

WsUnitConfig make_phase_unit(double channel_wavelength, const RingParams& ring, double phase);
WsUnitConfig make_pass_unit(double channel_wavelength, const RingParams& ring);
// DEMUX aligned and terminated, MUX parked.
WsUnitConfig make_stop_unit(double channel_wavelength, const RingParams& ring);

// Bus-to-bus amplitude: t_M t_D + d_M e^{i Phi} d_D; in STOP the dropped light
// is absorbed and only t_M t_D remains.
std::complex<double> ws_unit_response(double probe_wavelength, const WsUnitConfig& unit);

enum class WsModel { Ideal, Physical };

// How an ideal shaper treats bins outside its channels.
enum class WsEdgePolicy {
  ChannelsOnly,  // unit transmission outside the channels
  ExtendEdges,   // outer bins continue the phase slope of the two outermost channels
};

// Diagonal operator of a cascade of WS units on the lattice.
ModeOperator ws_operator(const std::vector<WsUnitConfig>& units, const FrequencyLattice& lattice,
                         WsModel model, WsEdgePolicy edges = WsEdgePolicy::ChannelsOnly);

// Asymmetric-MZI pump filter power transmission.
double mzi_pump_filter(double probe_frequency, double fsr, double extinction_db, double phase_offset);

}  // namespace qfp
