#pragma once

#include <complex>
#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "qfp/rings.hpp"

namespace qfp {

// Dither tones applied to the DEMUX and MUX heaters. Resonances move as
// lambda(t) = lambda_bar + amplitude * sin(2 pi f t).
struct DitherConfig {
  double amplitude = 0.0;   // m
  double f_demux = 150.0;   // Hz
  double f_mux = 250.0;     // Hz
  double duration = 0.2;    // s; ten periods of the 50 Hz common base
  double sample_rate = 51200.0;
  double noise_sigma = 0.0;  // additive white noise on the intensity trace
  std::uint64_t noise_seed = 0;

  double alignment_tone() const { return 2.0 * (f_demux + f_mux); }
  double phase_tone() const { return f_mux - f_demux; }
  std::size_t sample_count() const;
};

inline constexpr double kDefaultDitherLinewidths = 0.15;

// Dither with amplitude set to kDefaultDitherLinewidths of the ring linewidth.
DitherConfig default_dither(const RingParams& ring);

// Throws InvalidArgument unless every tone falls on an exact DFT bin and the
// sampling is fast enough for the alignment harmonic.
void validate_dither(const DitherConfig& dither);

struct Trace {
  std::vector<double> samples;
  double sample_rate = 0.0;
};

Trace simulate_dither_trace(const WsUnitConfig& unit, const DitherConfig& dither, double probe_wavelength);

// (2/N) sum_k I(t_k) exp(-2 pi i f t_k); f must be an exact DFT bin.
std::complex<double> harmonic_component(const Trace& trace, double frequency);

struct AlignScan {
  std::vector<double> demux_shifts;  // m, applied on top of the template detuning
  std::vector<double> mux_shifts;
  Eigen::MatrixXd magnitude;         // |I(2(f_D + f_M))|, rows = demux shift, cols = mux shift
  double best_demux_shift = 0.0;
  double best_mux_shift = 0.0;
};

// Grid search maximizing the 2(f_D + f_M) harmonic. The returned best shifts
// are the corrections that bring both rings onto the probe.
AlignScan align_scan(const WsUnitConfig& unit_template, const std::vector<double>& demux_shifts,
                     const std::vector<double>& mux_shifts, const DitherConfig& dither,
                     double probe_wavelength);

// Symmetric grid from -half_span to +half_span with the given step.
std::vector<double> scan_axis(double half_span, double step);

struct PhaseCalibration {
  double power_2pi = 0.0;     // W
  double phase_offset = 0.0;  // channel phase at zero power, [-pi, pi)
  double amplitude = 0.0;     // fitted fringe amplitude
  double fringe_offset = 0.0; // raw fitted offset of the cosine fringe
  Eigen::Matrix3d covariance = Eigen::Matrix3d::Zero();  // (amplitude, power_2pi, fringe_offset)
  double residual_rms = 0.0;
  double r_squared = 0.0;
};

// Sign s in Re I(f_M - f_D) = s * I0 * cos(Phi) for an aligned unit.
int fringe_polarity(const WsUnitConfig& aligned_unit, const DitherConfig& dither, double probe_wavelength);

// Fits Re I(f_M - f_D) = I0 cos(2 pi P / P_2pi + offset) over the power sweep.
PhaseCalibration fit_phase_curve(const std::vector<double>& powers, const std::vector<Trace>& traces,
                                 const DitherConfig& dither, int polarity = 1);

// Traces of an aligned unit whose channel phase follows
// Phi(P) = phase_offset + 2 pi P / power_2pi.
std::vector<Trace> simulate_phase_sweep(const WsUnitConfig& aligned_unit, const DitherConfig& dither,
                                        double probe_wavelength, const std::vector<double>& powers,
                                        double power_2pi, double phase_offset);

double phase_from_power(const PhaseCalibration& cal, double power);

// Maps any angle into [-pi, pi).
double wrap_phase(double angle);

}  // namespace qfp
