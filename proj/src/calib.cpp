#include "qfp/calib.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <string>

#include "qfp/errors.hpp"
#include "qfp/optimize.hpp"
#include "qfp/parallel.hpp"

namespace qfp {

using std::numbers::pi;

namespace {

bool is_integral(double v, double tol = 1e-6) { return std::abs(v - std::round(v)) <= tol * std::max(1.0, std::abs(v)); }

}  // namespace

double wrap_phase(double angle) {
  double w = angle - 2.0 * pi * std::floor((angle + pi) / (2.0 * pi));
  if (w >= pi) w -= 2.0 * pi;
  return w;
}

std::size_t DitherConfig::sample_count() const {
  return static_cast<std::size_t>(std::llround(duration * sample_rate));
}

DitherConfig default_dither(const RingParams& ring) {
  DitherConfig d;
  d.amplitude = kDefaultDitherLinewidths * linewidth_wavelength(ring);
  return d;
}

void validate_dither(const DitherConfig& d) {
  if (!(d.f_demux > 0.0) || !(d.f_mux > 0.0) || d.f_demux == d.f_mux) {
    throw InvalidArgument("dither: tones must be positive and distinct");
  }
  if (!(d.duration > 0.0) || !(d.sample_rate > 0.0)) {
    throw InvalidArgument("dither: duration and sample rate must be positive");
  }
  if (d.amplitude < 0.0) throw InvalidArgument("dither: negative amplitude");
  if (d.sample_rate < 16.0 * d.alignment_tone()) {
    throw InvalidArgument("dither: sample rate below 16x the alignment harmonic");
  }
  if (!is_integral(d.duration * d.sample_rate)) {
    throw InvalidArgument("dither: duration is not a whole number of samples");
  }
  if (!is_integral(d.duration * d.f_demux) || !is_integral(d.duration * d.f_mux)) {
    throw InvalidArgument("dither: duration must hold an integer number of periods of both tones");
  }
}

Trace simulate_dither_trace(const WsUnitConfig& unit, const DitherConfig& dither, double probe_wavelength) {
  validate_dither(dither);
  const std::size_t n = dither.sample_count();
  Trace trace;
  trace.sample_rate = dither.sample_rate;
  trace.samples.resize(n);
  WsUnitConfig inst = unit;
  for (std::size_t k = 0; k < n; ++k) {
    const double t = static_cast<double>(k) / dither.sample_rate;
    inst.demux_detuning = unit.demux_detuning + dither.amplitude * std::sin(2.0 * pi * dither.f_demux * t);
    inst.mux_detuning = unit.mux_detuning + dither.amplitude * std::sin(2.0 * pi * dither.f_mux * t);
    trace.samples[k] = std::norm(ws_unit_response(probe_wavelength, inst));
  }
  if (dither.noise_sigma > 0.0) {
    std::mt19937_64 rng(dither.noise_seed);
    std::normal_distribution<double> noise(0.0, dither.noise_sigma);
    for (auto& s : trace.samples) s += noise(rng);
  }
  return trace;
}

std::complex<double> harmonic_component(const Trace& trace, double frequency) {
  const auto n = trace.samples.size();
  if (n == 0 || !(trace.sample_rate > 0.0)) throw InvalidArgument("harmonic_component: empty trace");
  const double bin = frequency * static_cast<double>(n) / trace.sample_rate;
  if (!is_integral(bin, 1e-9)) {
    throw InvalidArgument("harmonic_component: " + std::to_string(frequency) +
                          " Hz is not an exact DFT bin of the trace");
  }
  const auto k_bin = std::llround(bin);
  std::complex<double> acc = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    // reduce the phase index modulo n to keep the argument small
    const auto idx = static_cast<long long>((static_cast<unsigned long long>(k) * static_cast<unsigned long long>(std::llabs(k_bin))) % n);
    const double ang = -2.0 * pi * static_cast<double>(idx) / static_cast<double>(n) * (k_bin < 0 ? -1.0 : 1.0);
    acc += trace.samples[k] * std::polar(1.0, ang);
  }
  return 2.0 / static_cast<double>(n) * acc;
}

std::vector<double> scan_axis(double half_span, double step) {
  if (!(step > 0.0) || half_span < 0.0) throw InvalidArgument("scan_axis: invalid span or step");
  const int k = static_cast<int>(std::floor(half_span / step + 1e-9));
  std::vector<double> axis;
  for (int i = -k; i <= k; ++i) axis.push_back(i * step);
  return axis;
}

AlignScan align_scan(const WsUnitConfig& unit_template, const std::vector<double>& demux_shifts,
                     const std::vector<double>& mux_shifts, const DitherConfig& dither,
                     double probe_wavelength) {
  if (demux_shifts.empty() || mux_shifts.empty()) throw InvalidArgument("align_scan: empty grid");
  validate_dither(dither);
  const double lw = linewidth_wavelength(unit_template.demux.with_resonance(probe_wavelength));
  auto half_span = [](const std::vector<double>& v) {
    const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    return 0.5 * (*hi - *lo);
  };
  if (half_span(demux_shifts) < 2.0 * lw * (1.0 - 1e-9) || half_span(mux_shifts) < 2.0 * lw * (1.0 - 1e-9)) {
    throw InvalidArgument("align_scan: grid must cover at least +-2 linewidths on both axes");
  }

  AlignScan scan;
  scan.demux_shifts = demux_shifts;
  scan.mux_shifts = mux_shifts;
  const auto rows = static_cast<Eigen::Index>(demux_shifts.size());
  const auto cols = static_cast<Eigen::Index>(mux_shifts.size());
  scan.magnitude.resize(rows, cols);
  parallel_for(static_cast<std::size_t>(rows * cols), [&](std::size_t flat) {
    const auto i = static_cast<Eigen::Index>(flat) / cols;
    const auto j = static_cast<Eigen::Index>(flat) % cols;
    WsUnitConfig unit = unit_template;
    unit.demux_detuning += demux_shifts[static_cast<std::size_t>(i)];
    unit.mux_detuning += mux_shifts[static_cast<std::size_t>(j)];
    const auto trace = simulate_dither_trace(unit, dither, probe_wavelength);
    scan.magnitude(i, j) = std::abs(harmonic_component(trace, dither.alignment_tone()));
  });

  Eigen::Index bi = 0;
  Eigen::Index bj = 0;
  const double peak = scan.magnitude.maxCoeff(&bi, &bj);
  if (!(peak > 1e-12)) {
    throw DegenerateScan("align_scan: alignment harmonic vanishes over the whole grid (zero dither?)");
  }
  scan.best_demux_shift = demux_shifts[static_cast<std::size_t>(bi)];
  scan.best_mux_shift = mux_shifts[static_cast<std::size_t>(bj)];
  return scan;
}

int fringe_polarity(const WsUnitConfig& aligned_unit, const DitherConfig& dither, double probe_wavelength) {
  WsUnitConfig unit = aligned_unit;
  unit.channel_phase = 0.0;
  const auto trace = simulate_dither_trace(unit, dither, probe_wavelength);
  return harmonic_component(trace, dither.phase_tone()).real() >= 0.0 ? 1 : -1;
}

std::vector<Trace> simulate_phase_sweep(const WsUnitConfig& aligned_unit, const DitherConfig& dither,
                                        double probe_wavelength, const std::vector<double>& powers,
                                        double power_2pi, double phase_offset) {
  if (!(power_2pi > 0.0)) throw InvalidArgument("simulate_phase_sweep: power_2pi must be positive");
  std::vector<Trace> traces(powers.size());
  parallel_for(powers.size(), [&](std::size_t k) {
    WsUnitConfig unit = aligned_unit;
    unit.channel_phase = phase_offset + 2.0 * pi * powers[k] / power_2pi;
    traces[k] = simulate_dither_trace(unit, dither, probe_wavelength);
  });
  return traces;
}

PhaseCalibration fit_phase_curve(const std::vector<double>& powers, const std::vector<Trace>& traces,
                                 const DitherConfig& dither, int polarity) {
  if (powers.size() != traces.size()) throw InvalidArgument("fit_phase_curve: powers/traces size mismatch");
  if (powers.size() < 8) throw InvalidArgument("fit_phase_curve: need at least 8 power points");
  if (polarity != 1 && polarity != -1) throw InvalidArgument("fit_phase_curve: polarity must be +-1");

  const auto m = static_cast<Eigen::Index>(powers.size());
  Eigen::VectorXd p(m);
  Eigen::VectorXd y(m);
  for (Eigen::Index k = 0; k < m; ++k) {
    p(k) = powers[static_cast<std::size_t>(k)];
    y(k) = harmonic_component(traces[static_cast<std::size_t>(k)], dither.phase_tone()).real();
  }
  const double span = p.maxCoeff() - p.minCoeff();
  if (!(span > 0.0)) throw InvalidArgument("fit_phase_curve: powers do not span a range");

  std::vector<double> sorted(powers.begin(), powers.end());
  std::sort(sorted.begin(), sorted.end());
  double min_gap = span;
  for (std::size_t k = 1; k < sorted.size(); ++k) {
    if (sorted[k] > sorted[k - 1]) min_gap = std::min(min_gap, sorted[k] - sorted[k - 1]);
  }

  // Coarse period search: for each trial period solve the linear (a cos + b sin) fit.
  double best_period = span;
  double best_cost = std::numeric_limits<double>::infinity();
  Eigen::Vector2d best_ab = Eigen::Vector2d::Zero();
  const double lo = std::log(2.0 * min_gap);
  const double hi = std::log(4.0 * span);
  for (int k = 0; k <= 2000; ++k) {
    const double period = std::exp(lo + (hi - lo) * k / 2000.0);
    Eigen::MatrixXd basis(m, 2);
    for (Eigen::Index i = 0; i < m; ++i) {
      basis(i, 0) = std::cos(2.0 * pi * p(i) / period);
      basis(i, 1) = std::sin(2.0 * pi * p(i) / period);
    }
    const Eigen::Vector2d ab = basis.colPivHouseholderQr().solve(y);
    const double cost = (basis * ab - y).squaredNorm();
    if (cost < best_cost) {
      best_cost = cost;
      best_period = period;
      best_ab = ab;
    }
  }

  // a cos x + b sin x = A cos(x + phi) with A = |(a, b)|, phi = atan2(-b, a)
  Eigen::Vector3d start(best_ab.norm(), best_period, std::atan2(-best_ab(1), best_ab(0)));
  auto residuals = [&](const Eigen::VectorXd& q) {
    Eigen::VectorXd r(m);
    for (Eigen::Index i = 0; i < m; ++i) r(i) = q(0) * std::cos(2.0 * pi * p(i) / q(1) + q(2)) - y(i);
    return r;
  };
  const auto fit = opt::levenberg_marquardt(residuals, start);
  if (!fit.converged || !fit.params.allFinite() || !(fit.params(1) > 0.0)) {
    throw FitFailure("fit_phase_curve: fringe fit did not converge (rms " + std::to_string(fit.residual_rms) + ")");
  }

  PhaseCalibration cal;
  double amplitude = fit.params(0);
  double offset = fit.params(2);
  if (amplitude < 0.0) {
    amplitude = -amplitude;
    offset += pi;
  }
  if (!(amplitude > 0.0)) throw FitFailure("fit_phase_curve: zero fringe amplitude");
  cal.amplitude = amplitude;
  cal.power_2pi = fit.params(1);
  cal.fringe_offset = wrap_phase(offset);
  cal.phase_offset = wrap_phase(polarity > 0 ? offset : offset - pi);
  cal.covariance = fit.covariance;
  cal.residual_rms = fit.residual_rms;
  const double mean = y.mean();
  const double ss_tot = (y.array() - mean).square().sum();
  const double ss_res = residuals(fit.params).squaredNorm();
  cal.r_squared = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : 0.0;

  if (span < cal.power_2pi * (1.0 - 1e-6)) {
    throw InvalidArgument("fit_phase_curve: power sweep spans less than one 2 pi period");
  }
  return cal;
}

double phase_from_power(const PhaseCalibration& cal, double power) {
  return wrap_phase(cal.phase_offset + 2.0 * pi * power / cal.power_2pi);
}

}  // namespace qfp
