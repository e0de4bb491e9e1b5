#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "qfp/calib.hpp"
#include "qfp/errors.hpp"

using namespace qfp;

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kLambda = 1.55e-6;

// Plain DFT coefficient with the same (2/N) scaling, summed in long double.
std::complex<double> dft_oracle(const Trace& tr, double f) {
  long double re = 0.0L;
  long double im = 0.0L;
  const std::size_t n = tr.samples.size();
  for (std::size_t k = 0; k < n; ++k) {
    const long double arg = 2.0L * std::numbers::pi_v<long double> * f * static_cast<long double>(k) / tr.sample_rate;
    re += tr.samples[k] * std::cos(arg);
    im -= tr.samples[k] * std::sin(arg);
  }
  return {static_cast<double>(2.0L * re / n), static_cast<double>(2.0L * im / n)};
}

double spread(const Trace& tr) {
  const auto [lo, hi] = std::minmax_element(tr.samples.begin(), tr.samples.end());
  return *hi - *lo;
}

struct Fixture {
  RingParams ring = default_ws_ring(kLambda);
  double lw = linewidth_wavelength(ring);
  DitherConfig dither = default_dither(ring);
};

}  // namespace

TEST_CASE("default dither is commensurate") {
  Fixture fx;
  CHECK_NOTHROW(validate_dither(fx.dither));
  CHECK(fx.dither.alignment_tone() == 800.0);
  CHECK(fx.dither.phase_tone() == 100.0);
  CHECK(fx.dither.sample_count() == 10240);
  CHECK(fx.dither.amplitude == doctest::Approx(0.15 * fx.lw));
}

TEST_CASE("invalid dither timing") {
  Fixture fx;
  auto d = fx.dither;
  d.f_mux = d.f_demux;
  CHECK_THROWS_AS(validate_dither(d), InvalidArgument);
  d = fx.dither;
  d.duration = 0.203;
  CHECK_THROWS_AS(validate_dither(d), InvalidArgument);
  d = fx.dither;
  d.sample_rate = 8000.0;
  CHECK_THROWS_AS(validate_dither(d), InvalidArgument);
  d = fx.dither;
  d.f_mux = 252.5;
  CHECK_THROWS_AS(simulate_dither_trace(make_phase_unit(kLambda, fx.ring, 0.0), d, kLambda), InvalidArgument);
}

TEST_CASE("zero dither gives a constant trace") {
  Fixture fx;
  auto d = fx.dither;
  d.amplitude = 0.0;
  const auto tr = simulate_dither_trace(make_phase_unit(kLambda, fx.ring, 0.4), d, kLambda);
  CHECK(spread(tr) == 0.0);
}

TEST_CASE("harmonic extraction on synthetic traces") {
  Trace tr;
  tr.sample_rate = 51200.0;
  tr.samples.resize(10240);
  for (std::size_t k = 0; k < tr.samples.size(); ++k) tr.samples[k] = 3.0;
  CHECK(std::abs(harmonic_component(tr, 150.0)) < 1e-12);
  for (std::size_t k = 0; k < tr.samples.size(); ++k) {
    tr.samples[k] = 0.7 * std::cos(2.0 * kPi * 250.0 * k / tr.sample_rate + 0.3);
  }
  const auto c = harmonic_component(tr, 250.0);
  CHECK(std::abs(c) == doctest::Approx(0.7).epsilon(1e-12));
  CHECK(std::arg(c) == doctest::Approx(0.3).epsilon(1e-10));
  CHECK_THROWS_AS(harmonic_component(tr, 152.5), InvalidArgument);
}

TEST_CASE("aligned trace carries the dither tones and their products") {
  Fixture fx;
  auto d = fx.dither;
  d.amplitude = 0.2 * fx.lw;
  const auto tr = simulate_dither_trace(make_phase_unit(kLambda, fx.ring, 0.0), d, kLambda);
  const double mean = dft_oracle(tr, 0.0).real() / 2.0;
  for (double f : {100.0, 300.0, 400.0, 500.0, 800.0}) {
    const auto c = harmonic_component(tr, f);
    CHECK(std::abs(c - dft_oracle(tr, f)) < 1e-12);
    CHECK(std::abs(c) > 1e-3 * mean);
  }
  // on resonance the slope vanishes, so the fundamentals only appear off it
  auto unit = make_phase_unit(kLambda, fx.ring, 0.0);
  unit.demux_detuning = 0.3 * fx.lw;
  unit.mux_detuning = -0.2 * fx.lw;
  const auto off = simulate_dither_trace(unit, d, kLambda);
  for (double f : {150.0, 250.0}) {
    CHECK(std::abs(harmonic_component(tr, f)) < 1e-5 * mean);
    CHECK(std::abs(harmonic_component(off, f) - dft_oracle(off, f)) < 1e-12);
    CHECK(std::abs(harmonic_component(off, f)) > 1e-3 * mean);
  }
}

TEST_CASE("Parseval bound") {
  Fixture fx;
  auto unit = make_phase_unit(kLambda, fx.ring, 1.0);
  unit.demux_detuning = 0.3 * fx.lw;
  const auto tr = simulate_dither_trace(unit, fx.dither, kLambda);
  double ms = 0.0;
  for (double v : tr.samples) ms += v * v;
  ms /= static_cast<double>(tr.samples.size());
  const double dc = dft_oracle(tr, 0.0).real() / 2.0;
  double ac = 0.0;
  for (int k = 1; k <= 40; ++k) ac += 0.5 * std::norm(harmonic_component(tr, 50.0 * k));
  CHECK(dc * dc + ac <= ms * (1.0 + 1e-12));
  CHECK(dc * dc + ac == doctest::Approx(ms).epsilon(1e-9));
}

TEST_CASE("far-detuned rings flatten the trace") {
  Fixture fx;
  auto aligned = make_phase_unit(kLambda, fx.ring, 0.0);
  auto detuned = aligned;
  detuned.demux_detuning = 3.0 * fx.lw;
  detuned.mux_detuning = 3.0 * fx.lw;
  const double a = spread(simulate_dither_trace(aligned, fx.dither, kLambda));
  const double b = spread(simulate_dither_trace(detuned, fx.dither, kLambda));
  CHECK(b < 0.1 * a);
}

TEST_CASE("alignment harmonic peaks on resonance") {
  Fixture fx;
  const auto unit = make_phase_unit(kLambda, fx.ring, 0.0);
  const double at = std::abs(harmonic_component(simulate_dither_trace(unit, fx.dither, kLambda), 800.0));
  CHECK(at > 0.0);
  for (double dd : {-1.0, -0.25, 0.25, 1.0}) {
    for (double dm : {-0.5, 0.0, 0.5}) {
      auto u = unit;
      u.demux_detuning = dd * fx.lw;
      u.mux_detuning = dm * fx.lw;
      CHECK(std::abs(harmonic_component(simulate_dither_trace(u, fx.dither, kLambda), 800.0)) < at);
    }
  }
}

TEST_CASE("align_scan recovers planted offsets") {
  Fixture fx;
  auto unit = make_phase_unit(kLambda, fx.ring, 0.0);
  unit.demux_detuning = 0.5 * fx.lw;
  unit.mux_detuning = -0.25 * fx.lw;
  const double step = 0.25 * fx.lw;
  const auto axis = scan_axis(2.0 * fx.lw, step);
  const auto scan = align_scan(unit, axis, axis, fx.dither, kLambda);
  CHECK(std::abs(scan.best_demux_shift + unit.demux_detuning) <= step * 1.0001);
  CHECK(std::abs(scan.best_mux_shift + unit.mux_detuning) <= step * 1.0001);
  CHECK(scan.magnitude.rows() == static_cast<Eigen::Index>(axis.size()));
}

TEST_CASE("alignment argmax does not depend on the channel phase") {
  Fixture fx;
  const double step = 0.25 * fx.lw;
  const auto axis = scan_axis(2.0 * fx.lw, step);
  for (double phi : {0.0, kPi / 2, kPi, 1.5 * kPi}) {
    const auto scan = align_scan(make_phase_unit(kLambda, fx.ring, phi), axis, axis, fx.dither, kLambda);
    CHECK(std::abs(scan.best_demux_shift) <= step * 1.0001);
    CHECK(std::abs(scan.best_mux_shift) <= step * 1.0001);
  }
}

TEST_CASE("scan map is symmetric for identical rings") {
  Fixture fx;
  const auto axis = scan_axis(2.0 * fx.lw, 0.5 * fx.lw);
  const auto scan = align_scan(make_phase_unit(kLambda, fx.ring, 0.8), axis, axis, fx.dither, kLambda);
  const double peak = scan.magnitude.maxCoeff();
  CHECK((scan.magnitude - scan.magnitude.transpose()).cwiseAbs().maxCoeff() < 1e-3 * peak);
}

TEST_CASE("degenerate and malformed scans") {
  Fixture fx;
  const auto axis = scan_axis(2.0 * fx.lw, 0.5 * fx.lw);
  auto d = fx.dither;
  d.amplitude = 0.0;
  CHECK_THROWS_AS(align_scan(make_phase_unit(kLambda, fx.ring, 0.0), axis, axis, d, kLambda), DegenerateScan);
  CHECK_THROWS_AS(align_scan(make_phase_unit(kLambda, fx.ring, 0.0), {}, axis, fx.dither, kLambda), InvalidArgument);
  const auto narrow = scan_axis(1.0 * fx.lw, 0.5 * fx.lw);
  CHECK_THROWS_AS(align_scan(make_phase_unit(kLambda, fx.ring, 0.0), narrow, narrow, fx.dither, kLambda),
                  InvalidArgument);
}

TEST_CASE("phase-tone fringe follows cos(Phi + Phi0)") {
  Fixture fx;
  std::vector<double> phis;
  std::vector<double> y;
  for (int k = 0; k < 24; ++k) {
    const double phi = 2.0 * kPi * k / 24.0;
    phis.push_back(phi);
    const auto tr = simulate_dither_trace(make_phase_unit(kLambda, fx.ring, phi), fx.dither, kLambda);
    y.push_back(harmonic_component(tr, fx.dither.phase_tone()).real());
  }
  Eigen::MatrixXd a(24, 3);
  Eigen::VectorXd b(24);
  for (int k = 0; k < 24; ++k) {
    a(k, 0) = std::cos(phis[k]);
    a(k, 1) = std::sin(phis[k]);
    a(k, 2) = 1.0;
    b(k) = y[k];
  }
  const Eigen::VectorXd c = a.colPivHouseholderQr().solve(b);
  const double ss_res = (a * c - b).squaredNorm();
  const double ss_tot = (b.array() - b.mean()).matrix().squaredNorm();
  CHECK(1.0 - ss_res / ss_tot > 0.999);
}

TEST_CASE("phase calibration plant and recover") {
  Fixture fx;
  const auto unit = make_phase_unit(kLambda, fx.ring, 0.0);
  std::vector<double> powers;
  for (int k = 0; k < 41; ++k) powers.push_back(0.06 * k / 40.0);
  const double p2pi = 0.03;
  const double phi0 = 0.4;
  const auto traces = simulate_phase_sweep(unit, fx.dither, kLambda, powers, p2pi, phi0);
  const int pol = fringe_polarity(unit, fx.dither, kLambda);
  CHECK(std::abs(pol) == 1);
  const auto cal = fit_phase_curve(powers, traces, fx.dither, pol);
  CHECK(cal.power_2pi == doctest::Approx(p2pi).epsilon(0.01));
  CHECK(std::abs(wrap_phase(cal.phase_offset - phi0)) < 0.01 * std::abs(phi0));
  // the ring terms that do not depend on the phase leave a small offset
  CHECK(cal.residual_rms < 1e-3 * cal.amplitude);
  CHECK(cal.r_squared > 0.999);
  CHECK(cal.phase_offset >= -kPi);
  CHECK(cal.phase_offset < kPi);
}

TEST_CASE("phase calibration preconditions") {
  Fixture fx;
  const auto unit = make_phase_unit(kLambda, fx.ring, 0.0);
  std::vector<double> few{0.0, 0.01, 0.02, 0.03};
  CHECK_THROWS_AS(fit_phase_curve(few, simulate_phase_sweep(unit, fx.dither, kLambda, few, 0.03, 0.0), fx.dither),
                  InvalidArgument);
  std::vector<double> short_span;
  for (int k = 0; k < 12; ++k) short_span.push_back(0.01 * k / 11.0);
  CHECK_THROWS_AS(fit_phase_curve(short_span, simulate_phase_sweep(unit, fx.dither, kLambda, short_span, 0.03, 0.0),
                                  fx.dither),
                  InvalidArgument);
}

TEST_CASE("phase from power") {
  PhaseCalibration cal;
  cal.power_2pi = 0.03;
  cal.phase_offset = 0.4;
  CHECK(phase_from_power(cal, 0.0) == doctest::Approx(0.4));
  CHECK(phase_from_power(cal, 0.03) == doctest::Approx(0.4));
  CHECK(phase_from_power(cal, 0.015) == doctest::Approx(wrap_phase(0.4 + kPi)));
  CHECK(wrap_phase(kPi) == doctest::Approx(-kPi));
}

TEST_CASE("phase fit is exact on a pure cosine fringe") {
  Fixture fx;
  const double p2pi = 0.025;
  const double phi0 = -1.1;
  const double i0 = 0.05;
  const auto n = static_cast<std::size_t>(std::llround(fx.dither.duration * fx.dither.sample_rate));
  std::vector<double> powers;
  std::vector<Trace> traces;
  for (int k = 0; k < 30; ++k) {
    const double pw = 0.05 * k / 29.0;
    const double re = i0 * std::cos(2.0 * kPi * pw / p2pi + phi0);
    Trace tr;
    tr.sample_rate = fx.dither.sample_rate;
    for (std::size_t j = 0; j < n; ++j) {
      const double t = static_cast<double>(j) / tr.sample_rate;
      tr.samples.push_back(1.0 + re * std::cos(2.0 * kPi * fx.dither.phase_tone() * t));
    }
    powers.push_back(pw);
    traces.push_back(std::move(tr));
  }
  const auto cal = fit_phase_curve(powers, traces, fx.dither, 1);
  CHECK(cal.power_2pi == doctest::Approx(p2pi).epsilon(1e-8));
  CHECK(std::abs(wrap_phase(cal.phase_offset - phi0)) < 1e-8);
  CHECK(cal.amplitude == doctest::Approx(i0).epsilon(1e-8));
  CHECK(cal.residual_rms < 1e-6 * cal.amplitude);
}
