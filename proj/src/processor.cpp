#include "qfp/processor.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "qfp/bessel.hpp"
#include "qfp/errors.hpp"

namespace qfp {

namespace {

constexpr double pi = std::numbers::pi;

// Requests up to this far above max_theta snap to the balanced point alpha = pi.
constexpr double kThetaSnap = 0.05;

void check_bins(const FrequencyLattice& lattice, BinPair bins, const char* where) {
  if (!lattice.contains(bins.first) || !lattice.contains(bins.second)) {
    throw InvalidArgument(std::string(where) + ": bins outside the lattice window");
  }
  if (bins.second != bins.first + 1) {
    throw InvalidArgument(std::string(where) + ": computational bins must be adjacent (b1 = b0 + 1)");
  }
}

double split_ratio(double alpha, double delta) {
  const auto rt = rt_closed_form(alpha, delta);
  return rt.transmissivity / (rt.reflectivity + rt.transmissivity);
}

}  // namespace

ModeOperator compose_qfp(const ProcessorConfig& config) {
  const auto m_in = eom_operator(config.in_drive, config.lattice);
  const auto ws = ws_operator(config.ws.units, config.lattice, config.ws.model, config.ws.edges);
  const auto m_out = eom_operator(config.out_drive, config.lattice);
  return compose(m_out, compose(ws, m_in), "qfp");
}

ProcessorConfig beamsplitter_config(double alpha, double delta, const FrequencyLattice& lattice, BinPair bins,
                                    const RingParams& ring) {
  check_bins(lattice, bins, "beamsplitter_config");
  if (!(delta >= 0.0)) throw InvalidArgument("beamsplitter_config: depth must be non-negative");
  const double f = lattice.spacing();
  ProcessorConfig cfg{RfDrive{delta, pi, f, true}, RfDrive{delta, 0.0, f, true}, WsSettings{}, lattice, bins};
  const int b0 = bins.first;
  const int channel_bins[4] = {b0 - 1, b0, b0 + 1, b0 + 2};
  const double phases[4] = {0.0, 0.0, alpha, alpha};
  for (int k = 0; k < 4; ++k) {
    if (!lattice.contains(channel_bins[k])) {
      throw InvalidArgument("beamsplitter_config: WS channels fall outside the lattice window");
    }
    cfg.ws.units.push_back(make_phase_unit(lattice.bin_wavelength(channel_bins[k]), ring, phases[k]));
  }
  return cfg;
}

double jbar(double delta) {
  if (!(delta >= 0.0)) throw InvalidArgument("jbar: depth must be non-negative");
  const int k_max = truncation_order(delta) + 2;
  const auto j = bessel_j_sequence(k_max, delta);
  double s = 0.0;
  for (int k = 1; k <= k_max; ++k) s += j[static_cast<std::size_t>(k)] * j[static_cast<std::size_t>(k - 1)];
  return 2.0 * s * s;
}

ReflectTransmit rt_closed_form(double alpha, double delta) {
  if (!(delta >= 0.0)) throw InvalidArgument("rt_closed_form: depth must be non-negative");
  const double j0 = bessel_j(0, delta);
  const double j04 = j0 * j0 * j0 * j0;
  const double c = std::cos(alpha);
  return {j04 + 0.5 * (1.0 - j04) * (1.0 + c), jbar(delta) * (1.0 - c)};
}

TwoByTwo submatrix(const ModeOperator& op, BinPair bins) {
  if (!op.lattice.contains(bins.first) || !op.lattice.contains(bins.second)) {
    throw InvalidArgument("submatrix: bins outside the lattice window");
  }
  TwoByTwo v;
  v << op.at(bins.first, bins.first), op.at(bins.first, bins.second),
      op.at(bins.second, bins.first), op.at(bins.second, bins.second);
  return v;
}

double success_probability(const TwoByTwo& v) { return 0.5 * (v.adjoint() * v).trace().real(); }

double fidelity(const TwoByTwo& v, const TwoByTwo& target) {
  const double p = success_probability(v);
  if (!(p > 0.0)) throw UndefinedFidelity("fidelity: success probability is zero");
  return std::norm((v.adjoint() * target).trace()) / (4.0 * p);
}

TwoByTwo target_unitary(double theta, double lambda, double mu) {
  const double c = std::cos(theta / 2.0);
  const double s = std::sin(theta / 2.0);
  const cplx i(0.0, 1.0);
  TwoByTwo u;
  u << c, std::exp(i * lambda) * s, std::exp(i * mu) * s, -std::exp(i * (lambda + mu)) * c;
  return u;
}

double max_theta(double delta) {
  const double s = std::clamp(split_ratio(pi, delta), 0.0, 1.0);
  return 2.0 * std::asin(std::sqrt(s));
}

double alpha_for_theta(double theta, double delta) {
  const double top = max_theta(delta);
  if (!(theta >= 0.0) || theta > std::min(top + kThetaSnap, pi / 2.0 + 1e-12)) {
    throw OutOfRange("alpha_for_theta: theta must lie in [0, " + std::to_string(top) +
                     "] at depth " + std::to_string(delta));
  }
  if (theta >= top) return pi;
  const double target = std::pow(std::sin(theta / 2.0), 2);
  // split_ratio falls monotonically from its maximum at pi to zero at 2 pi
  double lo = pi;
  double hi = 2.0 * pi;
  for (int it = 0; it < 200 && hi - lo > 1e-15; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (split_ratio(mid, delta) > target) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

ProcessorConfig synthesize_gate(double theta, double lambda, double mu, double delta, const FrequencyLattice& lattice,
                                BinPair bins, const RingParams& ring) {
  auto cfg = beamsplitter_config(alpha_for_theta(theta, delta), delta, lattice, bins, ring);
  // Away from alpha = pi the bare splitter is U(theta, l0, m0) up to a global
  // phase; subtract those intrinsic phases so the request lands on target.
  const auto base = submatrix(compose_qfp(cfg), bins);
  const double l0 = std::arg(base(0, 1) * std::conj(base(0, 0)));
  const double m0 = std::arg(base(1, 0) * std::conj(base(0, 0)));
  const double l_eff = lambda - l0;
  const double m_eff = mu - m0;
  cfg.in_drive.phase -= l_eff;
  cfg.out_drive.phase += m_eff;
  for (auto& unit : cfg.ws.units) {
    const int l = lattice.nearest_bin(kSpeedOfLight / unit.channel_wavelength);
    unit.channel_phase += (l - bins.first) * (l_eff + m_eff);
  }
  return cfg;
}

Eigen::VectorXd simulate_output_spectrum(const ProcessorConfig& config, const Eigen::VectorXcd& input) {
  if (input.size() != static_cast<Eigen::Index>(config.lattice.size())) {
    throw InvalidArgument("simulate_output_spectrum: input size does not match the lattice");
  }
  const auto op = compose_qfp(config);
  return (op.entries * input).cwiseAbs2();
}

Eigen::VectorXcd bin_input(const FrequencyLattice& lattice,
                           const std::vector<std::pair<int, std::complex<double>>>& amplitudes) {
  Eigen::VectorXcd v = Eigen::VectorXcd::Zero(static_cast<Eigen::Index>(lattice.size()));
  for (const auto& [bin, a] : amplitudes) {
    if (!lattice.contains(bin)) throw InvalidArgument("bin_input: bin outside the lattice window");
    v(static_cast<Eigen::Index>(lattice.index(bin))) += a;
  }
  const double norm = v.norm();
  if (!(norm > 0.0)) throw InvalidArgument("bin_input: zero input");
  return v / norm;
}

SpectrumSet simulate_spectra(const ProcessorConfig& config, bool with_quadratures) {
  check_bins(config.lattice, config.computational_bins, "simulate_spectra");
  const auto op = compose_qfp(config);
  const auto [b0, b1] = config.computational_bins;
  auto spectrum = [&](double gamma, bool superposed, int only) {
    Eigen::VectorXcd in;
    if (superposed) {
      in = bin_input(config.lattice, {{b0, 1.0}, {b1, std::polar(1.0, gamma)}});
    } else {
      in = bin_input(config.lattice, {{only, 1.0}});
    }
    return Eigen::VectorXd((op.entries * in).cwiseAbs2());
  };
  SpectrumSet s{config.lattice, config.computational_bins, spectrum(0, false, b0), spectrum(0, false, b1),
                spectrum(0.0, true, 0), spectrum(pi, true, 0), std::nullopt, std::nullopt};
  if (with_quadratures) {
    s.gamma_half_pi = spectrum(pi / 2.0, true, 0);
    s.gamma_three_half_pi = spectrum(1.5 * pi, true, 0);
  }
  return s;
}

TwoByTwo fix_row_gauge(const TwoByTwo& v) {
  TwoByTwo out = v;
  for (int m = 0; m < 2; ++m) {
    const double a = std::abs(v(m, 0));
    if (a > 0.0) out.row(m) *= std::conj(v(m, 0)) / a;
  }
  return out;
}

Reconstruction reconstruct_submatrix(const SpectrumSet& sp, double tolerance) {
  const auto& lat = sp.lattice;
  const auto n = static_cast<Eigen::Index>(lat.size());
  for (const auto* vec : {&sp.input0, &sp.input1, &sp.gamma_0, &sp.gamma_pi}) {
    if (vec->size() != n) throw InvalidArgument("reconstruct_submatrix: spectrum size does not match the lattice");
  }
  if (sp.gamma_half_pi.has_value() != sp.gamma_three_half_pi.has_value()) {
    throw InvalidArgument("reconstruct_submatrix: quadrature spectra must come as a pair");
  }
  if (!lat.contains(sp.bins.first) || !lat.contains(sp.bins.second)) {
    throw InvalidArgument("reconstruct_submatrix: bins outside the lattice window");
  }
  const bool four = sp.gamma_half_pi.has_value();
  if (four && (sp.gamma_half_pi->size() != n || sp.gamma_three_half_pi->size() != n)) {
    throw InvalidArgument("reconstruct_submatrix: spectrum size does not match the lattice");
  }

  const int rows[2] = {sp.bins.first, sp.bins.second};
  Reconstruction rec;
  double phase[2] = {0.0, 0.0};
  double mag0[2];
  double mag1[2];
  for (int m = 0; m < 2; ++m) {
    const auto i = static_cast<Eigen::Index>(lat.index(rows[m]));
    mag0[m] = std::sqrt(std::max(sp.input0(i), 0.0));
    mag1[m] = std::sqrt(std::max(sp.input1(i), 0.0));
    const double ab = mag0[m] * mag1[m];
    // I(0) - I(pi) = 2 Re(V_m0 V_m1^*), I(pi/2) - I(3pi/2) = 2 Im(V_m0 V_m1^*)
    const double re = 0.5 * (sp.gamma_0(i) - sp.gamma_pi(i));
    if (ab <= 1e-300) {
      if (std::abs(re) > tolerance) {
        throw ReconstructionFailure("reconstruct_submatrix: interference without single-input signal", std::abs(re));
      }
      continue;
    }
    if (four) {
      const double im = 0.5 * ((*sp.gamma_half_pi)(i) - (*sp.gamma_three_half_pi)(i));
      phase[m] = std::atan2(-im, re);
      continue;
    }
    const double c = re / ab;
    if (std::abs(c) > 1.0 + tolerance) {
      throw ReconstructionFailure("reconstruct_submatrix: inconsistent interference term", std::abs(c) - 1.0);
    }
    const double cc = std::clamp(c, -1.0, 1.0);
    phase[m] = std::acos(cc);  // sign fixed below
    if (std::sin(phase[m]) > 1e-9) rec.sign_ambiguous = true;
  }
  if (!four) {
    // row 0 takes Im(V_01) >= 0; row 1 the sign that makes the columns orthogonal
    auto overlap = [&](double p1) {
      return std::abs(mag0[0] * mag1[0] * std::polar(1.0, phase[0]) + mag0[1] * mag1[1] * std::polar(1.0, p1));
    };
    if (overlap(-phase[1]) < overlap(phase[1])) phase[1] = -phase[1];
  }
  for (int m = 0; m < 2; ++m) {
    rec.v(m, 0) = mag0[m];
    rec.v(m, 1) = std::polar(mag1[m], phase[m]);
  }

  // residual against all supplied spectra on the two computational bins
  auto predicted = [&](int m, double gamma) {
    return 0.5 * std::norm(rec.v(m, 0) + std::polar(1.0, gamma) * rec.v(m, 1));
  };
  for (int m = 0; m < 2; ++m) {
    const auto i = static_cast<Eigen::Index>(lat.index(rows[m]));
    double r = std::max({std::abs(std::norm(rec.v(m, 0)) - sp.input0(i)),
                         std::abs(std::norm(rec.v(m, 1)) - sp.input1(i)),
                         std::abs(predicted(m, 0.0) - sp.gamma_0(i)), std::abs(predicted(m, pi) - sp.gamma_pi(i))});
    if (four) {
      r = std::max({r, std::abs(predicted(m, pi / 2.0) - (*sp.gamma_half_pi)(i)),
                    std::abs(predicted(m, 1.5 * pi) - (*sp.gamma_three_half_pi)(i))});
    }
    rec.residual = std::max(rec.residual, r);
  }
  return rec;
}

double normalized_success_probability(const ProcessorConfig& physical, LossNormalization mode) {
  if (physical.ws.model != WsModel::Physical) {
    throw InvalidArgument("normalized_success_probability: configuration must use the physical WS model");
  }
  const auto v = submatrix(compose_qfp(physical), physical.computational_bins);
  const auto ws = ws_operator(physical.ws.units, physical.lattice, WsModel::Physical);
  const double t0 = std::norm(ws.at(physical.computational_bins.first, physical.computational_bins.first));
  const double t1 = std::norm(ws.at(physical.computational_bins.second, physical.computational_bins.second));
  if (!(t0 > 0.0) || !(t1 > 0.0)) {
    throw InvalidArgument("normalized_success_probability: a computational bin is fully blocked");
  }
  if (mode == LossNormalization::Aggregate) return success_probability(v) / (0.5 * (t0 + t1));
  TwoByTwo scaled = v;
  scaled.col(0) /= std::sqrt(t0);
  scaled.col(1) /= std::sqrt(t1);
  return success_probability(scaled);
}

SinglePmBalance single_pm_balanced_splitting(const FrequencyLattice& lattice, BinPair bins) {
  check_bins(lattice, bins, "single_pm_balanced_splitting");
  const double f = lattice.spacing();
  auto imbalance = [&](double delta) {
    ProcessorConfig cfg{RfDrive{delta, 0.0, f, true}, RfDrive{0.0, 0.0, f, false}, WsSettings{}, lattice, bins};
    const auto v = submatrix(compose_qfp(cfg), bins);
    return std::norm(v(0, 0)) - std::norm(v(1, 0));
  };
  // coarse sweep to bracket the first crossing, then bisection
  double lo = 0.0;
  double hi = 0.0;
  double prev = imbalance(0.0);
  bool found = false;
  for (double d = 0.01; d <= 3.0 + 1e-12; d += 0.01) {
    const double cur = imbalance(d);
    if (prev > 0.0 && cur <= 0.0) {
      lo = d - 0.01;
      hi = d;
      found = true;
      break;
    }
    prev = cur;
  }
  if (!found) throw NumericalFailure("single_pm_balanced_splitting: no balanced depth below 3 rad");
  for (int it = 0; it < 100 && hi - lo > 1e-13; ++it) {
    const double mid = 0.5 * (lo + hi);
    (imbalance(mid) > 0.0 ? lo : hi) = mid;
  }
  const double delta = 0.5 * (lo + hi);
  ProcessorConfig cfg{RfDrive{delta, 0.0, f, true}, RfDrive{0.0, 0.0, f, false}, WsSettings{}, lattice, bins};
  return {delta, success_probability(submatrix(compose_qfp(cfg), bins))};
}

}  // namespace qfp
