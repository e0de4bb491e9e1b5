#include "qfp/rings.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <string>

#include "qfp/errors.hpp"

namespace qfp {

using std::numbers::pi;

double RingParams::circumference() const { return 2.0 * pi * radius; }

double RingParams::self_coupling() const { return std::sqrt(1.0 - power_coupling); }

RingParams RingParams::with_resonance(double wavelength) const {
  RingParams r = *this;
  r.resonance_wavelength = wavelength;
  return r;
}

double round_trip_amplitude(double loss_db_per_cm, double radius) {
  const double length_cm = 2.0 * pi * radius * 100.0;
  return std::pow(10.0, -loss_db_per_cm * length_cm / 20.0);
}

RingParams make_ring(double resonance_wavelength, double power_coupling, double loss_db_per_cm,
                     double radius, double effective_index) {
  if (!(power_coupling > 0.0 && power_coupling < 1.0)) {
    throw InvalidArgument("make_ring: power coupling must lie in (0, 1)");
  }
  if (!(radius > 0.0) || !(effective_index > 0.0) || !(resonance_wavelength > 0.0)) {
    throw InvalidArgument("make_ring: radius, index and wavelength must be positive");
  }
  if (loss_db_per_cm < 0.0) throw InvalidArgument("make_ring: negative propagation loss");
  RingParams r;
  r.resonance_wavelength = resonance_wavelength;
  r.power_coupling = power_coupling;
  r.round_trip_loss = round_trip_amplitude(loss_db_per_cm, radius);
  r.radius = radius;
  r.effective_index = effective_index;
  return r;
}

RingParams default_ws_ring(double resonance_wavelength) {
  return make_ring(resonance_wavelength, 0.023, 1.2, 50e-6, 2.8);
}

double round_trip_phase(double probe_wavelength, const RingParams& ring) {
  return 2.0 * pi * ring.effective_index * ring.circumference() *
         (1.0 / probe_wavelength - 1.0 / ring.resonance_wavelength);
}

std::complex<double> ring_through(double probe_wavelength, const RingParams& ring) {
  const double tc = ring.self_coupling();
  const double a = ring.round_trip_loss;
  const auto e = std::polar(1.0, round_trip_phase(probe_wavelength, ring));
  return (tc - tc * a * e) / (1.0 - tc * tc * a * e);
}

std::complex<double> ring_drop(double probe_wavelength, const RingParams& ring) {
  const double tc = ring.self_coupling();
  const double a = ring.round_trip_loss;
  const double phi = round_trip_phase(probe_wavelength, ring);
  const auto e = std::polar(1.0, phi);
  return -ring.power_coupling * std::sqrt(a) * std::polar(1.0, 0.5 * phi) / (1.0 - tc * tc * a * e);
}

double free_spectral_range_wavelength(const RingParams& ring) {
  const double lambda = ring.resonance_wavelength;
  return lambda * lambda / (ring.effective_index * ring.circumference());
}

double linewidth_wavelength(const RingParams& ring) {
  // Both ports share the denominator |1 - r e^{i phi}|^2; its half-maximum
  // points give the full width in round-trip phase.
  const double r = ring.self_coupling() * ring.self_coupling() * ring.round_trip_loss;
  const double c = (4.0 * r - 1.0 - r * r) / (2.0 * r);
  const double dphi = 2.0 * std::acos(std::clamp(c, -1.0, 1.0));
  return dphi / (2.0 * pi) * free_spectral_range_wavelength(ring);
}

double loaded_q(const RingParams& ring) { return ring.resonance_wavelength / linewidth_wavelength(ring); }

WsUnitConfig make_phase_unit(double channel_wavelength, const RingParams& ring, double phase) {
  WsUnitConfig u;
  u.channel_wavelength = channel_wavelength;
  u.demux = ring.with_resonance(channel_wavelength);
  u.mux = ring.with_resonance(channel_wavelength);
  u.channel_phase = phase;
  u.mode = WsMode::Phase;
  return u;
}

WsUnitConfig make_pass_unit(double channel_wavelength, const RingParams& ring) {
  auto u = make_phase_unit(channel_wavelength, ring, 0.0);
  u.mode = WsMode::Pass;
  const double park = kPassDetuningLinewidths * linewidth_wavelength(ring.with_resonance(channel_wavelength));
  u.demux_detuning = park;
  u.mux_detuning = park;
  return u;
}

WsUnitConfig make_stop_unit(double channel_wavelength, const RingParams& ring) {
  auto u = make_phase_unit(channel_wavelength, ring, 0.0);
  u.mode = WsMode::Stop;
  u.mux_detuning = kPassDetuningLinewidths * linewidth_wavelength(ring.with_resonance(channel_wavelength));
  return u;
}

std::complex<double> ws_unit_response(double probe_wavelength, const WsUnitConfig& unit) {
  const auto dr = unit.demux.with_resonance(unit.channel_wavelength + unit.demux_detuning);
  const auto mr = unit.mux.with_resonance(unit.channel_wavelength + unit.mux_detuning);
  const auto bus = ring_through(probe_wavelength, mr) * ring_through(probe_wavelength, dr);
  if (unit.mode == WsMode::Stop) return bus;
  return bus + ring_drop(probe_wavelength, mr) * std::polar(1.0, unit.channel_phase) *
                   ring_drop(probe_wavelength, dr);
}

namespace {

std::complex<double> ideal_entry(const WsUnitConfig& u) {
  switch (u.mode) {
    case WsMode::Phase:
      return std::polar(1.0, u.channel_phase);
    case WsMode::Pass:
      return 1.0;
    case WsMode::Stop:
      return 0.0;
  }
  return 1.0;
}

double held_phase(const WsUnitConfig& u) { return u.mode == WsMode::Phase ? u.channel_phase : 0.0; }

// Phase of an outer bin continuing the line through the two outermost
// channels on that side.
template <class It>
std::complex<double> extended_edge(It edge, It inner, int l) {
  const double p_edge = held_phase(*edge->second);
  if (edge->second->mode != WsMode::Phase || inner->second->mode != WsMode::Phase || inner == edge) {
    return std::polar(1.0, p_edge);
  }
  const double slope = (p_edge - held_phase(*inner->second)) / (edge->first - inner->first);
  return std::polar(1.0, p_edge + slope * (l - edge->first));
}

}  // namespace

ModeOperator ws_operator(const std::vector<WsUnitConfig>& units, const FrequencyLattice& lattice,
                         WsModel model, WsEdgePolicy edges) {
  std::map<int, const WsUnitConfig*> by_bin;
  for (const auto& u : units) {
    const double nu = kSpeedOfLight / u.channel_wavelength;
    const int bin = lattice.nearest_bin(nu);
    if (std::abs(nu - lattice.bin_frequency(bin)) > 0.25 * lattice.spacing()) {
      throw InvalidArgument("ws_operator: channel wavelength is not on a lattice bin");
    }
    if (!by_bin.emplace(bin, &u).second) {
      throw InvalidArgument("ws_operator: two channels map to bin " + std::to_string(bin));
    }
  }

  auto op = identity_operator(lattice, model == WsModel::Ideal ? "ws_ideal" : "ws_physical");
  for (int l = lattice.l_min(); l <= lattice.l_max(); ++l) {
    const auto i = static_cast<Eigen::Index>(lattice.index(l));
    std::complex<double> value = 1.0;
    if (model == WsModel::Physical) {
      const double lambda = lattice.bin_wavelength(l);
      for (const auto& u : units) value *= ws_unit_response(lambda, u);
    } else if (auto it = by_bin.find(l); it != by_bin.end()) {
      value = ideal_entry(*it->second);
    } else if (edges == WsEdgePolicy::ExtendEdges && !by_bin.empty()) {
      if (l < by_bin.begin()->first) value = extended_edge(by_bin.begin(), std::next(by_bin.begin()) == by_bin.end() ? by_bin.begin() : std::next(by_bin.begin()), l);
      if (l > by_bin.rbegin()->first) value = extended_edge(by_bin.rbegin(), std::next(by_bin.rbegin()) == by_bin.rend() ? by_bin.rbegin() : std::next(by_bin.rbegin()), l);
    }
    op.entries(i, i) = value;
  }
  return op;
}

double mzi_pump_filter(double probe_frequency, double fsr, double extinction_db, double phase_offset) {
  if (!(fsr > 0.0)) throw InvalidArgument("mzi_pump_filter: fsr must be positive");
  if (!(extinction_db > 0.0)) throw InvalidArgument("mzi_pump_filter: extinction must be positive");
  const double floor = std::pow(10.0, -extinction_db / 10.0);
  const double s = std::sin(pi * probe_frequency / fsr + phase_offset);
  return floor + (1.0 - floor) * s * s;
}

}  // namespace qfp
