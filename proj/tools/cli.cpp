#include "cli.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numbers>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <vector>

#include "CLI11.hpp"
#include "qfp/biphoton.hpp"
#include "qfp/calib.hpp"
#include "qfp/errors.hpp"
#include "qfp/parallel.hpp"
#include "qfp/processor.hpp"
#include "qfp/tomo.hpp"

namespace qfp::cli {

namespace {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;
namespace fs = std::filesystem;

constexpr double pi = std::numbers::pi;

// Strict view of one JSON object: every key must be consumed.
class Section {
 public:
  Section(const json* j, std::string name) : j_(j), name_(std::move(name)) {
    if (j_ != nullptr && !j_->is_object()) throw ConfigError(name_ + ": expected an object");
  }

  double number(const std::string& key, double def) {
    const json* v = take(key);
    if (v == nullptr) return def;
    if (!v->is_number()) throw ConfigError(path(key) + ": expected a number");
    const double x = v->get<double>();
    if (!std::isfinite(x)) throw ConfigError(path(key) + ": must be finite");
    return x;
  }

  int integer(const std::string& key, int def) {
    const json* v = take(key);
    if (v == nullptr) return def;
    if (!v->is_number_integer()) throw ConfigError(path(key) + ": expected an integer");
    return v->get<int>();
  }

  bool boolean(const std::string& key, bool def) {
    const json* v = take(key);
    if (v == nullptr) return def;
    if (!v->is_boolean()) throw ConfigError(path(key) + ": expected true or false");
    return v->get<bool>();
  }

  std::string choice(const std::string& key, const std::string& def, const std::set<std::string>& allowed) {
    const json* v = take(key);
    if (v == nullptr) return def;
    if (!v->is_string() || allowed.count(v->get<std::string>()) == 0) {
      std::string opts;
      for (const auto& a : allowed) opts += (opts.empty() ? "" : ", ") + a;
      throw ConfigError(path(key) + ": expected one of " + opts);
    }
    return v->get<std::string>();
  }

  std::vector<double> numbers(const std::string& key, std::vector<double> def) {
    const json* v = take(key);
    if (v == nullptr) return def;
    if (!v->is_array()) throw ConfigError(path(key) + ": expected an array of numbers");
    std::vector<double> out;
    for (const auto& e : *v) {
      if (!e.is_number() || !std::isfinite(e.get<double>())) {
        throw ConfigError(path(key) + ": expected an array of finite numbers");
      }
      out.push_back(e.get<double>());
    }
    return out;
  }

  BinPair bins(const std::string& key, BinPair def) {
    const json* v = take(key);
    if (v == nullptr) return def;
    if (!v->is_array() || v->size() != 2 || !(*v)[0].is_number_integer() || !(*v)[1].is_number_integer()) {
      throw ConfigError(path(key) + ": expected two integer bin labels");
    }
    return {(*v)[0].get<int>(), (*v)[1].get<int>()};
  }

  // Key handled elsewhere (nested blocks).
  void allow(const std::string& key) { used_.insert(key); }

  void finish() const {
    if (j_ == nullptr) return;
    for (const auto& [key, value] : j_->items()) {
      if (used_.count(key) == 0) throw ConfigError(path(key) + ": unknown field");
    }
  }

 private:
  const json* take(const std::string& key) {
    used_.insert(key);
    if (j_ == nullptr) return nullptr;
    const auto it = j_->find(key);
    return it == j_->end() ? nullptr : &*it;
  }
  std::string path(const std::string& key) const { return name_ + "." + key; }

  const json* j_;
  std::string name_;
  std::set<std::string> used_;
};

struct RunOptions {
  fs::path out_dir;
  std::uint64_t seed = 1;
  bool expected_value = false;
};

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.12g", x);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << text;
}

void write_csv(const fs::path& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows) {
  std::ostringstream s;
  for (std::size_t i = 0; i < header.size(); ++i) s << (i ? "," : "") << header[i];
  s << "\n";
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) s << (i ? "," : "") << fmt(row[i]);
    s << "\n";
  }
  write_text(path, s.str());
}

void write_json(const fs::path& path, const ojson& j) { write_text(path, j.dump(2) + "\n"); }

// Signal bins down the rows, idler bins across the columns.
void write_grid(const fs::path& path, const Eigen::MatrixXd& m, int first_bin) {
  std::vector<std::string> header{"signal\\idler"};
  for (Eigen::Index c = 0; c < m.cols(); ++c) header.push_back(std::to_string(first_bin + c));
  std::vector<std::vector<double>> rows;
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    std::vector<double> row{static_cast<double>(first_bin + r)};
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(row);
  }
  write_csv(path, header, rows);
}

ojson complex_matrix(const Eigen::MatrixXcd& m) {
  ojson rows = ojson::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    ojson row = ojson::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back({m(r, c).real(), m(r, c).imag()});
    rows.push_back(row);
  }
  return rows;
}

ojson real_matrix(const Eigen::MatrixXd& m) {
  ojson rows = ojson::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    ojson row = ojson::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(row);
  }
  return rows;
}

RingParams device_ring(const Device& d) {
  return make_ring(kSpeedOfLight / d.center_frequency_hz, d.ring_power_coupling, d.ring_loss_db_per_cm,
                   d.ring_radius_m, d.ring_effective_index);
}

FrequencyLattice qfp_lattice(const Device& d, double delta, BinPair bins) {
  const int reach = std::max(std::abs(bins.first), std::abs(bins.second)) + 2;
  return make_lattice(d.center_frequency_hz, d.qfp_bin_spacing_hz, default_half_width(delta) + reach);
}

CombSpec comb_spec(const Device& d) {
  return {d.comb_bins, d.comb_bin_spacing_hz, d.comb_offset_bins, d.pump_filter_fsr_hz, d.pump_filter_extinction_db};
}

void use_model(ProcessorConfig& cfg, const std::string& model) {
  cfg.ws.model = model == "physical" ? WsModel::Physical : WsModel::Ideal;
}

// ---------------------------------------------------------------- beamsplitter

ojson cmd_beamsplitter(Section& s, const Device& d, const RunOptions& opt) {
  const double delta = s.number("modulation_depth_rad", d.modulation_depth_rad);
  const double a_min = s.number("alpha_min_rad", pi);
  const double a_max = s.number("alpha_max_rad", 2.0 * pi);
  const int points = s.integer("alpha_points", 33);
  const auto bins = s.bins("computational_bins", {0, 1});
  const auto model = s.choice("ws_model", "ideal", {"ideal", "physical"});
  s.finish();
  if (points < 1) throw ConfigError("beamsplitter.alpha_points: must be at least 1");

  const auto lattice = qfp_lattice(d, delta, bins);
  const auto ring = device_ring(d);
  std::vector<double> alphas(static_cast<std::size_t>(points));
  for (int i = 0; i < points; ++i) {
    alphas[static_cast<std::size_t>(i)] = points == 1 ? a_min : a_min + (a_max - a_min) * i / (points - 1);
  }
  std::vector<std::vector<double>> rows(alphas.size());
  parallel_for(alphas.size(), [&](std::size_t i) {
    const double a = alphas[i];
    auto cfg = beamsplitter_config(a, delta, lattice, bins, ring);
    use_model(cfg, model);
    const auto v = submatrix(compose_qfp(cfg), bins);
    const auto rt = rt_closed_form(a, delta);
    const double r = std::norm(v(0, 0));
    const double t = std::norm(v(1, 0));
    const double theta = 2.0 * std::asin(std::sqrt(std::clamp(t / (r + t), 0.0, 1.0)));
    std::vector<double> row{a, rt.reflectivity, rt.transmissivity, r, t, success_probability(v),
                            fidelity(v, target_unitary(theta, 0.0, 0.0))};
    if (model == "physical") row.push_back(normalized_success_probability(cfg, LossNormalization::Aggregate));
    rows[i] = row;
  });
  std::vector<std::string> header{"alpha_rad", "R_closed", "T_closed", "R_matrix", "T_matrix", "P", "F"};
  if (model == "physical") header.push_back("P_loss_normalized");
  write_csv(opt.out_dir / "beamsplitter.csv", header, rows);

  double min_p = 1.0;
  for (const auto& row : rows) min_p = std::min(min_p, row[5]);
  const auto rt_pi = rt_closed_form(pi, delta);
  ojson j;
  j["modulation_depth_rad"] = delta;
  j["ws_model"] = model;
  j["jbar"] = jbar(delta);
  j["R_closed_at_pi"] = rt_pi.reflectivity;
  j["T_closed_at_pi"] = rt_pi.transmissivity;
  j["min_success_probability"] = min_p;
  j["points"] = points;
  write_json(opt.out_dir / "beamsplitter.json", j);
  return j;
}

// ------------------------------------------------------------------------ gate

struct GateRequest {
  bool identity = false;
  double theta = pi / 2.0;
  double lambda = 0.0;
  double mu = 0.0;
};

GateRequest read_gate(Section& s) {
  GateRequest g;
  g.identity = s.boolean("identity", false);
  g.theta = s.number("theta_rad", pi / 2.0);
  g.lambda = s.number("lambda_rad", 0.0);
  g.mu = s.number("mu_rad", 0.0);
  return g;
}

ProcessorConfig gate_config(const GateRequest& g, double delta, const FrequencyLattice& lattice, BinPair bins,
                            const RingParams& ring) {
  if (g.identity) return beamsplitter_config(0.0, delta, lattice, bins, ring);
  return synthesize_gate(g.theta, g.lambda, g.mu, delta, lattice, bins, ring);
}

ojson matrix_report(const TwoByTwo& v) {
  ojson j;
  j["entries"] = complex_matrix(v);
  Eigen::Matrix2d mag = v.cwiseAbs2();
  Eigen::Matrix2d phase;
  for (int r = 0; r < 2; ++r) {
    for (int c = 0; c < 2; ++c) phase(r, c) = std::arg(v(r, c));
  }
  j["squared_magnitude"] = real_matrix(mag);
  j["phase_rad"] = real_matrix(phase);
  return j;
}

void write_spectra(const fs::path& path, const SpectrumSet& sp, int show) {
  std::vector<std::string> header{"bin", "input_bin0", "input_bin1", "gamma_0", "gamma_pi"};
  if (sp.gamma_half_pi) {
    header.push_back("gamma_half_pi");
    header.push_back("gamma_three_half_pi");
  }
  std::vector<std::vector<double>> rows;
  for (int l = sp.bins.first - show; l <= sp.bins.second + show; ++l) {
    if (!sp.lattice.contains(l)) continue;
    const auto i = static_cast<Eigen::Index>(sp.lattice.index(l));
    std::vector<double> row{static_cast<double>(l), sp.input0(i), sp.input1(i), sp.gamma_0(i), sp.gamma_pi(i)};
    if (sp.gamma_half_pi) {
      row.push_back((*sp.gamma_half_pi)(i));
      row.push_back((*sp.gamma_three_half_pi)(i));
    }
    rows.push_back(row);
  }
  write_csv(path, header, rows);
}

ojson cmd_gate(Section& s, const Device& d, const RunOptions& opt) {
  const auto g = read_gate(s);
  const double delta = s.number("modulation_depth_rad", d.modulation_depth_rad);
  const auto bins = s.bins("computational_bins", {0, 1});
  const auto model = s.choice("ws_model", "ideal", {"ideal", "physical"});
  const auto protocol = s.choice("reconstruction", "four_gamma", {"two_gamma", "four_gamma"});
  s.finish();

  const auto lattice = qfp_lattice(d, delta, bins);
  auto cfg = gate_config(g, delta, lattice, bins, device_ring(d));
  use_model(cfg, model);
  const auto v = submatrix(compose_qfp(cfg), bins);
  const TwoByTwo target = g.identity ? TwoByTwo(TwoByTwo::Identity()) : target_unitary(g.theta, g.lambda, g.mu);
  const auto spectra = simulate_spectra(cfg, protocol == "four_gamma");
  const auto rec = reconstruct_submatrix(spectra);
  write_spectra(opt.out_dir / "gate_spectra.csv", spectra, 3);

  ojson j;
  j["target"] = g.identity ? ojson("identity")
                           : ojson({{"theta_rad", g.theta}, {"lambda_rad", g.lambda}, {"mu_rad", g.mu}});
  j["modulation_depth_rad"] = delta;
  j["ws_model"] = model;
  if (!g.identity) j["alpha_rad"] = alpha_for_theta(g.theta, delta);
  j["in_rf_phase_rad"] = cfg.in_drive.phase;
  j["out_rf_phase_rad"] = cfg.out_drive.phase;
  ojson ws = ojson::array();
  for (const auto& u : cfg.ws.units) ws.push_back(u.channel_phase);
  j["ws_channel_phases_rad"] = ws;
  j["V"] = matrix_report(v);
  j["success_probability"] = success_probability(v);
  j["fidelity"] = fidelity(v, target);
  j["reconstruction"] = {{"protocol", protocol},
                         {"V", matrix_report(rec.v)},
                         {"residual", rec.residual},
                         {"sign_ambiguous", rec.sign_ambiguous},
                         {"fidelity_gauge_fixed_target", fidelity(rec.v, fix_row_gauge(target))}};
  write_json(opt.out_dir / "gate.json", j);
  return j;
}

// -------------------------------------------------------------------- spectrum

ojson cmd_spectrum(Section& s, const Device& d, const RunOptions& opt) {
  const double delta = s.number("modulation_depth_rad", d.modulation_depth_rad);
  const double alpha = s.number("alpha_rad", pi);
  const auto bins = s.bins("computational_bins", {2, 3});
  const auto gammas = s.numbers("gammas_rad", {0.0, pi});
  const int show = s.integer("display_bins_beyond", 4);
  const auto model = s.choice("ws_model", "ideal", {"ideal", "physical"});
  s.finish();
  if (show < 0) throw ConfigError("spectrum.display_bins_beyond: must be non-negative");

  const auto lattice = qfp_lattice(d, delta, bins);
  auto cfg = beamsplitter_config(alpha, delta, lattice, bins, device_ring(d));
  use_model(cfg, model);
  std::vector<Eigen::VectorXd> cols;
  std::vector<std::string> header{"bin", "input_bin0", "input_bin1"};
  cols.push_back(simulate_output_spectrum(cfg, bin_input(lattice, {{bins.first, 1.0}})));
  cols.push_back(simulate_output_spectrum(cfg, bin_input(lattice, {{bins.second, 1.0}})));
  for (double gm : gammas) {
    header.push_back("superposition_gamma_" + fmt(gm));
    cols.push_back(simulate_output_spectrum(cfg, bin_input(lattice, {{bins.first, 1.0}, {bins.second, std::polar(1.0, gm)}})));
  }
  std::vector<std::vector<double>> rows;
  for (int l = bins.first - show; l <= bins.second + show; ++l) {
    const auto i = static_cast<Eigen::Index>(lattice.index(l));
    std::vector<double> row{static_cast<double>(l)};
    for (const auto& c : cols) row.push_back(c(i));
    rows.push_back(row);
  }
  write_csv(opt.out_dir / "spectrum.csv", header, rows);

  // power left in the computational pair versus the strongest other bin
  double worst_ratio = std::numeric_limits<double>::infinity();
  for (const auto& c : cols) {
    const double in_pair = std::max(c(static_cast<Eigen::Index>(lattice.index(bins.first))),
                                    c(static_cast<Eigen::Index>(lattice.index(bins.second))));
    double outside = 0.0;
    for (int l = lattice.l_min(); l <= lattice.l_max(); ++l) {
      if (l != bins.first && l != bins.second) outside = std::max(outside, c(static_cast<Eigen::Index>(lattice.index(l))));
    }
    worst_ratio = std::min(worst_ratio, outside > 0.0 ? in_pair / outside : std::numeric_limits<double>::infinity());
  }
  ojson j;
  j["alpha_rad"] = alpha;
  j["modulation_depth_rad"] = delta;
  j["computational_bins"] = {bins.first, bins.second};
  j["target_to_max_spurious_ratio"] = std::isfinite(worst_ratio) ? ojson(worst_ratio) : ojson(nullptr);
  write_json(opt.out_dir / "spectrum.json", j);
  return j;
}

// ----------------------------------------------------------------------- qwalk

Eigen::MatrixXd measured_jsi(const Eigen::MatrixXd& expected, double pairs, double car, std::uint64_t seed,
                             bool expected_value) {
  if (expected_value) return expected;
  const CountMatrix counts = poisson_counts(expected, pairs, car, seed);
  Eigen::MatrixXd m = counts.cast<double>();
  const double total = m.sum();
  if (!(total > 0.0)) throw NumericalFailure("qwalk: no coincidences drawn");
  return m / total;
}

ojson cmd_qwalk(Section& s, const Device& d, const RunOptions& opt) {
  const double delta = s.number("modulation_depth_rad", 0.8);
  const double jitter = s.number("planted_phase_jitter_rad", 0.1);
  const double pairs = s.number("total_pairs", 1e6);
  const double car = s.number("car", d.car);
  const bool retrieve = s.boolean("retrieve_phases", true);
  const auto norm = s.choice("jsi_normalization", "max", {"max", "integral"});
  s.finish();
  if (jitter < 0.0) throw ConfigError("qwalk.planted_phase_jitter_rad: must be non-negative");

  const auto spec = comb_spec(d);
  const auto comb = comb_state(spec, d.pump_filter_alignment_rad);
  std::mt19937_64 rng(opt.seed);
  std::uniform_real_distribution<double> uni(-jitter, jitter);
  std::vector<double> planted(static_cast<std::size_t>(comb.amplitudes.size()), 0.0);
  for (std::size_t l = 1; l < planted.size(); ++l) planted[l] = jitter > 0.0 ? uni(rng) : 0.0;
  const auto source = with_phases(comb, planted);

  WalkSetup initial;
  initial.delta = 0.0;
  initial.spacing = spec.spacing;
  WalkSetup correlated = initial;
  correlated.delta = delta;
  WalkSetup anticorrelated = correlated;
  anticorrelated.idler_phases = kAnticorrelatedPattern;

  const WalkSetup* setups[3] = {&initial, &correlated, &anticorrelated};
  const char* names[3] = {"initial", "correlated", "anticorrelated"};
  ojson walks;
  Eigen::MatrixXd measured[3];
  for (int k = 0; k < 3; ++k) {
    const auto simulated = walk_jsi(comb, *setups[k]);
    measured[k] = measured_jsi(walk_jsi(source, *setups[k]), pairs, car, opt.seed + 1 + static_cast<std::uint64_t>(k),
                               opt.expected_value);
    Eigen::MatrixXd out = measured[k];
    if (norm == "max") out /= out.maxCoeff();
    write_grid(opt.out_dir / (std::string("jsi_") + names[k] + ".csv"), out, initial.measured.first);
    walks[names[k]] = {{"diagonal_weight", diagonal_weight(measured[k])},
                       {"fidelity_vs_flat_phase_simulation", jsi_fidelity(measured[k], simulated)}};
  }

  ojson j;
  j["modulation_depth_rad"] = delta;
  j["jsi_normalization"] = norm;
  j["measured_bins"] = {initial.measured.first, initial.measured.last};
  j["mode"] = opt.expected_value ? "expected_value" : "poisson";
  j["planted_phases_rad"] = planted;
  j["walks"] = walks;
  if (retrieve) {
    // magnitudes from the measured initial diagonal, extrapolated to the outer bins
    std::vector<double> diag;
    for (Eigen::Index i = 0; i < measured[0].rows(); ++i) diag.push_back(std::sqrt(measured[0](i, i)));
    const auto env = extrapolate_envelope(spec, diag, initial.measured.first);
    RetrievalOptions ro;
    ro.seed = opt.seed;
    const auto res = retrieve_phases(measured[2], env.magnitudes, anticorrelated, ro);
    j["retrieval"] = {{"walk", "anticorrelated"},
                      {"envelope_pf_alignment_rad", env.pf_alignment},
                      {"magnitudes", env.magnitudes},
                      {"phases_rad", res.phases},
                      {"fidelity", res.fidelity},
                      {"starts_converged", res.starts_converged}};
  }
  write_json(opt.out_dir / "qwalk.json", j);
  return j;
}

// ------------------------------------------------------------------ tomography

void write_rho_tables(const fs::path& dir, const DensityMatrix& rho) {
  const std::vector<std::string> header{"basis", "00", "01", "10", "11"};
  std::vector<std::vector<double>> mag;
  std::vector<std::vector<double>> phase;
  for (int r = 0; r < 4; ++r) {
    std::vector<double> m{static_cast<double>((r / 2) * 10 + r % 2)};
    std::vector<double> p = m;
    for (int c = 0; c < 4; ++c) {
      m.push_back(std::abs(rho(r, c)));
      p.push_back(std::abs(rho(r, c)) > 1e-12 ? std::arg(rho(r, c)) : 0.0);
    }
    mag.push_back(m);
    phase.push_back(p);
  }
  write_csv(dir / "rho_magnitude.csv", header, mag);
  write_csv(dir / "rho_phase.csv", header, phase);
}

ojson cmd_tomography(Section& s, const Device& d, const RunOptions& opt) {
  const bool noiseless = s.boolean("noiseless", false);
  const double suppression = s.number("guard_suppression_db", d.guard_suppression_db);
  const double car_in = s.number("car", d.car);
  const double shots = s.number("shots_per_setting", 1e4);
  const int fringe_points = s.integer("fringe_points", 16);
  const double fringe_shots = s.number("fringe_shots_per_point", 2e4);
  const auto kept = s.bins("kept_bins", {2, 3});
  const double delta_meas = s.number("measurement_depth_rad", d.measurement_depth_rad);
  s.finish();
  if (fringe_points < 8) throw ConfigError("tomography.fringe_points: need at least 8");

  const auto comb = comb_state(comb_spec(d), d.pump_filter_alignment_rad);
  const double inf = std::numeric_limits<double>::infinity();
  const double car = noiseless ? inf : car_in;
  const DensityMatrix truth = carve_bell_state(comb, kept, noiseless ? inf : suppression);
  const auto records = simulate_counts(truth, canonical_settings(delta_meas), shots, car, opt.seed, opt.expected_value);
  const auto mle = mle_reconstruct(records, MleOptions{3, opt.seed});

  std::vector<double> grid;
  for (int k = 0; k < fringe_points; ++k) grid.push_back(2.0 * pi * k / fringe_points);
  const auto curve = bell_fringe(truth, grid, delta_meas, car);
  std::mt19937_64 rng(opt.seed + 1);
  std::vector<std::vector<double>> rows;
  std::vector<double> counts;
  for (std::size_t k = 0; k < grid.size(); ++k) {
    const double mean = fringe_shots * curve.coincidences[k];
    double c = mean;
    double ss = fringe_shots * curve.singles_signal[k];
    double si = fringe_shots * curve.singles_idler[k];
    if (!opt.expected_value) {
      c = static_cast<double>(std::poisson_distribution<std::int64_t>(mean)(rng));
      ss = static_cast<double>(std::poisson_distribution<std::int64_t>(ss)(rng));
      si = static_cast<double>(std::poisson_distribution<std::int64_t>(si)(rng));
    }
    counts.push_back(c);
    rows.push_back({grid[k], c, ss, si});
  }
  write_csv(opt.out_dir / "fringe.csv", {"dphi_rad", "coincidences", "singles_signal", "singles_idler"}, rows);
  const auto vis = fit_visibility(grid, counts, opt.expected_value ? FitWeights::Residual : FitWeights::Poisson);

  write_rho_tables(opt.out_dir, mle.rho);
  write_json(opt.out_dir / "rho.json", {{"basis", {"00", "01", "10", "11"}}, {"rho", complex_matrix(mle.rho)}});

  ojson rec = ojson::array();
  for (const auto& r : records) rec.push_back(r.counts);
  ojson j;
  j["mode"] = opt.expected_value ? "expected_value" : "poisson";
  j["noiseless"] = noiseless;
  j["guard_suppression_db"] = noiseless ? ojson(nullptr) : ojson(suppression);
  j["car"] = noiseless ? ojson(nullptr) : ojson(car_in);
  j["shots_per_setting"] = shots;
  j["setting_counts"] = rec;
  j["fidelity_phi_plus"] = state_fidelity(mle.rho, bell_phi_plus());
  j["purity"] = purity(mle.rho);
  j["true_state"] = {{"fidelity_phi_plus", state_fidelity(truth, bell_phi_plus())}, {"purity", purity(truth)}};
  j["log_likelihood"] = mle.log_likelihood;
  j["optimizer_iterations"] = mle.iterations;
  j["ill_conditioned"] = mle.ill_conditioned;
  j["visibility"] = {{"value", vis.visibility},
                     {"sigma", vis.sigma_visibility},
                     {"phase_offset_rad", vis.phase_offset},
                     {"baseline", vis.baseline},
                     {"significance_above_bell_threshold", std::isfinite(vis.significance) ? ojson(vis.significance)
                                                                                          : ojson(nullptr)},
                     {"violates_bell", vis.violates_bell}};
  write_json(opt.out_dir / "tomography.json", j);
  return j;
}

// ------------------------------------------------------------------- calibrate

ojson cmd_calibrate(Section& s, const Device& d, const RunOptions& opt) {
  const double demux_lw = s.number("planted_demux_detuning_linewidths", 0.3);
  const double mux_lw = s.number("planted_mux_detuning_linewidths", -0.2);
  const double channel_phase = s.number("channel_phase_rad", 0.0);
  const double half_span = s.number("scan_half_span_linewidths", 2.0);
  const double step = s.number("scan_step_linewidths", 0.1);
  const double p2pi = s.number("power_2pi_w", 0.03);
  const double phi0 = s.number("phase_offset_rad", 0.4);
  const double p_max = s.number("power_max_w", 0.06);
  const int p_points = s.integer("power_points", 41);
  const double noise = s.number("noise_sigma", 0.0);
  s.finish();
  if (p_points < 2) throw ConfigError("calibrate.power_points: need at least 2");

  const double lambda = kSpeedOfLight / d.center_frequency_hz;
  const auto ring = device_ring(d);
  const double lw = linewidth_wavelength(ring);
  DitherConfig dither;
  dither.amplitude = d.dither_amplitude_linewidths * lw;
  dither.f_demux = d.dither_demux_hz;
  dither.f_mux = d.dither_mux_hz;
  dither.duration = d.dither_duration_s;
  dither.sample_rate = d.sample_rate_hz;
  dither.noise_sigma = opt.expected_value ? 0.0 : noise;
  dither.noise_seed = opt.seed;

  auto unit = make_phase_unit(lambda, ring, channel_phase);
  unit.demux_detuning = demux_lw * lw;
  unit.mux_detuning = mux_lw * lw;
  const auto axis = scan_axis(half_span * lw, step * lw);
  const auto scan = align_scan(unit, axis, axis, dither, lambda);
  std::vector<std::vector<double>> map_rows;
  for (std::size_t a = 0; a < scan.demux_shifts.size(); ++a) {
    for (std::size_t b = 0; b < scan.mux_shifts.size(); ++b) {
      map_rows.push_back({scan.demux_shifts[a] / lw, scan.mux_shifts[b] / lw,
                          scan.magnitude(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b))});
    }
  }
  write_csv(opt.out_dir / "scan_map.csv", {"demux_shift_linewidths", "mux_shift_linewidths", "magnitude"}, map_rows);

  auto aligned = unit;
  aligned.demux_detuning += scan.best_demux_shift;
  aligned.mux_detuning += scan.best_mux_shift;
  std::vector<double> powers;
  for (int k = 0; k < p_points; ++k) powers.push_back(p_max * k / (p_points - 1));
  const auto traces = simulate_phase_sweep(aligned, dither, lambda, powers, p2pi, phi0);
  const int polarity = fringe_polarity(aligned, dither, lambda);
  const auto cal = fit_phase_curve(powers, traces, dither, polarity);
  std::vector<std::vector<double>> sweep_rows;
  for (std::size_t k = 0; k < powers.size(); ++k) {
    const double fitted = cal.fringe_offset + cal.amplitude * std::cos(2.0 * pi * powers[k] / cal.power_2pi +
                                                                       (polarity > 0 ? cal.phase_offset
                                                                                     : cal.phase_offset + pi));
    sweep_rows.push_back({powers[k], harmonic_component(traces[k], dither.phase_tone()).real(), fitted});
  }
  write_csv(opt.out_dir / "phase_sweep.csv", {"power_w", "re_phase_tone", "fit"}, sweep_rows);

  ojson j;
  j["linewidth_m"] = lw;
  j["loaded_q"] = loaded_q(ring);
  j["dither_amplitude_m"] = dither.amplitude;
  j["planted_detuning_linewidths"] = {{"demux", demux_lw}, {"mux", mux_lw}};
  j["recovered_detuning_linewidths"] = {{"demux", -scan.best_demux_shift / lw}, {"mux", -scan.best_mux_shift / lw}};
  j["scan_step_linewidths"] = step;
  j["fringe_polarity"] = polarity;
  j["phase_calibration"] = {{"power_2pi_w", cal.power_2pi},
                            {"phase_offset_rad", cal.phase_offset},
                            {"amplitude", cal.amplitude},
                            {"r_squared", cal.r_squared},
                            {"residual_rms", cal.residual_rms},
                            {"sigma_power_2pi_w", std::sqrt(std::max(cal.covariance(1, 1), 0.0))}};
  j["planted_phase"] = {{"power_2pi_w", p2pi}, {"phase_offset_rad", wrap_phase(phi0)}};
  write_json(opt.out_dir / "calibration.json", j);
  return j;
}

using Command = std::function<ojson(Section&, const Device&, const RunOptions&)>;

int execute(const std::string& name, const Command& command, const std::string& config_path, const std::string& out_dir,
            std::optional<std::uint64_t> seed, bool expected_value, std::ostream& out, std::ostream& err) {
  try {
    json root;
    {
      std::ifstream f(config_path);
      if (!f) throw ConfigError("cannot open config file " + config_path);
      try {
        root = json::parse(f);
      } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
      }
    }
    Section top(&root, "config");
    const int version = top.integer("schema_version", -1);
    if (version != kSchemaVersion) {
      throw ConfigError("config.schema_version: expected " + std::to_string(kSchemaVersion));
    }
    const auto kind = top.choice("experiment", name,
                                 {"beamsplitter", "gate", "spectrum", "qwalk", "tomography", "calibrate"});
    if (kind != name) throw ConfigError("config.experiment is '" + kind + "' but the subcommand is '" + name + "'");
    const int config_seed = top.integer("seed", 1);
    const auto dev_it = root.find("device");
    const Device device = parse_device(dev_it == root.end() ? json(nullptr) : *dev_it);
    top.allow("device");
    const auto block_it = root.find(name);
    top.allow(name);
    top.finish();
    if (config_seed < 0) throw ConfigError("config.seed: must be non-negative");

    RunOptions opt;
    opt.out_dir = out_dir;
    opt.seed = seed.value_or(static_cast<std::uint64_t>(config_seed));
    opt.expected_value = expected_value;
    fs::create_directories(opt.out_dir);

    Section block(block_it == root.end() ? nullptr : &*block_it, name);
    const ojson summary = command(block, device, opt);
    ojson run;
    run["experiment"] = name;
    run["schema_version"] = kSchemaVersion;
    run["seed"] = opt.seed;
    run["expected_value"] = opt.expected_value;
    run["device"] = device_to_json(device);
    run["config"] = block_it == root.end() ? ojson::object() : ojson::parse(block_it->dump());
    write_json(opt.out_dir / "run.json", run);
    out << summary.dump(2) << "\n";
    return kExitOk;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const InvalidArgument& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const OutOfRange& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const NumericalFailure& e) {
    err << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const fs::filesystem_error& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  }
}

}  // namespace

Device parse_device(const json& block) {
  if (block.is_null()) return {};
  Section s(&block, "device");
  Device d;
  d.center_frequency_hz = s.number("center_frequency_hz", d.center_frequency_hz);
  d.qfp_bin_spacing_hz = s.number("qfp_bin_spacing_hz", d.qfp_bin_spacing_hz);
  d.comb_bin_spacing_hz = s.number("comb_bin_spacing_hz", d.comb_bin_spacing_hz);
  d.modulation_depth_rad = s.number("modulation_depth_rad", d.modulation_depth_rad);
  d.ring_power_coupling = s.number("ring_power_coupling", d.ring_power_coupling);
  d.ring_loss_db_per_cm = s.number("ring_loss_db_per_cm", d.ring_loss_db_per_cm);
  d.ring_radius_m = s.number("ring_radius_m", d.ring_radius_m);
  d.ring_effective_index = s.number("ring_effective_index", d.ring_effective_index);
  d.pump_filter_fsr_hz = s.number("pump_filter_fsr_hz", d.pump_filter_fsr_hz);
  d.pump_filter_extinction_db = s.number("pump_filter_extinction_db", d.pump_filter_extinction_db);
  d.pump_filter_alignment_rad = s.number("pump_filter_alignment_rad", d.pump_filter_alignment_rad);
  d.comb_bins = s.integer("comb_bins", d.comb_bins);
  d.comb_offset_bins = s.integer("comb_offset_bins", d.comb_offset_bins);
  d.dither_demux_hz = s.number("dither_demux_hz", d.dither_demux_hz);
  d.dither_mux_hz = s.number("dither_mux_hz", d.dither_mux_hz);
  d.dither_amplitude_linewidths = s.number("dither_amplitude_linewidths", d.dither_amplitude_linewidths);
  d.dither_duration_s = s.number("dither_duration_s", d.dither_duration_s);
  d.sample_rate_hz = s.number("sample_rate_hz", d.sample_rate_hz);
  d.car = s.number("car", d.car);
  d.guard_suppression_db = s.number("guard_suppression_db", d.guard_suppression_db);
  d.measurement_depth_rad = s.number("measurement_depth_rad", d.measurement_depth_rad);
  s.finish();
  if (!(d.center_frequency_hz > 0.0) || !(d.qfp_bin_spacing_hz > 0.0) || !(d.comb_bin_spacing_hz > 0.0)) {
    throw ConfigError("device: frequencies and spacings must be positive");
  }
  if (!(d.modulation_depth_rad >= 0.0) || !(d.measurement_depth_rad >= 0.0)) {
    throw ConfigError("device: modulation depths must be non-negative");
  }
  if (!(d.car > 0.0)) throw ConfigError("device.car: must be positive");
  return d;
}

ojson device_to_json(const Device& d) {
  ojson j;
  j["center_frequency_hz"] = d.center_frequency_hz;
  j["qfp_bin_spacing_hz"] = d.qfp_bin_spacing_hz;
  j["comb_bin_spacing_hz"] = d.comb_bin_spacing_hz;
  j["modulation_depth_rad"] = d.modulation_depth_rad;
  j["ring_power_coupling"] = d.ring_power_coupling;
  j["ring_loss_db_per_cm"] = d.ring_loss_db_per_cm;
  j["ring_radius_m"] = d.ring_radius_m;
  j["ring_effective_index"] = d.ring_effective_index;
  j["pump_filter_fsr_hz"] = d.pump_filter_fsr_hz;
  j["pump_filter_extinction_db"] = d.pump_filter_extinction_db;
  j["pump_filter_alignment_rad"] = d.pump_filter_alignment_rad;
  j["comb_bins"] = d.comb_bins;
  j["comb_offset_bins"] = d.comb_offset_bins;
  j["dither_demux_hz"] = d.dither_demux_hz;
  j["dither_mux_hz"] = d.dither_mux_hz;
  j["dither_amplitude_linewidths"] = d.dither_amplitude_linewidths;
  j["dither_duration_s"] = d.dither_duration_s;
  j["sample_rate_hz"] = d.sample_rate_hz;
  j["car"] = d.car;
  j["guard_suppression_db"] = d.guard_suppression_db;
  j["measurement_depth_rad"] = d.measurement_depth_rad;
  return j;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Frequency-bin quantum processor simulator"};
  app.require_subcommand(1);
  struct Args {
    std::string config;
    std::string out;
    std::optional<std::uint64_t> seed;
    bool expected_value = false;
  };
  const std::vector<std::pair<std::string, Command>> commands = {
      {"beamsplitter", cmd_beamsplitter}, {"gate", cmd_gate},         {"spectrum", cmd_spectrum},
      {"qwalk", cmd_qwalk},               {"tomography", cmd_tomography}, {"calibrate", cmd_calibrate}};
  std::map<std::string, Args> args;
  for (const auto& [name, cmd] : commands) {
    auto* sub = app.add_subcommand(name);
    auto& a = args[name];
    sub->add_option("--config", a.config, "JSON run configuration")->required();
    sub->add_option("--out", a.out, "output directory")->required();
    sub->add_option("--seed", a.seed, "random seed (overrides the config)");
    sub->add_flag("--expected-value", a.expected_value, "use expected counts instead of Poisson draws");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }
  for (const auto& [name, cmd] : commands) {
    if (app.got_subcommand(name)) {
      const auto& a = args[name];
      return execute(name, cmd, a.config, a.out, a.seed, a.expected_value, out, err);
    }
  }
  return kExitConfig;
}

}  // namespace qfp::cli
