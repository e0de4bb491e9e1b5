#include "qfp/biphoton.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "qfp/bessel.hpp"
#include "qfp/errors.hpp"
#include "qfp/optimize.hpp"
#include "qfp/parallel.hpp"
#include "qfp/rings.hpp"

namespace qfp {

namespace {

constexpr double pi = std::numbers::pi;
constexpr double kWalkCenterFrequency = 193.4e12;

Eigen::VectorXcd embed(const BiphotonState& state, const FrequencyLattice& lattice) {
  if (!lattice.contains(state.first_bin) || !lattice.contains(state.last_bin())) {
    throw InvalidArgument("biphoton: state bins fall outside the operator window");
  }
  Eigen::VectorXcd v = Eigen::VectorXcd::Zero(static_cast<Eigen::Index>(lattice.size()));
  v.segment(static_cast<Eigen::Index>(lattice.index(state.first_bin)), state.amplitudes.size()) = state.amplitudes;
  return v;
}

double wrap(double x) { return std::remainder(x, 2.0 * pi); }

// Walk operators built once and reused across many states.
struct WalkModel {
  FrequencyLattice lattice;
  Eigen::MatrixXcd signal;
  Eigen::MatrixXcd idler_t;  // transpose of the reversed idler operator
  Eigen::Index row0;
  Eigen::Index n;

  WalkModel(int first_bin, int last_bin, const WalkSetup& setup)
      : lattice(kWalkCenterFrequency, setup.spacing, first_bin - truncation_order(setup.delta) - 2,
                last_bin + truncation_order(setup.delta) + 2) {
    const auto op = eom_operator(RfDrive{setup.delta, setup.rf_phase, setup.spacing, true}, lattice);
    signal = op.entries;
    idler_t = reverse_frequency_axis(op).entries.transpose();
    if (!lattice.contains(setup.measured.first) || !lattice.contains(setup.measured.last) ||
        setup.measured.last < setup.measured.first) {
      throw InvalidArgument("walk: measured window outside the simulation window");
    }
    row0 = static_cast<Eigen::Index>(lattice.index(setup.measured.first));
    n = setup.measured.size();
  }

  Eigen::MatrixXd jsi(const BiphotonState& state) const {
    const Eigen::VectorXcd beta = embed(state, lattice);
    const Eigen::MatrixXcd a = signal * beta.asDiagonal() * idler_t;
    Eigen::MatrixXd j = a.block(row0, row0, n, n).cwiseAbs2();
    const double total = j.sum();
    if (!(total > 0.0)) throw InvalidArgument("walk: no weight in the measured window");
    return j / total;
  }
};

}  // namespace

std::vector<double> comb_envelope(const CombSpec& spec, double pf_alignment) {
  if (spec.n_bins < 2) throw InvalidArgument("comb_state: need at least two bins");
  if (!(spec.spacing > 0.0)) throw InvalidArgument("comb_state: spacing must be positive");
  std::vector<double> env(static_cast<std::size_t>(spec.n_bins), 1.0);
  if (!(spec.pf_fsr > 0.0)) return env;
  for (int l = 0; l < spec.n_bins; ++l) {
    const double detuning = (spec.offset_bins + l) * spec.spacing;
    const double ts = mzi_pump_filter(detuning, spec.pf_fsr, spec.pf_extinction_db, pf_alignment);
    const double ti = mzi_pump_filter(-detuning, spec.pf_fsr, spec.pf_extinction_db, pf_alignment);
    env[static_cast<std::size_t>(l)] = std::sqrt(ts * ti);
  }
  return env;
}

BiphotonState comb_state(const CombSpec& spec, double pf_alignment) {
  const auto env = comb_envelope(spec, pf_alignment);
  BiphotonState s;
  s.amplitudes = Eigen::VectorXcd(static_cast<Eigen::Index>(env.size()));
  for (std::size_t i = 0; i < env.size(); ++i) s.amplitudes(static_cast<Eigen::Index>(i)) = env[i];
  const double norm = s.amplitudes.norm();
  if (!(norm > 0.0)) throw InvalidArgument("comb_state: filter blocks every bin");
  s.amplitudes /= norm;
  return s;
}

EnvelopeFit extrapolate_envelope(const CombSpec& spec, const std::vector<double>& measured, int first_measured) {
  const int count = static_cast<int>(measured.size());
  if (count < 3) throw InvalidArgument("extrapolate_envelope: need at least three measured bins");
  if (first_measured < 0 || first_measured + count > spec.n_bins) {
    throw InvalidArgument("extrapolate_envelope: measured bins outside the comb");
  }
  auto residuals = [&](const Eigen::VectorXd& p) {
    const auto env = comb_envelope(spec, p(1));
    Eigen::VectorXd r(count);
    for (int k = 0; k < count; ++k) {
      r(k) = p(0) * env[static_cast<std::size_t>(first_measured + k)] - measured[static_cast<std::size_t>(k)];
    }
    return r;
  };
  const auto env0 = comb_envelope(spec, 0.0);
  Eigen::VectorXd start(2);
  start << measured.front() / std::max(env0[static_cast<std::size_t>(first_measured)], 1e-12), 0.0;
  const auto fit = opt::levenberg_marquardt(residuals, start);
  EnvelopeFit out;
  out.scale = fit.params(0);
  out.pf_alignment = fit.params(1);
  for (double e : comb_envelope(spec, out.pf_alignment)) out.magnitudes.push_back(out.scale * e);
  return out;
}

BiphotonState with_phases(const BiphotonState& state, const std::vector<double>& phases) {
  if (static_cast<Eigen::Index>(phases.size()) != state.amplitudes.size()) {
    throw InvalidArgument("with_phases: one phase per bin required");
  }
  BiphotonState out = state;
  for (std::size_t i = 0; i < phases.size(); ++i) {
    const auto k = static_cast<Eigen::Index>(i);
    out.amplitudes(k) = std::polar(std::abs(state.amplitudes(k)), phases[i]);
  }
  return out;
}

JointAmplitude apply_joint(const ModeOperator& op_signal, const ModeOperator& op_idler, const BiphotonState& state) {
  if (!(op_signal.lattice == op_idler.lattice)) throw InvalidArgument("apply_joint: operator windows differ");
  const Eigen::VectorXcd beta = embed(state, op_signal.lattice);
  const Eigen::MatrixXcd idler = reverse_frequency_axis(op_idler).entries;
  return {op_signal.lattice, op_signal.entries * beta.asDiagonal() * idler.transpose()};
}

BiphotonState ws_idler_phases(const BiphotonState& state, const std::array<double, 4>& phases, int first_channel) {
  BiphotonState out = state;
  for (int k = 0; k < 4; ++k) {
    const int idx = first_channel + k - state.first_bin;
    if (idx < 0 || idx >= out.amplitudes.size()) throw InvalidArgument("ws_idler_phases: channel outside the comb");
    out.amplitudes(idx) *= std::polar(1.0, phases[static_cast<std::size_t>(k)]);
  }
  return out;
}

JointAmplitude ws_idler_phases(const JointAmplitude& joint, const std::array<double, 4>& phases, int first_channel) {
  JointAmplitude out = joint;
  for (int k = 0; k < 4; ++k) {
    const int bin = first_channel + k;
    if (!joint.lattice.contains(bin)) throw InvalidArgument("ws_idler_phases: channel outside the window");
    out.a.col(static_cast<Eigen::Index>(joint.lattice.index(bin))) *= std::polar(1.0, phases[static_cast<std::size_t>(k)]);
  }
  return out;
}

Eigen::MatrixXd jsi(const JointAmplitude& joint, BinRange window, JsiNormalization norm) {
  if (window.last < window.first || !joint.lattice.contains(window.first) || !joint.lattice.contains(window.last)) {
    throw InvalidArgument("jsi: window outside the joint amplitude");
  }
  const auto i0 = static_cast<Eigen::Index>(joint.lattice.index(window.first));
  Eigen::MatrixXd j = joint.a.block(i0, i0, window.size(), window.size()).cwiseAbs2();
  const double scale = norm == JsiNormalization::Max ? j.maxCoeff() : j.sum();
  if (!(scale > 0.0)) throw InvalidArgument("jsi: window carries no weight");
  return j / scale;
}

double jsi_fidelity(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw InvalidArgument("jsi_fidelity: shape mismatch");
  const double na = a.norm();
  const double nb = b.norm();
  if (!(na > 0.0) || !(nb > 0.0)) throw InvalidArgument("jsi_fidelity: zero matrix");
  return std::clamp(a.cwiseProduct(b).sum() / (na * nb), 0.0, 1.0);
}

double diagonal_weight(const Eigen::MatrixXd& jsi_matrix) {
  if (jsi_matrix.rows() != jsi_matrix.cols()) throw InvalidArgument("diagonal_weight: JSI must be square");
  const double total = jsi_matrix.sum();
  if (!(total > 0.0)) throw InvalidArgument("diagonal_weight: zero JSI");
  return jsi_matrix.trace() / total;
}

JointAmplitude simulate_walk(const BiphotonState& state, const WalkSetup& setup) {
  const WalkModel model(state.first_bin, state.last_bin(), setup);
  const auto shaped = ws_idler_phases(state, setup.idler_phases, setup.first_channel);
  const Eigen::VectorXcd beta = embed(shaped, model.lattice);
  return {model.lattice, model.signal * beta.asDiagonal() * model.idler_t};
}

Eigen::MatrixXd walk_jsi(const BiphotonState& state, const WalkSetup& setup) {
  const WalkModel model(state.first_bin, state.last_bin(), setup);
  return model.jsi(ws_idler_phases(state, setup.idler_phases, setup.first_channel));
}

PhaseRetrieval retrieve_phases(const Eigen::MatrixXd& measured, const std::vector<double>& magnitudes,
                               const WalkSetup& setup, const RetrievalOptions& options) {
  const auto n = static_cast<int>(magnitudes.size());
  if (n < 2) throw InvalidArgument("retrieve_phases: need at least two bins");
  if (measured.rows() != setup.measured.size() || measured.cols() != setup.measured.size()) {
    throw InvalidArgument("retrieve_phases: measured JSI does not match the measured window");
  }
  BiphotonState base;
  base.amplitudes = Eigen::VectorXcd(n);
  for (int i = 0; i < n; ++i) base.amplitudes(i) = magnitudes[static_cast<std::size_t>(i)];
  const double norm = base.amplitudes.norm();
  if (!(norm > 0.0)) throw InvalidArgument("retrieve_phases: zero magnitudes");
  base.amplitudes /= norm;
  const WalkModel model(base.first_bin, base.last_bin(), setup);

  auto state_for = [&](const Eigen::VectorXd& x) {
    std::vector<double> ph(static_cast<std::size_t>(n), 0.0);
    for (int i = 1; i < n; ++i) ph[static_cast<std::size_t>(i)] = x(i - 1);
    return ws_idler_phases(with_phases(base, ph), setup.idler_phases, setup.first_channel);
  };
  auto objective = [&](const Eigen::VectorXd& x) { return 1.0 - jsi_fidelity(model.jsi(state_for(x)), measured); };
  const Eigen::MatrixXd target = measured / measured.norm();
  auto residuals = [&](const Eigen::VectorXd& x) {
    const Eigen::MatrixXd sim = model.jsi(state_for(x));
    const Eigen::MatrixXd diff = sim / sim.norm() - target;
    return Eigen::VectorXd(Eigen::Map<const Eigen::VectorXd>(diff.data(), diff.size()));
  };

  // start 0 is the flat-phase comb; the rest are uniform in (-pi, pi]
  std::vector<Eigen::VectorXd> starts{Eigen::VectorXd::Zero(n - 1)};
  std::mt19937_64 rng(options.seed);
  std::uniform_real_distribution<double> uni(-pi, pi);
  for (int s = 0; s < options.random_starts; ++s) {
    Eigen::VectorXd x(n - 1);
    for (int i = 0; i < n - 1; ++i) x(i) = uni(rng);
    starts.push_back(x);
  }
  std::vector<opt::MinimizeResult> runs(starts.size());
  parallel_for(starts.size(), [&](std::size_t i) {
    opt::NelderMeadOptions nm;
    nm.initial_step = 0.3;
    nm.f_tolerance = 0.1 * options.fidelity_tolerance;
    nm.x_tolerance = 1e-7;
    runs[i] = opt::nelder_mead(objective, starts[i], nm);
    // the simplex stalls in the narrow valleys of this landscape; finish with
    // least squares on the normalized JSI, whose squared norm is 2 (1 - F)
    const auto polish = opt::levenberg_marquardt(residuals, runs[i].x, 200);
    const double value = objective(polish.params);
    if (value < runs[i].value) {
      runs[i].x = polish.params;
      runs[i].value = value;
    }
  });

  PhaseRetrieval out;
  std::size_t best = 0;
  for (std::size_t i = 0; i < runs.size(); ++i) {
    if (runs[i].converged) ++out.starts_converged;
    if (runs[i].value < runs[best].value) best = i;
  }
  out.fidelity = 1.0 - runs[best].value;
  if (out.starts_converged == 0) {
    throw RetrievalFailure("retrieve_phases: no start converged", out.fidelity);
  }
  out.phases.assign(static_cast<std::size_t>(n), 0.0);
  for (int i = 1; i < n; ++i) out.phases[static_cast<std::size_t>(i)] = wrap(runs[best].x(i - 1));
  return out;
}

CountMatrix poisson_counts(const Eigen::MatrixXd& jsi_matrix, double total_pairs, double car, std::uint64_t seed) {
  if (!(total_pairs > 0.0)) throw InvalidArgument("poisson_counts: total_pairs must be positive");
  if (!(car > 0.0)) throw InvalidArgument("poisson_counts: car must be positive");
  if (jsi_matrix.rows() != jsi_matrix.cols()) throw InvalidArgument("poisson_counts: JSI must be square");
  if ((jsi_matrix.array() < 0.0).any()) throw InvalidArgument("poisson_counts: negative JSI entry");
  const double total = jsi_matrix.sum();
  if (!(total > 0.0)) throw InvalidArgument("poisson_counts: zero JSI");
  const Eigen::MatrixXd p = jsi_matrix / total;
  const double floor = std::isinf(car) ? 0.0 : p.diagonal().mean() / car;
  std::mt19937_64 rng(seed);
  CountMatrix counts(p.rows(), p.cols());
  for (Eigen::Index r = 0; r < p.rows(); ++r) {
    for (Eigen::Index c = 0; c < p.cols(); ++c) {
      const double mean = total_pairs * (p(r, c) + floor);
      if (mean > 0.0) {
        std::poisson_distribution<std::int64_t> draw(mean);
        counts(r, c) = draw(rng);
      } else {
        counts(r, c) = 0;
      }
    }
  }
  return counts;
}

double estimate_car(const CountMatrix& counts) {
  if (counts.rows() != counts.cols() || counts.rows() < 2) throw InvalidArgument("estimate_car: need a square grid");
  const auto n = counts.rows();
  const double diag = static_cast<double>(counts.diagonal().sum()) / static_cast<double>(n);
  const double off = static_cast<double>(counts.sum() - counts.diagonal().sum()) / static_cast<double>(n * n - n);
  if (!(off > 0.0)) throw NumericalFailure("estimate_car: no accidental counts");
  return (diag - off) / off;
}

}  // namespace qfp
