#include "qfp/tomo.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "qfp/bessel.hpp"
#include "qfp/errors.hpp"
#include "qfp/optimize.hpp"

namespace qfp {

namespace {

constexpr double pi = std::numbers::pi;
constexpr int kParams = 16;

// Parameter layout: 4 real diagonal entries of T, then (re, im) for each
// strictly upper entry in row-major order.
Eigen::Matrix4cd t_from_params(const Eigen::VectorXd& p) {
  if (p.size() != kParams) throw InvalidArgument("tomo: expected 16 Cholesky parameters");
  Eigen::Matrix4cd t = Eigen::Matrix4cd::Zero();
  int k = 4;
  for (int i = 0; i < 4; ++i) {
    t(i, i) = p(i);
    for (int j = i + 1; j < 4; ++j, k += 2) t(i, j) = cplx(p(k), p(k + 1));
  }
  return t;
}

Eigen::Matrix4cd kron(const Eigen::Matrix2cd& a, const Eigen::Matrix2cd& b) {
  Eigen::Matrix4cd out;
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) out.block<2, 2>(2 * i, 2 * j) = a(i, j) * b;
  }
  return out;
}

// Orthonormal Hermitian basis of 4x4 matrices under Tr(A B).
std::vector<Eigen::Matrix4cd> hermitian_basis() {
  std::vector<Eigen::Matrix4cd> basis;
  const double r = 1.0 / std::sqrt(2.0);
  for (int i = 0; i < 4; ++i) {
    Eigen::Matrix4cd b = Eigen::Matrix4cd::Zero();
    b(i, i) = 1.0;
    basis.push_back(b);
  }
  for (int i = 0; i < 4; ++i) {
    for (int j = i + 1; j < 4; ++j) {
      Eigen::Matrix4cd re = Eigen::Matrix4cd::Zero();
      re(i, j) = r;
      re(j, i) = r;
      Eigen::Matrix4cd im = Eigen::Matrix4cd::Zero();
      im(i, j) = cplx(0.0, -r);
      im(j, i) = cplx(0.0, r);
      basis.push_back(re);
      basis.push_back(im);
    }
  }
  return basis;
}

Eigen::MatrixXd design_matrix(const std::vector<MeasurementRecord>& records) {
  const auto basis = hermitian_basis();
  Eigen::MatrixXd m(static_cast<Eigen::Index>(records.size()), kParams);
  for (std::size_t k = 0; k < records.size(); ++k) {
    const auto e = projector(records[k].setting);
    for (int j = 0; j < kParams; ++j) {
      m(static_cast<Eigen::Index>(k), j) = (e * basis[static_cast<std::size_t>(j)]).trace().real();
    }
  }
  return m;
}

DensityMatrix project_psd(const DensityMatrix& h) {
  const Eigen::SelfAdjointEigenSolver<Eigen::Matrix4cd> eig(0.5 * (h + h.adjoint()));
  Eigen::Vector4d w = eig.eigenvalues().cwiseMax(0.0);
  if (!(w.sum() > 0.0)) return DensityMatrix::Identity() / 4.0;
  w /= w.sum();
  return eig.eigenvectors() * w.cast<cplx>().asDiagonal() * eig.eigenvectors().adjoint();
}

void check_records(const std::vector<MeasurementRecord>& records) {
  if (records.empty()) throw InvalidArgument("tomo: no measurement records");
  double total = 0.0;
  for (const auto& r : records) {
    if (!(r.shots > 0.0) || !(r.counts >= 0.0)) throw InvalidArgument("tomo: records need positive shots and counts >= 0");
    total += r.counts;
  }
  if (!(total > 0.0)) throw InvalidArgument("tomo: records contain no counts");
}

}  // namespace

void validate_density(const DensityMatrix& rho, double tol) {
  if ((rho - rho.adjoint()).cwiseAbs().maxCoeff() > tol) throw InvalidArgument("density matrix is not Hermitian");
  if (std::abs(rho.trace() - 1.0) > tol) throw InvalidArgument("density matrix trace differs from 1");
  const Eigen::SelfAdjointEigenSolver<Eigen::Matrix4cd> eig(rho);
  if (eig.eigenvalues().minCoeff() < -tol) throw InvalidArgument("density matrix has a negative eigenvalue");
}

PureState bell_phi_plus() {
  PureState v = PureState::Zero();
  v(0) = v(3) = 1.0 / std::sqrt(2.0);
  return v;
}

double state_fidelity(const DensityMatrix& rho, const PureState& target) {
  const double n = target.squaredNorm();
  if (!(n > 0.0)) throw InvalidArgument("state_fidelity: zero target");
  return (target.adjoint() * rho * target).value().real() / n;
}

double purity(const DensityMatrix& rho) { return (rho * rho).trace().real(); }

DensityMatrix carve_bell_state(const BiphotonState& comb, BinPair kept, double suppression_db) {
  if (comb.amplitudes.size() < 4) throw InvalidArgument("carve_bell_state: comb needs at least four bins");
  if (!(suppression_db > 0.0)) throw InvalidArgument("carve_bell_state: suppression must be positive");
  const int i0 = kept.first - comb.first_bin;
  const int i1 = kept.second - comb.first_bin;
  if (i0 < 0 || i1 < 0 || i0 >= comb.amplitudes.size() || i1 >= comb.amplitudes.size() || i0 == i1) {
    throw InvalidArgument("carve_bell_state: kept bins outside the comb");
  }
  PureState psi = PureState::Zero();
  psi(0) = comb.amplitudes(i0);
  psi(3) = comb.amplitudes(i1);
  const double n = psi.norm();
  if (!(n > 0.0)) throw InvalidArgument("carve_bell_state: kept bins carry no amplitude");
  psi /= n;
  const double eps = std::isinf(suppression_db) ? 0.0 : std::pow(10.0, -suppression_db / 10.0);
  return (1.0 - eps) * psi * psi.adjoint() + eps * DensityMatrix::Identity() / 4.0;
}

double photon_efficiency(const PhotonSetting& s, double delta_meas) {
  if (s.kind == PhotonSetting::Kind::Z) return 1.0;
  return 2.0 * std::abs(bessel_j(0, delta_meas) * bessel_j(1, delta_meas));
}

Eigen::Matrix2cd photon_projector(const PhotonSetting& s) {
  Eigen::Vector2cd v;
  if (s.kind == PhotonSetting::Kind::Z) {
    if (s.outcome != 0 && s.outcome != 1) throw InvalidArgument("photon_projector: outcome must be 0 or 1");
    v << (s.outcome == 0 ? 1.0 : 0.0), (s.outcome == 1 ? 1.0 : 0.0);
  } else {
    v << 1.0 / std::sqrt(2.0), std::polar(1.0 / std::sqrt(2.0), s.phase);
  }
  return v * v.adjoint();
}

Eigen::Matrix4cd projector(const MeasurementSetting& setting) {
  const double eta = photon_efficiency(setting.signal, setting.delta_meas) *
                     photon_efficiency(setting.idler, setting.delta_meas);
  return eta * kron(photon_projector(setting.signal), photon_projector(setting.idler));
}

std::vector<MeasurementSetting> canonical_settings(double delta_meas) {
  using K = PhotonSetting::Kind;
  const PhotonSetting single[4] = {{K::Z, 0, 0.0}, {K::Z, 1, 0.0}, {K::Superposition, 0, 0.0},
                                   {K::Superposition, 0, pi / 2.0}};
  std::vector<MeasurementSetting> out;
  for (const auto& s : single) {
    for (const auto& i : single) out.push_back({s, i, delta_meas});
  }
  return out;
}

double coincidence_rate(const DensityMatrix& rho, const MeasurementSetting& setting, double car) {
  if (!(car > 0.0)) throw InvalidArgument("coincidence_rate: car must be positive");
  const double signal = (projector(setting) * rho).trace().real();
  if (std::isinf(car)) return signal;
  const Eigen::Matrix2cd id = Eigen::Matrix2cd::Identity();
  const double ss = photon_efficiency(setting.signal, setting.delta_meas) *
                    (kron(photon_projector(setting.signal), id) * rho).trace().real();
  const double si = photon_efficiency(setting.idler, setting.delta_meas) *
                    (kron(id, photon_projector(setting.idler)) * rho).trace().real();
  return signal + 2.0 * ss * si / car;
}

FringeCurve bell_fringe(const DensityMatrix& rho, const std::vector<double>& dphi_grid, double delta_meas, double car) {
  if (dphi_grid.size() < 2) throw InvalidArgument("bell_fringe: grid needs at least two points");
  const auto [lo, hi] = std::minmax_element(dphi_grid.begin(), dphi_grid.end());
  const double period_cover = 2.0 * pi * (1.0 - 1.0 / static_cast<double>(dphi_grid.size())) - 1e-9;
  if (*hi - *lo < period_cover) throw InvalidArgument("bell_fringe: grid must cover one period");
  using K = PhotonSetting::Kind;
  const Eigen::Matrix2cd id = Eigen::Matrix2cd::Identity();
  FringeCurve out;
  for (double d : dphi_grid) {
    const MeasurementSetting s{{K::Superposition, 0, 0.0}, {K::Superposition, 0, d}, delta_meas};
    out.dphi.push_back(d);
    out.coincidences.push_back(coincidence_rate(rho, s, car));
    out.singles_signal.push_back(photon_efficiency(s.signal, delta_meas) *
                                 (kron(photon_projector(s.signal), id) * rho).trace().real());
    out.singles_idler.push_back(photon_efficiency(s.idler, delta_meas) *
                                (kron(id, photon_projector(s.idler)) * rho).trace().real());
  }
  return out;
}

VisibilityFit fit_visibility(const std::vector<double>& dphi, const std::vector<double>& counts, FitWeights weights) {
  if (dphi.size() != counts.size()) throw InvalidArgument("fit_visibility: size mismatch");
  const auto n = static_cast<Eigen::Index>(dphi.size());
  if (n < 8) throw InvalidArgument("fit_visibility: need at least 8 points");
  const auto [lo, hi] = std::minmax_element(dphi.begin(), dphi.end());
  if (*hi - *lo < 2.0 * pi * (1.0 - 1.0 / static_cast<double>(n)) - 1e-9) {
    throw InvalidArgument("fit_visibility: points must span a period");
  }
  Eigen::MatrixXd x(n, 3);
  Eigen::VectorXd y(n);
  Eigen::VectorXd w = Eigen::VectorXd::Ones(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const double d = dphi[static_cast<std::size_t>(k)];
    x.row(k) << 1.0, std::cos(d), std::sin(d);
    y(k) = counts[static_cast<std::size_t>(k)];
    if (weights == FitWeights::Poisson) w(k) = 1.0 / std::max(y(k), 1.0);
  }
  const Eigen::MatrixXd xtw = x.transpose() * w.asDiagonal();
  const Eigen::Matrix3d normal = xtw * x;
  const Eigen::FullPivLU<Eigen::Matrix3d> lu(normal);
  if (!lu.isInvertible()) throw FitFailure("fit_visibility: singular design");
  const Eigen::Vector3d c = lu.solve(xtw * y);
  if (!(c(0) > 0.0)) throw FitFailure("fit_visibility: non-positive baseline");
  Eigen::Matrix3d cov = lu.inverse();
  if (weights == FitWeights::Residual) {
    const Eigen::VectorXd r = y - x * c;
    cov *= r.squaredNorm() / static_cast<double>(std::max<Eigen::Index>(n - 3, 1));
  }
  const double amp = std::hypot(c(1), c(2));
  VisibilityFit fit;
  fit.baseline = c(0);
  fit.phase_offset = std::atan2(-c(2), c(1));
  const double v = amp / c(0);
  // gradient of V = sqrt(c1^2 + c2^2) / c0
  Eigen::Vector3d g(-v / c(0), amp > 0.0 ? c(1) / (amp * c(0)) : 0.0, amp > 0.0 ? c(2) / (amp * c(0)) : 0.0);
  fit.sigma_visibility = std::sqrt(std::max(g.dot(cov * g), 0.0));
  fit.visibility = std::clamp(v, 0.0, 1.0);
  const double threshold = 1.0 / std::sqrt(2.0);
  fit.significance = fit.sigma_visibility > 0.0 ? (v - threshold) / fit.sigma_visibility
                                                : (v > threshold ? std::numeric_limits<double>::infinity()
                                                                 : -std::numeric_limits<double>::infinity());
  fit.violates_bell = v - fit.sigma_visibility > threshold;
  return fit;
}

std::vector<MeasurementRecord> simulate_counts(const DensityMatrix& rho, const std::vector<MeasurementSetting>& settings,
                                               double shots_per_setting, double car, std::uint64_t seed,
                                               bool expected_value) {
  if (!(shots_per_setting > 0.0)) throw InvalidArgument("simulate_counts: shots must be positive");
  validate_density(rho, 1e-8);
  std::mt19937_64 rng(seed);
  std::vector<MeasurementRecord> out;
  for (const auto& s : settings) {
    const double mean = shots_per_setting * std::max(coincidence_rate(rho, s, car), 0.0);
    double counts = mean;
    if (!expected_value) {
      counts = 0.0;
      if (mean > 0.0) {
        std::poisson_distribution<std::int64_t> draw(mean);
        counts = static_cast<double>(draw(rng));
      }
    }
    out.push_back({s, shots_per_setting, counts});
  }
  return out;
}

DensityMatrix density_from_params(const Eigen::VectorXd& params) {
  const auto t = t_from_params(params);
  const Eigen::Matrix4cd a = t.adjoint() * t;
  const double tr = a.trace().real();
  if (!(tr > 0.0)) throw InvalidArgument("density_from_params: zero Cholesky factor");
  return a / tr;
}

Eigen::VectorXd params_from_density(const DensityMatrix& rho) {
  // a small admixture keeps the factorization defined for rank-deficient rho
  const DensityMatrix reg = 0.5 * (rho + rho.adjoint()) + 1e-9 * DensityMatrix::Identity();
  const Eigen::LLT<Eigen::Matrix4cd> llt(reg);
  if (llt.info() != Eigen::Success) throw InvalidArgument("params_from_density: matrix is not positive definite");
  const Eigen::Matrix4cd t = llt.matrixL().adjoint();  // rho = T^dag T, T upper
  Eigen::VectorXd p(kParams);
  int k = 4;
  for (int i = 0; i < 4; ++i) {
    p(i) = t(i, i).real();
    for (int j = i + 1; j < 4; ++j, k += 2) {
      p(k) = t(i, j).real();
      p(k + 1) = t(i, j).imag();
    }
  }
  return p;
}

double mle_log_likelihood(const std::vector<MeasurementRecord>& records, const Eigen::VectorXd& params,
                          Eigen::VectorXd* gradient) {
  const auto t = t_from_params(params);
  const Eigen::Matrix4cd a = t.adjoint() * t;
  const double tr = a.trace().real();
  if (!(tr > 0.0)) return -std::numeric_limits<double>::infinity();
  const Eigen::Matrix4cd rho = a / tr;
  double ll = 0.0;
  Eigen::Matrix4cd g = Eigen::Matrix4cd::Zero();
  for (const auto& r : records) {
    const auto e = projector(r.setting);
    const double mu = r.shots * (e * rho).trace().real();
    if (r.counts > 0.0) {
      if (!(mu > 0.0)) return -std::numeric_limits<double>::infinity();
      ll += r.counts * std::log(mu / r.counts);
    }
    // measured from the saturated model so the optimum sits near zero
    ll -= mu - r.counts;
    if (gradient != nullptr) g += ((mu > 0.0 ? r.counts / mu : 0.0) - 1.0) * r.shots * e;
  }
  if (gradient != nullptr) {
    // dL = Tr(H dA) with H = (G - Tr(G rho) I) / Tr(A)
    const Eigen::Matrix4cd h = (g - (g * rho).trace() * Eigen::Matrix4cd::Identity()) / tr;
    const Eigen::Matrix4cd ht = h * t.adjoint();
    gradient->resize(kParams);
    int k = 4;
    for (int i = 0; i < 4; ++i) {
      (*gradient)(i) = 2.0 * ht(i, i).real();
      for (int j = i + 1; j < 4; ++j, k += 2) {
        (*gradient)(k) = 2.0 * ht(j, i).real();
        (*gradient)(k + 1) = -2.0 * ht(j, i).imag();
      }
    }
  }
  return ll;
}

DensityMatrix linear_inversion(const std::vector<MeasurementRecord>& records) {
  check_records(records);
  const auto m = design_matrix(records);
  Eigen::VectorXd p(m.rows());
  for (std::size_t k = 0; k < records.size(); ++k) p(static_cast<Eigen::Index>(k)) = records[k].counts / records[k].shots;
  const Eigen::VectorXd x = m.completeOrthogonalDecomposition().solve(p);
  const auto basis = hermitian_basis();
  DensityMatrix h = DensityMatrix::Zero();
  for (int j = 0; j < kParams; ++j) h += x(j) * basis[static_cast<std::size_t>(j)];
  return project_psd(h);
}

MleResult mle_reconstruct(const std::vector<MeasurementRecord>& records, const MleOptions& options) {
  check_records(records);
  MleResult out;
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(design_matrix(records));
  const auto& sv = svd.singularValues();
  out.ill_conditioned = sv.size() < kParams || !(sv(sv.size() - 1) > 1e-8 * sv(0));

  double scale = 0.0;
  for (const auto& r : records) scale += r.counts;
  const opt::ValueAndGradient objective = [&](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
    const double ll = mle_log_likelihood(records, x, &g);
    g = -g / scale;
    return -ll / scale;
  };

  std::vector<Eigen::VectorXd> starts;
  starts.push_back(params_from_density(0.999 * linear_inversion(records) + 0.001 * DensityMatrix::Identity() / 4.0));
  std::mt19937_64 rng(options.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int s = 0; s < options.random_starts; ++s) {
    Eigen::VectorXd x(kParams);
    for (int i = 0; i < kParams; ++i) x(i) = normal(rng);
    starts.push_back(x);
  }

  // the objective is near zero at the optimum, so stop on the gradient
  opt::BfgsOptions bo;
  bo.gradient_tolerance = 1e-14;
  bo.f_tolerance = 1e-24;
  opt::MinimizeResult best;
  best.value = std::numeric_limits<double>::infinity();
  bool any = false;
  for (const auto& x0 : starts) {
    auto run = opt::bfgs(objective, x0, bo);
    if (!std::isfinite(run.value)) continue;
    any = true;
    out.converged = out.converged || run.converged;
    if (run.value < best.value) best = std::move(run);
  }
  if (!any) throw ReconstructionFailure("mle_reconstruct: likelihood undefined at every start", 0.0);
  // Near a rank-deficient optimum the likelihood is quartic in the Cholesky
  // parameters and BFGS stalls; restarting with a fresh Hessian keeps it moving.
  for (int k = 0; k < 20; ++k) {
    auto run = opt::bfgs(objective, best.x, bo);
    if (!(run.value < best.value)) break;
    run.history.insert(run.history.begin(), best.history.begin(), best.history.end());
    run.iterations += best.iterations;
    run.converged = true;
    best = std::move(run);
  }
  out.rho = density_from_params(best.x);
  out.rho = 0.5 * (out.rho + out.rho.adjoint());
  out.log_likelihood = -best.value * scale;
  out.iterations = best.iterations;
  for (double v : best.history) out.history.push_back(-v * scale);
  if (!out.converged) {
    throw ReconstructionFailure("mle_reconstruct: optimizer did not converge", out.log_likelihood);
  }
  return out;
}

}  // namespace qfp
