#include "qfp/optimize.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace qfp::opt {

MinimizeResult nelder_mead(const std::function<double(const Eigen::VectorXd&)>& f,
                           const Eigen::VectorXd& start, const NelderMeadOptions& options) {
  const auto n = start.size();
  std::vector<Eigen::VectorXd> simplex(static_cast<std::size_t>(n) + 1, start);
  std::vector<double> values(simplex.size());
  for (Eigen::Index i = 0; i < n; ++i) simplex[static_cast<std::size_t>(i) + 1](i) += options.initial_step;
  for (std::size_t i = 0; i < simplex.size(); ++i) values[i] = f(simplex[i]);

  std::vector<std::size_t> order(simplex.size());
  MinimizeResult result;
  int it = 0;
  for (; it < options.max_iterations; ++it) {
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    const std::size_t best = order.front();
    const std::size_t worst = order.back();
    const std::size_t second = order[order.size() - 2];
    result.history.push_back(values[best]);

    double spread = 0.0;
    for (const auto& v : simplex) spread = std::max(spread, (v - simplex[best]).cwiseAbs().maxCoeff());
    if (std::abs(values[worst] - values[best]) <= options.f_tolerance && spread <= options.x_tolerance) {
      result.converged = true;
      break;
    }

    Eigen::VectorXd centroid = Eigen::VectorXd::Zero(n);
    for (std::size_t i : order) {
      if (i != worst) centroid += simplex[i];
    }
    centroid /= static_cast<double>(n);

    const Eigen::VectorXd reflected = centroid + (centroid - simplex[worst]);
    const double fr = f(reflected);
    if (fr < values[best]) {
      const Eigen::VectorXd expanded = centroid + 2.0 * (centroid - simplex[worst]);
      const double fe = f(expanded);
      if (fe < fr) {
        simplex[worst] = expanded;
        values[worst] = fe;
      } else {
        simplex[worst] = reflected;
        values[worst] = fr;
      }
      continue;
    }
    if (fr < values[second]) {
      simplex[worst] = reflected;
      values[worst] = fr;
      continue;
    }
    const bool outside = fr < values[worst];
    const Eigen::VectorXd contracted =
        outside ? Eigen::VectorXd(centroid + 0.5 * (reflected - centroid))
                : Eigen::VectorXd(centroid + 0.5 * (simplex[worst] - centroid));
    const double fc = f(contracted);
    if (fc < (outside ? fr : values[worst])) {
      simplex[worst] = contracted;
      values[worst] = fc;
      continue;
    }
    // shrink toward the best vertex
    for (std::size_t i = 0; i < simplex.size(); ++i) {
      if (i == best) continue;
      simplex[i] = simplex[best] + 0.5 * (simplex[i] - simplex[best]);
      values[i] = f(simplex[i]);
    }
  }
  const auto best = static_cast<std::size_t>(std::min_element(values.begin(), values.end()) - values.begin());
  result.x = simplex[best];
  result.value = values[best];
  result.iterations = it;
  return result;
}

MinimizeResult bfgs(const ValueAndGradient& f, const Eigen::VectorXd& start, const BfgsOptions& options) {
  const auto n = start.size();
  MinimizeResult result;
  Eigen::VectorXd x = start;
  Eigen::VectorXd g(n);
  double fx = f(x, g);
  Eigen::MatrixXd h = Eigen::MatrixXd::Identity(n, n);  // inverse Hessian estimate
  result.history.push_back(fx);

  Eigen::VectorXd g_new(n);
  int it = 0;
  for (; it < options.max_iterations; ++it) {
    if (g.lpNorm<Eigen::Infinity>() <= options.gradient_tolerance) {
      result.converged = true;
      break;
    }
    Eigen::VectorXd dir = -h * g;
    double slope = g.dot(dir);
    if (!(slope < 0.0)) {
      h.setIdentity();
      dir = -g;
      slope = g.dot(dir);
    }
    // backtracking with the Armijo condition
    double step = 1.0;
    Eigen::VectorXd x_new;
    double f_new = std::numeric_limits<double>::infinity();
    bool accepted = false;
    for (int k = 0; k < 60; ++k) {
      x_new = x + step * dir;
      f_new = f(x_new, g_new);
      if (std::isfinite(f_new) && f_new <= fx + 1e-4 * step * slope) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      // no descent along this direction; a steepest-descent restart is all that is left
      if (h.isIdentity()) break;
      h.setIdentity();
      continue;
    }
    const Eigen::VectorXd s = x_new - x;
    const Eigen::VectorXd y = g_new - g;
    const double sy = s.dot(y);
    const double decrease = fx - f_new;
    x = x_new;
    g = g_new;
    fx = f_new;
    result.history.push_back(fx);
    if (sy > 1e-300) {
      const double rho = 1.0 / sy;
      const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(n, n);
      h = (eye - rho * s * y.transpose()) * h * (eye - rho * y * s.transpose()) + rho * s * s.transpose();
    }
    if (decrease <= options.f_tolerance * std::max(1.0, std::abs(fx)) &&
        g.lpNorm<Eigen::Infinity>() <= std::sqrt(options.gradient_tolerance)) {
      result.converged = true;
      break;
    }
  }
  result.x = x;
  result.value = fx;
  result.iterations = it;
  return result;
}

LeastSquaresResult levenberg_marquardt(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& residuals,
                                       const Eigen::VectorXd& start, int max_iterations) {
  const auto n = start.size();
  Eigen::VectorXd p = start;
  Eigen::VectorXd r = residuals(p);
  double cost = r.squaredNorm();
  double lambda = 1e-3;

  auto jacobian = [&](const Eigen::VectorXd& at, const Eigen::VectorXd& r0) {
    Eigen::MatrixXd jac(r0.size(), n);
    for (Eigen::Index k = 0; k < n; ++k) {
      const double h = 1e-7 * std::max(1.0, std::abs(at(k)));
      Eigen::VectorXd shifted = at;
      shifted(k) += h;
      jac.col(k) = (residuals(shifted) - r0) / h;
    }
    return jac;
  };

  LeastSquaresResult out;
  int it = 0;
  for (; it < max_iterations; ++it) {
    const Eigen::MatrixXd jac = jacobian(p, r);
    const Eigen::MatrixXd jtj = jac.transpose() * jac;
    const Eigen::VectorXd jtr = jac.transpose() * r;
    bool improved = false;
    for (int k = 0; k < 30; ++k) {
      Eigen::MatrixXd a = jtj;
      a.diagonal() += lambda * jtj.diagonal().cwiseMax(1e-12);
      const Eigen::VectorXd delta = a.ldlt().solve(-jtr);
      const Eigen::VectorXd trial = p + delta;
      const Eigen::VectorXd r_trial = residuals(trial);
      const double c_trial = r_trial.squaredNorm();
      if (std::isfinite(c_trial) && c_trial < cost) {
        const double rel = (cost - c_trial) / std::max(cost, 1e-300);
        p = trial;
        r = r_trial;
        cost = c_trial;
        lambda = std::max(lambda / 10.0, 1e-15);
        improved = true;
        if (rel < 1e-14 || delta.lpNorm<Eigen::Infinity>() < 1e-14 * (1.0 + p.lpNorm<Eigen::Infinity>())) {
          out.converged = true;
        }
        break;
      }
      lambda *= 10.0;
    }
    if (!improved) {
      // cannot reduce further: at a minimum to working precision
      out.converged = true;
      break;
    }
    if (out.converged) break;
  }
  const Eigen::MatrixXd jac = jacobian(p, r);
  const auto m = r.size();
  const double dof = static_cast<double>(std::max<Eigen::Index>(m - n, 1));
  const double s2 = cost / dof;
  out.params = p;
  out.covariance = s2 * (jac.transpose() * jac).completeOrthogonalDecomposition().pseudoInverse();
  out.residual_rms = std::sqrt(cost / static_cast<double>(m));
  out.iterations = it;
  return out;
}

}  // namespace qfp::opt
