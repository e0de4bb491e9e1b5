#pragma once

#include <functional>
#include <vector>

#include <Eigen/Dense>

namespace qfp::opt {

struct MinimizeResult {
  Eigen::VectorXd x;
  double value = 0.0;
  int iterations = 0;
  bool converged = false;
  // objective at each accepted iterate, in order
  std::vector<double> history;
};

struct NelderMeadOptions {
  double initial_step = 0.2;
  double f_tolerance = 1e-13;
  double x_tolerance = 1e-9;
  int max_iterations = 20000;
};

MinimizeResult nelder_mead(const std::function<double(const Eigen::VectorXd&)>& f,
                           const Eigen::VectorXd& start, const NelderMeadOptions& options = {});

struct BfgsOptions {
  double gradient_tolerance = 1e-10;
  double f_tolerance = 1e-15;
  int max_iterations = 5000;
};

// f returns the objective and fills the gradient.
using ValueAndGradient = std::function<double(const Eigen::VectorXd&, Eigen::VectorXd&)>;

MinimizeResult bfgs(const ValueAndGradient& f, const Eigen::VectorXd& start, const BfgsOptions& options = {});

struct LeastSquaresResult {
  Eigen::VectorXd params;
  Eigen::MatrixXd covariance;  // s^2 (J^T J)^{-1}
  double residual_rms = 0.0;
  int iterations = 0;
  bool converged = false;
};

// Levenberg-Marquardt on residuals r(p) with a forward-difference Jacobian.
LeastSquaresResult levenberg_marquardt(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& residuals,
                                       const Eigen::VectorXd& start, int max_iterations = 200);

}  // namespace qfp::opt
