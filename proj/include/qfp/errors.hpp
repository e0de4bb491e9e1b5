#pragma once

#include <stdexcept>
#include <string>

namespace qfp {

// Precondition violations on public entry points.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A requested parameter lies outside what the device can realize.
class OutOfRange : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

// Base for failures of numerical procedures (fits, optimizers, reconstructions).
class NumericalFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class FitFailure : public NumericalFailure {
 public:
  using NumericalFailure::NumericalFailure;
};

class ReconstructionFailure : public NumericalFailure {
 public:
  ReconstructionFailure(const std::string& what, double residual)
      : NumericalFailure(what), residual_(residual) {}
  double residual() const { return residual_; }

 private:
  double residual_;
};

class RetrievalFailure : public NumericalFailure {
 public:
  RetrievalFailure(const std::string& what, double best_fidelity)
      : NumericalFailure(what), best_fidelity_(best_fidelity) {}
  double best_fidelity() const { return best_fidelity_; }

 private:
  double best_fidelity_;
};

class DegenerateScan : public NumericalFailure {
 public:
  using NumericalFailure::NumericalFailure;
};

class UndefinedFidelity : public NumericalFailure {
 public:
  using NumericalFailure::NumericalFailure;
};

}  // namespace qfp
