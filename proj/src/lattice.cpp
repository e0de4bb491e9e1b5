#include "qfp/lattice.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "qfp/bessel.hpp"
#include "qfp/errors.hpp"

namespace qfp {

FrequencyLattice::FrequencyLattice(double center_frequency, double spacing, int l_min, int l_max)
    : center_(center_frequency), spacing_(spacing), l_min_(l_min), l_max_(l_max) {
  if (!(spacing > 0.0) || !std::isfinite(spacing)) {
    throw InvalidArgument("FrequencyLattice: spacing must be positive");
  }
  if (!(l_min < l_max)) throw InvalidArgument("FrequencyLattice: need l_min < l_max");
  if (!std::isfinite(center_frequency)) throw InvalidArgument("FrequencyLattice: non-finite center");
}

double FrequencyLattice::bin_wavelength(int l) const { return kSpeedOfLight / bin_frequency(l); }

std::size_t FrequencyLattice::index(int l) const {
  if (!contains(l)) {
    throw InvalidArgument("bin " + std::to_string(l) + " outside lattice window [" +
                          std::to_string(l_min_) + ", " + std::to_string(l_max_) + "]");
  }
  return static_cast<std::size_t>(l - l_min_);
}

int FrequencyLattice::nearest_bin(double frequency) const {
  const double offset = (frequency - center_) / spacing_;
  const int l = static_cast<int>(std::lround(offset));
  if (!contains(l)) {
    throw InvalidArgument("frequency " + std::to_string(frequency) + " Hz maps outside the lattice window");
  }
  return l;
}

FrequencyLattice make_lattice(double center_frequency, double spacing, int half_width) {
  if (half_width < 1) throw InvalidArgument("make_lattice: half_width must be >= 1");
  return FrequencyLattice(center_frequency, spacing, -half_width, half_width);
}

int default_half_width(double delta_max, int chain_length) {
  const int base = static_cast<int>(std::ceil(delta_max)) + 12;
  const int guarded = chain_length * truncation_order(delta_max) + 4;
  return std::max(base, guarded);
}

}  // namespace qfp
