#pragma once

#include <cstddef>

namespace qfp {

// Equally spaced frequency bins with signed indices l in [l_min, l_max].
// Physical frequency of bin l is center + l * spacing; it is never stored
// per bin.
class FrequencyLattice {
 public:
  FrequencyLattice(double center_frequency, double spacing, int l_min, int l_max);

  double center_frequency() const { return center_; }
  double spacing() const { return spacing_; }
  int l_min() const { return l_min_; }
  int l_max() const { return l_max_; }
  std::size_t size() const { return static_cast<std::size_t>(l_max_ - l_min_ + 1); }

  double bin_frequency(int l) const { return center_ + l * spacing_; }
  double bin_wavelength(int l) const;
  bool contains(int l) const { return l >= l_min_ && l <= l_max_; }
  // Row/column position of bin l in operators built on this lattice.
  std::size_t index(int l) const;
  int bin_at(std::size_t index) const { return l_min_ + static_cast<int>(index); }
  // Nearest bin to a physical frequency; throws if it falls outside the window.
  int nearest_bin(double frequency) const;

  bool operator==(const FrequencyLattice&) const = default;

 private:
  double center_;
  double spacing_;
  int l_min_;
  int l_max_;
};

inline constexpr double kSpeedOfLight = 299792458.0;

FrequencyLattice make_lattice(double center_frequency, double spacing, int half_width);

// Half-width needed to hold an operator chain of `chain_length` modulators of
// depth up to delta_max with a fully guarded interior.
int default_half_width(double delta_max, int chain_length = 2);

}  // namespace qfp
