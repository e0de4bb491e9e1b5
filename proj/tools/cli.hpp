#pragma once

#include <ostream>
#include <stdexcept>
#include <string>

#include "json.hpp"

namespace qfp::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNumerical = 3;

inline constexpr int kSchemaVersion = 1;

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Device constants shared by every experiment; keys carry their units.
struct Device {
  double center_frequency_hz = 193.4e12;
  double qfp_bin_spacing_hz = 13.25e9;
  double comb_bin_spacing_hz = 15.34e9;
  double modulation_depth_rad = 0.8169;
  double ring_power_coupling = 0.023;
  double ring_loss_db_per_cm = 1.2;
  double ring_radius_m = 50e-6;
  double ring_effective_index = 2.8;
  double pump_filter_fsr_hz = 500e9;
  double pump_filter_extinction_db = 20.0;
  double pump_filter_alignment_rad = 0.0;
  int comb_bins = 6;
  int comb_offset_bins = 49;
  double dither_demux_hz = 150.0;
  double dither_mux_hz = 250.0;
  double dither_amplitude_linewidths = 0.15;
  double dither_duration_s = 0.2;
  double sample_rate_hz = 51200.0;
  double car = 55.0;
  double guard_suppression_db = 13.5;
  double measurement_depth_rad = 0.8169;
};

// Reads a "device" block; unknown keys raise ConfigError.
Device parse_device(const nlohmann::json& block);
nlohmann::ordered_json device_to_json(const Device& d);

// Entry point shared by the executable and the tests.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace qfp::cli
