#pragma once

#include <numbers>

namespace phasesync {

inline constexpr double speed_of_light = 299792458.0;  // m/s, vacuum
inline constexpr double two_pi = 2.0 * std::numbers::pi;
inline constexpr double pi = std::numbers::pi;

// default group indices: standard single-mode fiber at telecom, free space
inline constexpr double default_fiber_index = 1.468;
inline constexpr double free_space_index = 1.0;

// fused silica thermal expansion, m per m per K
inline constexpr double silica_expansion_coeff = 5.5e-7;

inline constexpr double deg_per_rad = 180.0 / std::numbers::pi;

constexpr double deg_to_rad(double deg) { return deg / deg_per_rad; }
constexpr double rad_to_deg(double rad) { return rad * deg_per_rad; }

inline constexpr const char* version_string = "0.1.0";

}  // namespace phasesync
