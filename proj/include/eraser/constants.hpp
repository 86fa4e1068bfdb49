#pragma once

namespace eraser {

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kTwoPi = 2.0 * kPi;
inline constexpr double kSpeedOfLight = 299792458.0;  // m/s

inline constexpr double kPicosecond = 1e-12;
inline constexpr double kFemtosecond = 1e-15;
inline constexpr double kMicrometer = 1e-6;
inline constexpr double kMillimeter = 1e-3;
inline constexpr double kNanometer = 1e-9;

}  // namespace eraser
