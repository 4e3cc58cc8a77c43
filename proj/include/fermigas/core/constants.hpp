#pragma once

#include <numbers>

namespace fermigas {

inline constexpr double pi = std::numbers::pi;
inline constexpr double four_pi = 4.0 * std::numbers::pi;

}  // namespace fermigas
