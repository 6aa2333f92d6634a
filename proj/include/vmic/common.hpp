// common.hpp -- shared helpers: argument checks, dB conversions, energy sums.
#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>

namespace vmic {

inline void require_arg(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

inline void require_state(bool cond, const std::string& msg) {
  if (!cond) throw std::runtime_error(msg);
}

inline double to_db(double power_ratio) { return 10.0 * std::log10(power_ratio); }

// Sum of squares, accumulated in double regardless of input type.
template <class T>
double energy(std::span<const T> x) {
  double acc = 0.0;
  for (const T& v : x) acc += static_cast<double>(v) * static_cast<double>(v);
  return acc;
}

template <class T>
double energy(const std::vector<T>& x) {
  return energy(std::span<const T>(x.data(), x.size()));
}

}  // namespace vmic
