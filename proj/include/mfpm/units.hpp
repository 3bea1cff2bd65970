#pragma once

#include <cmath>
#include <compare>
#include <limits>
#include <string>

#include "mfpm/errors.hpp"

namespace mfpm {

/// Optical power in diopters (reciprocal meters). Signed; positive power
/// pushes the virtual image of a surface farther away.
struct Diopter {
  double value = 0.0;

  constexpr Diopter() = default;
  constexpr explicit Diopter(double v) : value(v) {}

  constexpr auto operator<=>(const Diopter&) const = default;
  constexpr Diopter operator-(Diopter o) const { return Diopter{value - o.value}; }
  constexpr Diopter operator+(Diopter o) const { return Diopter{value + o.value}; }
  constexpr Diopter operator-() const { return Diopter{-value}; }

  bool finite() const { return std::isfinite(value); }
  bool within(double bound) const { return finite() && std::abs(value) <= bound; }
};

/// Default magnitude bound of the tunable lens (its full -10 D .. 10 D range).
inline constexpr double kDefaultPowerBound = 10.0;

/// Distance in meters along the lens optical axis, measured from the lens
/// plane. Optical infinity is a distinguished value whose reciprocal is 0.
class Distance {
 public:
  constexpr Distance() = default;

  static Distance meters(double m) {
    if (std::isnan(m) || m < 0.0) throw DomainError("distance must be >= 0, got " + std::to_string(m));
    Distance d;
    d.m_ = m;
    return d;
  }
  static constexpr Distance infinity() {
    Distance d;
    d.m_ = std::numeric_limits<double>::infinity();
    return d;
  }
  /// Distance whose reciprocal is `r` (1/m); r == 0 gives infinity.
  static Distance from_reciprocal(double r) {
    if (r < 0.0 || std::isnan(r)) throw DomainError("reciprocal distance must be >= 0");
    return r == 0.0 ? infinity() : meters(1.0 / r);
  }

  constexpr double value() const { return m_; }
  constexpr bool is_infinite() const { return m_ == std::numeric_limits<double>::infinity(); }
  constexpr bool positive() const { return m_ > 0.0; }
  double reciprocal() const { return is_infinite() ? 0.0 : 1.0 / m_; }

  constexpr auto operator<=>(const Distance&) const = default;

 private:
  double m_ = 0.0;
};

inline Distance operator""_m(long double m) { return Distance::meters(static_cast<double>(m)); }
inline Distance operator""_mm(long double mm) { return Distance::meters(static_cast<double>(mm) * 1e-3); }
inline Diopter operator""_D(long double v) { return Diopter{static_cast<double>(v)}; }

}  // namespace mfpm
