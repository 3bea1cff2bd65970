#pragma once

// Closed-form thin-lens math for a focal-sweep lens in front of the eye:
// virtual image placement, sweep planning, power sampling, depth filtering
// and the lens-breathing resize factor.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "mfpm/errors.hpp"
#include "mfpm/units.hpp"

namespace mfpm::optics {

/// Recommended upper bound on the spacing of sampled powers for continuous
/// focus cues.
inline constexpr double kGuidelineInterval = 0.6;

struct SweepRange {
  Diopter v_low;
  Diopter v_high;

  double extent() const { return v_high.value - v_low.value; }
  bool contains(Diopter v) const { return v >= v_low && v <= v_high; }
};

/// Sampled optical powers, strictly increasing.
class PowerSamples {
 public:
  PowerSamples() = default;

  explicit PowerSamples(std::vector<double> powers, double guideline = kGuidelineInterval)
      : powers_(std::move(powers)), guideline_(guideline) {
    if (powers_.empty()) throw ArgumentError("power samples must not be empty");
    for (std::size_t i = 0; i < powers_.size(); ++i) {
      if (!std::isfinite(powers_[i])) throw ArgumentError("power samples must be finite");
      if (i > 0 && !(powers_[i] > powers_[i - 1]))
        throw ArgumentError("power samples must be strictly increasing");
    }
  }

  std::size_t size() const { return powers_.size(); }
  double operator[](std::size_t i) const { return powers_[i]; }
  Diopter at(std::size_t i) const { return Diopter{powers_.at(i)}; }
  std::span<const double> values() const { return powers_; }
  double front() const { return powers_.front(); }
  double back() const { return powers_.back(); }
  double guideline_interval() const { return guideline_; }

  /// Largest gap between neighbouring samples (0 for a single sample).
  double max_interval() const {
    double gap = 0.0;
    for (std::size_t i = 1; i < powers_.size(); ++i) gap = std::max(gap, powers_[i] - powers_[i - 1]);
    return gap;
  }
  bool meets_guideline() const { return max_interval() <= guideline_ + 1e-12; }

  std::vector<std::string> warnings() const {
    std::vector<std::string> out;
    if (!meets_guideline())
      out.push_back("sample spacing " + std::to_string(max_interval()) + " D exceeds the " +
                    std::to_string(guideline_) + " D guideline");
    return out;
  }

 private:
  std::vector<double> powers_;
  double guideline_ = kGuidelineInterval;
};

/// How one pixel's radiance splits between the two bracketing samples.
struct SliceWeights {
  std::size_t lower_index = 0;
  std::size_t upper_index = 0;  // equals lower_index + 1, or lower_index for a single sample
  double weight_lower = 1.0;
  double weight_upper = 0.0;
  double radiance_lower = 0.0;
  double radiance_upper = 0.0;
};

namespace detail {
inline void require_positive(Distance d, const char* name) {
  if (!d.positive()) throw DomainError(std::string(name) + " must be > 0");
}
}  // namespace detail

/// Power that places the virtual image of a surface at `d_p` at `d_v`.
inline Diopter required_power(Distance d_p, Distance d_v) {
  detail::require_positive(d_p, "d_p");
  detail::require_positive(d_v, "d_v");
  return Diopter{1.0 / d_p.value() - d_v.reciprocal()};
}

/// Where the virtual image of a surface at `d_p` lands under power `v`.
inline Distance virtual_distance(Distance d_p, Diopter v) {
  detail::require_positive(d_p, "d_p");
  if (d_p.is_infinite()) throw DomainError("d_p must be finite");
  const double w = 1.0 / d_p.value() - v.value;
  if (w < 0.0)
    throw RealImageError("power " + std::to_string(v.value) + " D forms a real image of a surface at " +
                         std::to_string(d_p.value()) + " m");
  return Distance::from_reciprocal(w);
}

/// Sweep needed to move the virtual image from `d_vn` in front of the surface
/// to `d_vf` behind it.
inline SweepRange sweep_range(Distance d_p, Distance d_vn, Distance d_vf) {
  detail::require_positive(d_p, "d_p");
  if (d_p.is_infinite()) throw DomainError("d_p must be finite");
  if (d_vn.value() >= d_p.value()) throw DomainError("near extent must be shorter than the surface distance");
  const double inv_p = 1.0 / d_p.value();
  const double v_low = inv_p - 1.0 / (d_p.value() - d_vn.value());
  const double v_high = d_vf.is_infinite() ? inv_p : inv_p - 1.0 / (d_p.value() + d_vf.value());
  return {Diopter{v_low}, Diopter{v_high}};
}

/// Uniformly spaced samples in diopters including both ends. A single
/// sample sits at the middle of the range.
inline PowerSamples sample_powers(const SweepRange& range, std::size_t n_prime,
                                  double guideline = kGuidelineInterval) {
  if (n_prime == 0) throw ArgumentError("at least one power sample is required");
  if (range.v_high < range.v_low) throw ArgumentError("sweep range is inverted");
  const double lo = range.v_low.value;
  const double hi = range.v_high.value;
  if (n_prime == 1) return PowerSamples({0.5 * (lo + hi)}, guideline);
  if (!(hi > lo)) throw ArgumentError("a degenerate range supports a single sample only");
  std::vector<double> out(n_prime);
  const double step = (hi - lo) / static_cast<double>(n_prime - 1);
  for (std::size_t i = 0; i < n_prime; ++i) out[i] = lo + step * static_cast<double>(i);
  out.back() = hi;
  return PowerSamples(std::move(out), guideline);
}

/// Index of the sample nearest to `v`; ties go to the lower index.
inline std::size_t assign_slice(Diopter v, const PowerSamples& samples) {
  const auto vals = samples.values();
  if (vals.empty()) throw ArgumentError("no power samples");
  const auto it = std::lower_bound(vals.begin(), vals.end(), v.value);
  std::size_t hi = static_cast<std::size_t>(it - vals.begin());
  if (hi == 0) return 0;
  if (hi == vals.size()) hi = vals.size() - 1;
  std::size_t best = hi;
  double best_d = std::abs(vals[hi] - v.value);
  // Walk down: lower indices win ties, and rounding can make several
  // distances compare equal.
  for (std::size_t i = hi; i-- > 0;) {
    const double d = std::abs(vals[i] - v.value);
    if (d > best_d) break;
    best = i;
    best_d = d;
  }
  return best;
}

/// Linear split of radiance `r` between the two samples bracketing `v`,
/// proportional to dioptric distance. Values outside the sampled range
/// clamp to the end sample. The two shares always add back to `r` exactly.
inline SliceWeights depth_filter(double r, Diopter v, const PowerSamples& samples) {
  if (!(r >= 0.0)) throw ArgumentError("radiance must be >= 0");
  const auto vals = samples.values();
  if (vals.empty()) throw ArgumentError("no power samples");
  SliceWeights w;
  if (vals.size() == 1) {
    w.radiance_lower = r;
    return w;
  }
  const std::size_t last = vals.size() - 1;
  double t;  // fraction of the way from lower to upper sample
  if (v.value <= vals.front()) {
    w.lower_index = 0;
    t = 0.0;
  } else if (v.value >= vals.back()) {
    w.lower_index = last - 1;
    t = 1.0;
  } else {
    const auto it = std::upper_bound(vals.begin(), vals.end(), v.value);
    w.lower_index = static_cast<std::size_t>(it - vals.begin()) - 1;
    const double a = vals[w.lower_index];
    const double b = vals[w.lower_index + 1];
    t = std::clamp((v.value - a) / (b - a), 0.0, 1.0);
  }
  w.upper_index = w.lower_index + 1;
  w.weight_upper = t;
  w.weight_lower = 1.0 - t;
  // The larger share is formed by multiplication and the smaller one by
  // subtraction; the subtraction is then exact, so the shares sum to r.
  if (w.weight_lower >= 0.5) {
    w.radiance_lower = r * w.weight_lower;
    w.radiance_upper = r - w.radiance_lower;
  } else {
    w.radiance_upper = r * t;
    w.radiance_lower = r - w.radiance_upper;
  }
  return w;
}

/// Resize factor d_p(d_v + d_e) / (d_v(d_p + d_e)) that keeps the visual
/// angle of content seen through the lens equal to its unmodulated angle
/// when the eye sits `d_e` behind the lens.
inline double breathing_scale(Distance d_p, Distance d_v, Distance d_e) {
  detail::require_positive(d_p, "d_p");
  if (d_v.value() == 0.0) throw DomainError("d_v must be > 0");
  const double p = d_p.value();
  const double e = d_e.value();
  if (d_v.is_infinite()) return p / (p + e);
  const double v = d_v.value();
  return p * (v + e) / (v * (p + e));
}

/// Same factor expressed through the power shown; stays finite when the
/// power would form a real image. Zero power is the identity.
inline double breathing_scale_for_power(Distance d_p, Diopter v, Distance d_e) {
  detail::require_positive(d_p, "d_p");
  if (v.value == 0.0) return 1.0;
  const double p = d_p.value();
  const double e = d_e.value();
  const double w = 1.0 / p - v.value;  // reciprocal virtual distance
  return p * (1.0 + e * w) / (p + e);
}

/// Ratio by which to multiply a virtual projector's FOV so that content at
/// `half_extent` from the axis moves to `scale * half_extent`, with angles
/// measured from the eye.
inline double fov_scale(Distance half_extent, double scale, Distance d_e, Distance d_p) {
  detail::require_positive(half_extent, "half_extent");
  const double reach = d_e.value() + d_p.value();
  const double h = half_extent.value();
  return std::atan(scale * h / reach) / std::atan(h / reach);
}

}  // namespace mfpm::optics
