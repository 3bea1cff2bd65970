#pragma once

// Drive-to-power model of the focus-tunable lens: a linear low-pass plant
// excited by a sinusoid, and one calibrated cycle of optical power indexed
// by drive phase.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdio>
#include <istream>
#include <limits>
#include <numbers>
#include <ostream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "mfpm/errors.hpp"
#include "mfpm/optics.hpp"
#include "mfpm/units.hpp"

namespace mfpm::etl {

inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

/// Wraps any phase into [0, 2π).
inline double wrap_phase(double phi) {
  double w = phi - kTwoPi * std::floor(phi / kTwoPi);
  if (w >= kTwoPi) w -= kTwoPi;
  if (w < 0.0) w = 0.0;
  return w;
}

/// Sinusoidal drive: i(φ) = offset + amplitude · sin φ, with φ = 2π f t.
struct DriveWaveform {
  double offset = 0.0025;
  double amplitude = 0.028;
  double frequency = 60.0;

  double at(double phase) const { return offset + amplitude * std::sin(phase); }
  double period() const { return 1.0 / frequency; }
};

/// Linear time-invariant plant from drive volts to diopters. The rest power
/// is the lens power at zero drive and enters additively.
struct LTIResponse {
  double dc_gain = 1.0;
  double cutoff = std::numeric_limits<double>::infinity();
  int order = 2;
  double rest_power = 0.0;

  /// Complex gain at `f` relative to the dc gain.
  std::complex<double> transfer(double f) const {
    if (std::isinf(cutoff)) return {1.0, 0.0};
    const double r = f / cutoff;
    if (order == 1) return 1.0 / std::complex<double>(1.0, r);
    // Butterworth second order
    return 1.0 / std::complex<double>(1.0 - r * r, std::numbers::sqrt2 * r);
  }
  double attenuation(double f) const { return std::abs(transfer(f)); }
  double phase_lag(double f) const { return -std::arg(transfer(f)); }

  void validate() const {
    if (!(dc_gain > 0.0) || !std::isfinite(dc_gain)) throw ArgumentError("LTI gain must be > 0");
    if (!(cutoff > 0.0)) throw ArgumentError("LTI cutoff must be > 0");
    if (order != 1 && order != 2) throw ArgumentError("LTI order must be 1 or 2");
    if (!std::isfinite(rest_power)) throw ArgumentError("LTI rest power must be finite");
  }
};

/// One cycle of lens power sampled against drive phase.
class PowerWaveform {
 public:
  struct Sample {
    double phase;
    double power;
  };

  static constexpr std::size_t kMinSamples = 16;
  static constexpr double kMaxGap = std::numbers::pi / 4.0;

  PowerWaveform() = default;

  PowerWaveform(std::vector<Sample> samples, double period) : samples_(std::move(samples)), period_(period) {
    if (!(period_ > 0.0) || !std::isfinite(period_)) throw ArgumentError("waveform period must be > 0");
    validate();
  }

  const std::vector<Sample>& samples() const { return samples_; }
  std::size_t size() const { return samples_.size(); }
  double period() const { return period_; }
  double frequency() const { return 1.0 / period_; }

  double min_power() const { return samples_[min_index_].power; }
  double max_power() const { return samples_[max_index_].power; }
  double min_phase() const { return samples_[min_index_].phase; }
  double max_phase() const { return samples_[max_index_].phase; }
  std::size_t min_index() const { return min_index_; }
  std::size_t max_index() const { return max_index_; }

  /// Power at any phase by linear interpolation; wraps modulo 2π.
  Diopter power_at(double phase) const {
    const double psi = wrap_phase(phase);
    const auto it = std::upper_bound(samples_.begin(), samples_.end(), psi,
                                     [](double p, const Sample& s) { return p < s.phase; });
    std::size_t i;
    double phi0;
    if (it == samples_.begin()) {
      i = samples_.size() - 1;
      phi0 = samples_[i].phase - kTwoPi;
    } else {
      i = static_cast<std::size_t>(it - samples_.begin()) - 1;
      phi0 = samples_[i].phase;
    }
    const std::size_t j = (i + 1) % samples_.size();
    const double phi1 = j == 0 ? samples_[0].phase + kTwoPi : samples_[j].phase;
    const double t = (psi - phi0) / (phi1 - phi0);
    return Diopter{(1.0 - t) * samples_[i].power + t * samples_[j].power};
  }

  Diopter power_at_time(double t) const { return power_at(kTwoPi * t / period_); }

  enum class Segment { Up, Down };

  /// Phase on the requested monotone segment where the power equals `v`.
  double phase_for_power(Diopter v, Segment seg) const {
    const double lo = min_power();
    const double hi = max_power();
    if (!(v.value >= lo && v.value <= hi))
      throw RangeError("power " + std::to_string(v.value) + " D outside waveform range [" + std::to_string(lo) +
                       ", " + std::to_string(hi) + "]");
    const std::size_t n = samples_.size();
    const std::size_t start = seg == Segment::Up ? min_index_ : max_index_;
    const std::size_t stop = seg == Segment::Up ? max_index_ : min_index_;
    if (samples_[start].power == v.value) return samples_[start].phase;
    const bool up = seg == Segment::Up;
    for (std::size_t k = start; k != stop; k = (k + 1) % n) {
      const std::size_t j = (k + 1) % n;
      const double a = samples_[k].power;
      const double b = samples_[j].power;
      const bool inside = up ? (a <= v.value && v.value <= b) : (b <= v.value && v.value <= a);
      if (!inside || a == b) continue;
      if (v.value == b) return samples_[j].phase;
      const double phi0 = samples_[k].phase;
      const double phi1 = j == 0 ? samples_[0].phase + kTwoPi : samples_[j].phase;
      const double t = (v.value - a) / (b - a);
      return wrap_phase(phi0 + t * (phi1 - phi0));
    }
    return samples_[stop].phase;
  }

  /// Time within the period (seconds) for `phase_for_power`.
  double time_for_power(Diopter v, Segment seg) const { return phase_for_power(v, seg) / kTwoPi * period_; }

 private:
  void validate() {
    const std::size_t n = samples_.size();
    if (n < kMinSamples)
      throw FormatError("waveform needs at least " + std::to_string(kMinSamples) + " samples, got " +
                        std::to_string(n));
    for (std::size_t i = 0; i < n; ++i) {
      const auto& s = samples_[i];
      if (!std::isfinite(s.phase) || !std::isfinite(s.power)) throw FormatError("non-finite value", i);
      if (s.phase < 0.0 || s.phase >= kTwoPi) throw FormatError("phase outside [0, 2pi)", i);
      if (i > 0 && !(s.phase > samples_[i - 1].phase)) throw FormatError("phases must be strictly increasing", i);
      if (i > 0 && s.phase - samples_[i - 1].phase > kMaxGap) throw FormatError("incomplete cycle: phase gap", i);
    }
    if (samples_.front().phase + kTwoPi - samples_.back().phase > kMaxGap)
      throw FormatError("incomplete cycle: samples do not cover the wrap-around", n - 1);

    // A unimodal cycle changes slope sign exactly twice, cyclically.
    int last_sign = 0;
    int first_sign = 0;
    std::size_t changes = 0;
    std::size_t offending = FormatError::npos;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = samples_[(i + 1) % n].power - samples_[i].power;
      const int sign = (d > 0.0) - (d < 0.0);
      if (sign == 0) continue;
      if (first_sign == 0) first_sign = sign;
      if (last_sign != 0 && sign != last_sign) {
        ++changes;
        if (changes > 2 && offending == FormatError::npos) offending = i;
      }
      last_sign = sign;
    }
    if (first_sign != 0 && last_sign != first_sign) ++changes;
    if (changes != 2)
      throw FormatError(changes < 2 ? "waveform has no distinct maximum and minimum"
                                    : "waveform has more than one maximum or minimum",
                        offending);

    min_index_ = static_cast<std::size_t>(
        std::min_element(samples_.begin(), samples_.end(),
                         [](const Sample& a, const Sample& b) { return a.power < b.power; }) -
        samples_.begin());
    max_index_ = static_cast<std::size_t>(
        std::max_element(samples_.begin(), samples_.end(),
                         [](const Sample& a, const Sample& b) { return a.power < b.power; }) -
        samples_.begin());
  }

  std::vector<Sample> samples_;
  double period_ = 1.0 / 60.0;
  std::size_t min_index_ = 0;
  std::size_t max_index_ = 0;
};

using Segment = PowerWaveform::Segment;

inline const char* to_string(Segment s) { return s == Segment::Up ? "up" : "down"; }

/// Steady-state lens power over one drive cycle, sampled at `resolution`
/// evenly spaced phases starting at 0.
inline PowerWaveform simulate_response(const DriveWaveform& drive, const LTIResponse& lti,
                                       std::size_t resolution = 1024) {
  if (resolution < PowerWaveform::kMinSamples) throw ArgumentError("resolution must be >= 16");
  if (!(drive.frequency > 0.0)) throw ArgumentError("drive frequency must be > 0");
  if (drive.amplitude < 0.0) throw ArgumentError("drive amplitude must be >= 0");
  lti.validate();
  const double mean = lti.rest_power + lti.dc_gain * drive.offset;
  const double amp = lti.dc_gain * lti.attenuation(drive.frequency) * drive.amplitude;
  const double lag = lti.phase_lag(drive.frequency);
  std::vector<PowerWaveform::Sample> out(resolution);
  for (std::size_t k = 0; k < resolution; ++k) {
    const double phi = kTwoPi * static_cast<double>(k) / static_cast<double>(resolution);
    out[k] = {phi, mean + amp * std::sin(phi - lag)};
  }
  return PowerWaveform(std::move(out), drive.period());
}

/// Chooses gain and rest power so that `drive` through a low-pass of the
/// given order and cutoff spans exactly `target`.
inline LTIResponse fit_plant(const DriveWaveform& drive, const optics::SweepRange& target, int order, double cutoff) {
  if (!(drive.amplitude > 0.0)) throw ArgumentError("drive amplitude must be > 0");
  LTIResponse lti;
  lti.order = order;
  lti.cutoff = cutoff;
  const double half = 0.5 * target.extent();
  const double mean = 0.5 * (target.v_low.value + target.v_high.value);
  lti.dc_gain = half / (lti.attenuation(drive.frequency) * drive.amplitude);
  lti.rest_power = mean - lti.dc_gain * drive.offset;
  lti.validate();
  return lti;
}

/// The synthetic plant used by default: second-order low-pass at 200 Hz,
/// scaled so the calibrated 2.5 mV / 28 mV, 60 Hz drive sweeps -1 D .. 2 D.
inline LTIResponse default_plant() {
  return fit_plant(DriveWaveform{}, {Diopter{-1.0}, Diopter{2.0}}, 2, 200.0);
}

/// Offset and amplitude whose steady-state response spans `target`.
inline DriveWaveform calibrate_drive(const optics::SweepRange& target, const LTIResponse& lti, double frequency = 60.0,
                                     double power_bound = kDefaultPowerBound, std::size_t resolution = 1024) {
  lti.validate();
  if (!target.v_low.within(power_bound) || !target.v_high.within(power_bound))
    throw InfeasibleError("target sweep exceeds the +-" + std::to_string(power_bound) + " D lens range");
  if (target.v_high < target.v_low) throw ArgumentError("target sweep is inverted");
  DriveWaveform d;
  d.frequency = frequency;
  const double half = 0.5 * target.extent();
  const double mean = 0.5 * (target.v_low.value + target.v_high.value);
  d.offset = (mean - lti.rest_power) / lti.dc_gain;
  d.amplitude = half / (lti.dc_gain * lti.attenuation(frequency));
  if (half > 0.0) {
    const auto check = simulate_response(d, lti, resolution);
    if (std::abs(check.min_power() - target.v_low.value) > 0.01 ||
        std::abs(check.max_power() - target.v_high.value) > 0.01)
      throw InfeasibleError("calibrated drive misses the target sweep by more than 0.01 D");
  }
  return d;
}

/// Builds a waveform from measured (phase, power) records.
inline PowerWaveform load_measured_waveform(std::vector<PowerWaveform::Sample> records, double frequency = 60.0) {
  if (!(frequency > 0.0)) throw ArgumentError("frequency must be > 0");
  return PowerWaveform(std::move(records), 1.0 / frequency);
}

/// Reads "phase_radians,power_diopters" CSV; blank lines and lines starting
/// with '#' are skipped. Row numbers in errors count data rows from 0.
inline std::vector<PowerWaveform::Sample> read_waveform_csv(std::istream& in) {
  std::vector<PowerWaveform::Sample> out;
  std::string line;
  bool header_seen = false;
  auto parse = [](std::string_view s, double& v) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    return ec == std::errc{} && p == s.data() + s.size();
  };
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    if (!header_seen) {
      header_seen = true;
      if (line.find("phase") != std::string::npos) continue;
    }
    const auto comma = line.find(',');
    PowerWaveform::Sample s{};
    if (comma == std::string::npos || !parse(std::string_view(line).substr(0, comma), s.phase) ||
        !parse(std::string_view(line).substr(comma + 1), s.power))
      throw FormatError("expected 'phase,power': '" + line + "'", out.size());
    out.push_back(s);
  }
  return out;
}

inline void write_waveform_csv(std::ostream& out, const PowerWaveform& w) {
  out << "phase_radians,power_diopters\n";
  char buf[64];
  for (const auto& s : w.samples()) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g\n", s.phase, s.power);
    out << buf;
  }
}

}  // namespace mfpm::etl
