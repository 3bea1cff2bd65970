#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace mfpm {

// Non-positive distance, zero virtual distance and similar math-domain faults.
struct DomainError : std::domain_error {
  using std::domain_error::domain_error;
};

// The requested power would form a real image on the observer side, so no
// virtual image exists.
struct RealImageError : DomainError {
  using DomainError::DomainError;
};

struct ArgumentError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct RangeError : std::out_of_range {
  using std::out_of_range::out_of_range;
};

// Target exceeds what the hardware (or the frame budget) can deliver.
struct InfeasibleError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed input table or file. row() is the zero-based data row, or npos
// when the fault is not tied to a single row.
class FormatError : public std::runtime_error {
 public:
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

  explicit FormatError(const std::string& what, std::size_t row = npos)
      : std::runtime_error(row == npos ? what : what + " (row " + std::to_string(row) + ")"),
        row_(row) {}

  std::size_t row() const noexcept { return row_; }

 private:
  std::size_t row_;
};

class SchedulingConflict : public std::runtime_error {
 public:
  explicit SchedulingConflict(std::vector<std::string> conflicts)
      : std::runtime_error(join(conflicts)), conflicts_(std::move(conflicts)) {}

  const std::vector<std::string>& conflicts() const noexcept { return conflicts_; }

 private:
  static std::string join(const std::vector<std::string>& items) {
    std::string out = "scheduling conflict";
    for (const auto& s : items) out += "\n  " + s;
    return out;
  }
  std::vector<std::string> conflicts_;
};

// Scene / config errors carry the originating file (and line when known).
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& what, std::string file = {}, int line = 0)
      : std::runtime_error(format(what, file, line)), file_(std::move(file)), line_(line) {}

  const std::string& file() const noexcept { return file_; }
  int line() const noexcept { return line_; }

 private:
  static std::string format(const std::string& what, const std::string& file, int line) {
    if (file.empty()) return what;
    return file + (line > 0 ? ":" + std::to_string(line) : std::string{}) + ": " + what;
  }
  std::string file_;
  int line_;
};

}  // namespace mfpm
