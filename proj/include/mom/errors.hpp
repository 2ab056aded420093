#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace mom {

// Shape disagreement between operands. Messages name the offending axes.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Invalid operation parameter (negative kernel width, eps <= 0, ...).
class ParameterError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// API misuse, e.g. calling backward with a loss recorded on another tape.
class UsageError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Bad input data: token ids out of vocabulary, modality ids out of range.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Invalid configuration. `field()` names the offending config key.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string field, const std::string& message)
      : std::runtime_error(field + ": " + message), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

class RangeError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Non-finite loss or gradient during training.
class NumericalAbort : public std::runtime_error {
 public:
  NumericalAbort(const std::string& message, std::size_t step, std::uint64_t batch_seed)
      : std::runtime_error(message), step_(step), batch_seed_(batch_seed) {}
  std::size_t step() const noexcept { return step_; }
  std::uint64_t batch_seed() const noexcept { return batch_seed_; }

 private:
  std::size_t step_;
  std::uint64_t batch_seed_;
};

// Two runs that cannot be compared (different modality sets, empty logs).
class IncompatibleRuns : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace mom
