// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace supar {

/// A caller broke a documented precondition (shape rules, scalar loss, ...).
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// A numeric argument is outside the admissible domain.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

class UnsupportedPrimitive : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Mask sampling produced no active positions.
class DegenerateMask : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed configuration text or an unknown key/value.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace supar
