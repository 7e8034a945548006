#pragma once

#include <stdexcept>
#include <string>

namespace nldf {

/// Invalid configuration value (bad K, N not divisible by M, ...).
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Runtime value outside an operation's domain (negative density, out-of-frame pixel, ...).
class DomainError : public std::runtime_error {
 public:
  explicit DomainError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace nldf
