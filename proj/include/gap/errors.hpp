#pragma once

#include <stdexcept>
#include <string>

namespace gap {

// Bad call-site inputs (out-of-range indices, dimension mismatches, invalid
// parameter combinations).
class ArgumentError : public std::invalid_argument {
public:
  explicit ArgumentError(const std::string& msg) : std::invalid_argument(msg) {}
};

// Malformed or version-mismatched files; messages name the offending line
// where one exists.
class FormatError : public std::runtime_error {
public:
  explicit FormatError(const std::string& msg) : std::runtime_error(msg) {}
};

// Invalid run configuration (unknown keys, inconsistent mode/source combos).
class ConfigError : public std::runtime_error {
public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Training diverged (non-finite loss); message carries the epoch index.
class TrainingError : public std::runtime_error {
public:
  explicit TrainingError(const std::string& msg) : std::runtime_error(msg) {}
};

// Operation refused outright (e.g. exhaustive search above its size guard).
class RefusalError : public std::runtime_error {
public:
  explicit RefusalError(const std::string& msg) : std::runtime_error(msg) {}
};

// Exit codes used by the CLI front end.
namespace exit_code {
inline constexpr int ok = 0;
inline constexpr int failure = 1;
inline constexpr int config = 2;
inline constexpr int format = 3;
inline constexpr int training = 4;
}  // namespace exit_code

}  // namespace gap
