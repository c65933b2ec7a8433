#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace lumaforge {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// File system or codec failure (missing file, unreadable raster, bad JSON on disk).
class IoError : public Error {
public:
  using Error::Error;
};

/// Invalid configuration or arguments.
class ConfigError : public Error {
public:
  using Error::Error;
};

/// Data that violates a structural contract. Carries every problem found.
class DataError : public Error {
public:
  explicit DataError(std::vector<std::string> problems)
      : Error(join(problems)), problems_(std::move(problems)) {}

  const std::vector<std::string>& problems() const noexcept { return problems_; }

private:
  static std::string join(const std::vector<std::string>& items) {
    std::string out;
    for (const auto& s : items) {
      if (!out.empty()) out += "; ";
      out += s;
    }
    return out.empty() ? std::string("invalid data") : out;
  }

  std::vector<std::string> problems_;
};

}  // namespace lumaforge
