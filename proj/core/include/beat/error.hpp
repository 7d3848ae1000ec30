#pragma once

#include <stdexcept>
#include <string>

namespace beat {

// Base of every error thrown by the toolkit. `kind()` is a short stable tag
// that the CLI prints alongside the message.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(what), kind_(std::move(kind)) {}
  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& what) : Error("shape", what) {}
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line, std::size_t offset)
      : Error("parse", what + " (line " + std::to_string(line) + ", offset " +
                           std::to_string(offset) + ")"),
        line_(line),
        offset_(offset) {}
  std::size_t line() const noexcept { return line_; }
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t line_;
  std::size_t offset_;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error("config", what) {}
};

class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what) : Error("numeric", what) {}
};

class DigestError : public Error {
 public:
  explicit DigestError(const std::string& what) : Error("digest", what) {}
};

class ArchitectureError : public Error {
 public:
  explicit ArchitectureError(const std::string& what) : Error("architecture", what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error("io", what) {}
};

}  // namespace beat
