#pragma once

#include <stdexcept>
#include <string>

namespace ssgam {

// Base of all library errors. `module()` names the component that raised it
// so the CLI can tag messages ("design: ...").
class Error : public std::runtime_error {
 public:
  Error(std::string module, const std::string& what)
      : std::runtime_error(what), module_(std::move(module)) {}
  const std::string& module() const noexcept { return module_; }

 private:
  std::string module_;
};

class FormulaError : public Error {
 public:
  explicit FormulaError(const std::string& what, std::size_t offset = npos)
      : Error("formula", what), offset_(offset) {}
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);
  // Byte offset into the formula text, or npos when not tied to a position.
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error("data", what) {}
};

class DesignError : public Error {
 public:
  explicit DesignError(const std::string& what) : Error("design", what) {}
};

class SamplerError : public Error {
 public:
  explicit SamplerError(const std::string& what) : Error("sampler", what) {}
};

class SummaryError : public Error {
 public:
  explicit SummaryError(const std::string& what) : Error("summary", what) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error("cli", what) {}
};

class ArchiveError : public Error {
 public:
  explicit ArchiveError(const std::string& what) : Error("cli", what) {}
};

}  // namespace ssgam
