#pragma once

#include <stdexcept>
#include <string>

namespace mshoot {

/// Base class for every error raised by the library. `kind()` is a stable,
/// machine-parsable tag used by the CLI's one-line error output.
class Error : public std::runtime_error {
public:
  Error(std::string kind, const std::string &message)
      : std::runtime_error(message), kind_(std::move(kind)) {}

  const std::string &kind() const noexcept { return kind_; }

private:
  std::string kind_;
};

/// Integration diverged: a state or stage became non-finite or exceeded the
/// magnitude bound. `time()` is the first offending time.
class BlowUp : public Error {
public:
  explicit BlowUp(double time, int interval = -1);

  double time() const noexcept { return time_; }
  /// Shooting interval the blow-up happened on, or -1 when not applicable.
  int interval() const noexcept { return interval_; }

  BlowUp with_interval(int interval) const { return BlowUp(time_, interval); }

private:
  double time_;
  int interval_;
};

class OutOfRange : public Error {
public:
  explicit OutOfRange(const std::string &message)
      : Error("OutOfRange", message) {}
};

class DimensionError : public Error {
public:
  explicit DimensionError(const std::string &message)
      : Error("DimensionError", message) {}
};

class SingularKkt : public Error {
public:
  explicit SingularKkt(double smallest_pivot);
  double smallest_pivot() const noexcept { return pivot_; }

private:
  double pivot_;
};

class LineSearchFailure : public Error {
public:
  explicit LineSearchFailure(const std::string &message)
      : Error("LineSearchFailure", message) {}
};

class ParseError : public Error {
public:
  ParseError(int line, const std::string &message);
  int line() const noexcept { return line_; }

private:
  int line_;
};

class IoError : public Error {
public:
  explicit IoError(const std::string &message) : Error("IoError", message) {}
};

class ConfigError : public Error {
public:
  explicit ConfigError(const std::string &message)
      : Error("ConfigError", message) {}
};

class UninitializableState : public Error {
public:
  explicit UninitializableState(int component);
  int component() const noexcept { return component_; }

private:
  int component_;
};

class StudyDegenerate : public Error {
public:
  explicit StudyDegenerate(int converged_runs);
};

class GradMismatch : public Error {
public:
  GradMismatch(double max_rel_error, const std::string &where);
  double max_rel_error() const noexcept { return err_; }

private:
  double err_;
};

} // namespace mshoot
