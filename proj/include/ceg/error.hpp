#pragma once

#include <stdexcept>
#include <string>

namespace ceg {

enum class ErrorKind {
  parse,
  validation,
  unsupported_family,
  incomplete_model,
  resolution,
  non_intrinsic_evidence,
  contradiction,
  zero_support,
  capacity,
  structural,
};

const char* to_string(ErrorKind kind);

/// Base of every error the engine raises. The kind drives CLI exit codes.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Schema violation in a model or evidence document. `path()` is a JSON
/// pointer to the offending field.
class ParseError : public Error {
 public:
  ParseError(std::string path, const std::string& message)
      : Error(ErrorKind::parse, (path.empty() ? "" : path + ": ") + message),
        path_(std::move(path)) {}

  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& m) : Error(ErrorKind::validation, m) {}
};

class UnsupportedFamilyError : public Error {
 public:
  explicit UnsupportedFamilyError(const std::string& m)
      : Error(ErrorKind::unsupported_family, m) {}
};

class IncompleteModelError : public Error {
 public:
  explicit IncompleteModelError(const std::string& m)
      : Error(ErrorKind::incomplete_model, m) {}
};

class ResolutionError : public Error {
 public:
  explicit ResolutionError(const std::string& m) : Error(ErrorKind::resolution, m) {}
};

class NonIntrinsicEvidenceError : public Error {
 public:
  explicit NonIntrinsicEvidenceError(const std::string& m)
      : Error(ErrorKind::non_intrinsic_evidence, m) {}
};

class ContradictionError : public Error {
 public:
  explicit ContradictionError(const std::string& m) : Error(ErrorKind::contradiction, m) {}
};

class ZeroSupportError : public Error {
 public:
  explicit ZeroSupportError(const std::string& m) : Error(ErrorKind::zero_support, m) {}
};

class CapacityError : public Error {
 public:
  explicit CapacityError(const std::string& m) : Error(ErrorKind::capacity, m) {}
};

class StructuralError : public Error {
 public:
  explicit StructuralError(const std::string& m) : Error(ErrorKind::structural, m) {}
};

}  // namespace ceg
