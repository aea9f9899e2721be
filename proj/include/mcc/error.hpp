#pragma once

#include <stdexcept>
#include <string>

namespace mcc {

enum class ErrorKind {
  LengthMismatch,
  SupportMismatch,
  LabelOutOfRange,
  InvalidArgument,
  InvalidK,
  InvalidPermutation,
  ParseError,
  DuplicateClass,
  MissingClass,
  AlignmentMismatch,
  MissingClassParam,
  EmptyNodeSet,
  MissingPosteriors,
  NonPDCovariance,
  BadMagic,
  TruncatedFile,
  CountMismatch,
  IoError,
  HeaderMismatch,
  ShapeMismatch,
  FormulaMismatch,
  ViolationFound,
  ConfigError,
};

const char* error_kind_name(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(error_kind_name(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void raise(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

inline void require(bool ok, ErrorKind kind, const std::string& what) {
  if (!ok) raise(kind, what);
}

}  // namespace mcc
