#include "mcc/error.hpp"

namespace mcc {

const char* error_kind_name(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::LengthMismatch: return "LengthMismatch";
    case ErrorKind::SupportMismatch: return "SupportMismatch";
    case ErrorKind::LabelOutOfRange: return "LabelOutOfRange";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::InvalidK: return "InvalidK";
    case ErrorKind::InvalidPermutation: return "InvalidPermutation";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::DuplicateClass: return "DuplicateClass";
    case ErrorKind::MissingClass: return "MissingClass";
    case ErrorKind::AlignmentMismatch: return "AlignmentMismatch";
    case ErrorKind::MissingClassParam: return "MissingClassParam";
    case ErrorKind::EmptyNodeSet: return "EmptyNodeSet";
    case ErrorKind::MissingPosteriors: return "MissingPosteriors";
    case ErrorKind::NonPDCovariance: return "NonPDCovariance";
    case ErrorKind::BadMagic: return "BadMagic";
    case ErrorKind::TruncatedFile: return "TruncatedFile";
    case ErrorKind::CountMismatch: return "CountMismatch";
    case ErrorKind::IoError: return "IoError";
    case ErrorKind::HeaderMismatch: return "HeaderMismatch";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::FormulaMismatch: return "FormulaMismatch";
    case ErrorKind::ViolationFound: return "ViolationFound";
    case ErrorKind::ConfigError: return "ConfigError";
  }
  return "UnknownError";
}

}  // namespace mcc
