#ifndef POLARSCAN_ERRORS_HPP
#define POLARSCAN_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace polarscan {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input bytes/text do not follow the expected file layout.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// A value inside a well-formed record could not be decoded.
class ParseError : public Error {
 public:
  using Error::Error;
};

/// Decoded data violates a value constraint (e.g. non-finite floats).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Input is structurally fine but too small or degenerate to process.
class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

/// Dimension mismatch between two operands.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A named item (channel, key) is not present.
class LookupError : public Error {
 public:
  using Error::Error;
};

/// Descriptors and poses could not be matched by frame id.
class JoinError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration values or combinations.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace polarscan

#endif  // POLARSCAN_ERRORS_HPP
