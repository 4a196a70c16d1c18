#pragma once

#include <stdexcept>
#include <string>

namespace quicksilver {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Two operands live on different grids.
class GeometryMismatch : public Error {
 public:
  explicit GeometryMismatch(const std::string& what) : Error("geometry mismatch: " + what) {}
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Non-finite values appeared while integrating the geodesic equations.
class ShootingDiverged : public Error {
 public:
  ShootingDiverged() : Error("shooting diverged (reduce step size)") {}
};

/// Malformed or unreadable QSF / QSNET file. `kind()` distinguishes the failure.
class FormatError : public Error {
 public:
  enum class Kind { Io, BadMagic, BadHeader, DimensionMismatch, PayloadSizeMismatch, Truncated };

  FormatError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

}  // namespace quicksilver
