#ifndef DINOVO_ERROR_HPP
#define DINOVO_ERROR_HPP

#include <stdexcept>
#include <string>

namespace dinovo {

/// Base class of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A precondition on an argument (shape, range, finiteness) was violated.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// The input geometry admits no unique answer (parallel rays, rank-deficient
/// epipolar system, no cheirality majority, ...).
class DegenerateGeometry : public Error {
 public:
  using Error::Error;
};

/// A file could not be read or did not follow its documented format.
class FormatError : public Error {
 public:
  using Error::Error;
};

}  // namespace dinovo

#endif  // DINOVO_ERROR_HPP
