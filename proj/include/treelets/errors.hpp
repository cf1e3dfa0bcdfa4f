#ifndef TREELETS_ERRORS_HPP
#define TREELETS_ERRORS_HPP

#include <cstddef>
#include <stdexcept>
#include <string>

namespace treelets {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InsufficientDataError : public Error {
 public:
  using Error::Error;
};

class InvalidDataError : public Error {
 public:
  using Error::Error;
};

class IndexError : public Error {
 public:
  using Error::Error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A variance at or below the floor was met where a positive one is required.
/// `index()` is 0-based; the message reports it 1-based.
class DegenerateVarianceError : public Error {
 public:
  explicit DegenerateVarianceError(std::size_t index)
      : Error("degenerate variance at index " + std::to_string(index + 1)),
        index_(index) {}

  std::size_t index() const noexcept { return index_; }

 private:
  std::size_t index_;
};

class DegenerateConstructionError : public Error {
 public:
  using Error::Error;
};

class SingularFitError : public Error {
 public:
  using Error::Error;
};

class EmptySelectionError : public Error {
 public:
  using Error::Error;
};

}  // namespace treelets

#endif  // TREELETS_ERRORS_HPP
