#pragma once

#include <stdexcept>
#include <string>

namespace fdp {

// Base class for every error raised by the library. The category maps onto the
// process exit codes used by the command-line tool.
class Error : public std::runtime_error {
 public:
  enum class Category { kUsage = 1, kData = 2, kNumerical = 3 };

  Error(Category category, const std::string& what)
      : std::runtime_error(what), category_(category) {}

  Category category() const noexcept { return category_; }
  int exit_code() const noexcept { return static_cast<int>(category_); }

 private:
  Category category_;
};

// Bad arguments or configuration supplied by the caller.
class UsageError : public Error {
 public:
  explicit UsageError(const std::string& what) : Error(Category::kUsage, what) {}
};

// Tensor extents that do not fit an operation's contract.
class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& what) : Error(Category::kUsage, what) {}
};

// Unreadable, malformed or inconsistent input files.
class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(Category::kData, what) {}
};

// NaN/Inf produced by an operation, or a failed numerical verification.
class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& what) : Error(Category::kNumerical, what) {}
};

}  // namespace fdp
