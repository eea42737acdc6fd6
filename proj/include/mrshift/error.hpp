#pragma once

#include <stdexcept>
#include <string>

namespace mrshift {

// Base of every exception thrown by the library. The CLI maps the
// subclasses onto process exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor rank/extent does not fit the operation.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// A parameter is outside its documented range (also used for bad configs).
class ParamError : public Error {
 public:
  using Error::Error;
};

// Malformed or truncated file contents.
class FormatError : public Error {
 public:
  using Error::Error;
};

// Missing files, inconsistent datasets, bad labels.
class DataError : public Error {
 public:
  using Error::Error;
};

// A metric that is not defined for its input (e.g. AUROC of one class).
class MetricError : public Error {
 public:
  using Error::Error;
};

// Loss or parameters became NaN/Inf during training.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

}  // namespace mrshift
