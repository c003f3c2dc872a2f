#pragma once

#include <stdexcept>
#include <string>

namespace fmprune {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed config text, weights stream, image or manifest.
class ParseError : public Error {
 public:
  using Error::Error;
};

// Tensor shape does not match what a layer or operation expects.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Structurally valid input that describes an unusable model.
class ModelError : public Error {
 public:
  using Error::Error;
};

// A file could not be opened, read or written.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace fmprune
