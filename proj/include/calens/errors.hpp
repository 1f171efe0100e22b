#pragma once

#include <stdexcept>

namespace calens {

// Base class for all toolkit errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Two voxel arrays do not live on the same sample grid.
class GridMismatchError : public Error {
 public:
  using Error::Error;
};

// Label and prediction disagree on the number of classes.
class ClassCountMismatchError : public Error {
 public:
  using Error::Error;
};

class InvalidCountError : public Error {
 public:
  using Error::Error;
};

class InvalidGridError : public Error {
 public:
  using Error::Error;
};

class InvalidArgumentError : public Error {
 public:
  using Error::Error;
};

class InvalidBandwidthError : public Error {
 public:
  using Error::Error;
};

// Training produced a non-finite loss or parameter.
class DivergedTrainingError : public Error {
 public:
  using Error::Error;
};

class TooFewSamplesError : public Error {
 public:
  using Error::Error;
};

class UnsupportedModelKindError : public Error {
 public:
  using Error::Error;
};

// Guards the 2^n pattern space of the calibration system.
class TooManyModelsError : public Error {
 public:
  using Error::Error;
};

class LengthMismatchError : public Error {
 public:
  using Error::Error;
};

class CorruptHeaderError : public Error {
 public:
  using Error::Error;
};

class UnsupportedVersionError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace calens
