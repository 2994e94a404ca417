#pragma once

#include <stdexcept>
#include <string>

namespace rvio {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class FeatureAtInfinity : public Error {
 public:
  using Error::Error;
};

class BehindCamera : public Error {
 public:
  using Error::Error;
};

class StaleStamp : public Error {
 public:
  using Error::Error;
};

class StreamGap : public Error {
 public:
  using Error::Error;
};

class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

class DegenerateFacet : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace rvio
