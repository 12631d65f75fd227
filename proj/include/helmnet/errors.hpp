#pragma once

#include <stdexcept>
#include <string>

namespace helmnet {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual const char* kind() const noexcept { return "error"; }
};

class DimensionError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "dimension_error"; }
};

class SolverError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "solver_error"; }
};

class NumericalError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "numerical_error"; }
};

class ConfigError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "config_error"; }
};

class IngestionError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "ingestion_error"; }
};

}  // namespace helmnet
