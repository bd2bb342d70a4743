#pragma once

#include <stdexcept>
#include <string>

namespace pheno {

// Error categories map one-to-one onto CLI exit codes.
enum class ErrorKind {
  config = 2,
  data = 3,
  training = 4,
  store = 5,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }
  int exit_code() const noexcept { return static_cast<int>(kind_); }

 private:
  ErrorKind kind_;
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& what) : Error(ErrorKind::config, what) {}
};

// Malformed or inconsistent input data (shapes, ranges, schemas).
struct InputError : Error {
  explicit InputError(const std::string& what) : Error(ErrorKind::data, what) {}
};

struct NormalizationError : Error {
  NormalizationError(const std::string& what, int plate)
      : Error(ErrorKind::data, what), plate_(plate) {}
  int plate() const noexcept { return plate_; }

 private:
  int plate_;
};

struct DimensionError : Error {
  explicit DimensionError(const std::string& what) : Error(ErrorKind::data, what) {}
};

struct RangeError : Error {
  explicit RangeError(const std::string& what) : Error(ErrorKind::data, what) {}
};

struct TrainingError : Error {
  TrainingError(const std::string& what, int epoch = -1, std::string param = {})
      : Error(ErrorKind::training, what), epoch_(epoch), param_(std::move(param)) {}
  int epoch() const noexcept { return epoch_; }
  const std::string& parameter() const noexcept { return param_; }

 private:
  int epoch_;
  std::string param_;
};

struct StoreError : Error {
  explicit StoreError(const std::string& what) : Error(ErrorKind::store, what) {}
};

}  // namespace pheno
