#pragma once

#include <stdexcept>
#include <string>

namespace shield {

// Base for every failure raised by the library. The CLI maps these to exit
// code 2; anything else escaping is a bug.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class IndexError : public Error {
 public:
  using Error::Error;
};

class VocabularyError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

class SimilarityUndefined : public Error {
 public:
  using Error::Error;
};

class ForgeError : public Error {
 public:
  using Error::Error;
};

class DetectionError : public Error {
 public:
  using Error::Error;
};

class DefenseError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Raised by the harness; carries the pipeline stage that failed.
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& what)
      : Error("[" + stage + "] " + what), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

}  // namespace shield
