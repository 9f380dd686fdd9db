#pragma once

#include <stdexcept>
#include <string>

namespace rnnc {

// Base class for everything this library throws on purpose.
class Error : public std::runtime_error {
  public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

class ShapeError : public Error {
  public:
    using Error::Error;
};

class RankError : public Error {
  public:
    using Error::Error;
};

class ArgumentError : public Error {
  public:
    using Error::Error;
};

class IngestionError : public Error {
  public:
    using Error::Error;
};

class VocabError : public Error {
  public:
    using Error::Error;
};

class IndexError : public Error {
  public:
    using Error::Error;
};

class NumericError : public Error {
  public:
    using Error::Error;
};

class DivergenceError : public Error {
  public:
    using Error::Error;
};

class CompatibilityError : public Error {
  public:
    using Error::Error;
};

// I/O failures (open, write, rename).
class StorageError : public Error {
  public:
    using Error::Error;
};

// Malformed model files. Subclasses distinguish what exactly was wrong.
class FormatError : public Error {
  public:
    using Error::Error;
};

class MagicError : public FormatError {
  public:
    using FormatError::FormatError;
};

class VersionError : public FormatError {
  public:
    using FormatError::FormatError;
};

class ChecksumError : public FormatError {
  public:
    using FormatError::FormatError;
};

}  // namespace rnnc
