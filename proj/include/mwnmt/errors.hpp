#pragma once

#include <stdexcept>
#include <string>

namespace mwnmt {

// All library failures derive from Error so callers can catch one type.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shape or dimension disagreement between operands.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Value outside an operation's domain (empty softmax input, NaN, bad fraction).
class DomainError : public Error {
 public:
  using Error::Error;
};

// Token id or position out of range.
class IndexError : public Error {
 public:
  using Error::Error;
};

// Malformed or missing user input: files, corpora, line counts.
class InputError : public Error {
 public:
  using Error::Error;
};

// Inconsistent configuration: unknown languages, bad dims, unknown transforms.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Violated API contract (non-scalar loss, empty batch set).
class ContractError : public Error {
 public:
  using Error::Error;
};

class ChecksumError : public Error {
 public:
  using Error::Error;
};

class VersionError : public Error {
 public:
  using Error::Error;
};

// Non-finite loss or gradient during training.
class TrainingError : public Error {
 public:
  using Error::Error;
};

}  // namespace mwnmt
