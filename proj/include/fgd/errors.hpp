// Copyright 2026 The FGD Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace fgd {

/// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shape or width mismatch; the message names the op and the offending shapes.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Value outside an op's mathematical domain (log of non-positive, non-finite).
class DomainError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Input longer than the model or format allows. No silent truncation.
class LengthError : public Error {
 public:
  using Error::Error;
};

class IndexError : public Error {
 public:
  using Error::Error;
};

/// A loss or batch needs negatives that have not been mined.
class MiningRequiredError : public Error {
 public:
  using Error::Error;
};

/// Fingerprint or lineage mismatch between persisted artifacts.
class IntegrityError : public Error {
 public:
  using Error::Error;
};

class TrainingError : public Error {
 public:
  using Error::Error;
};

class DegenerateRangeError : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

}  // namespace fgd
