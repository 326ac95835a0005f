// Copyright 2026 The s2tp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace s2tp {

/// Categories of failure. Each maps onto a distinct C API status code and
/// CLI exit code.
enum class ErrorKind {
  kDimension,
  kDegenerateMask,
  kContract,
  kIndex,
  kDegenerateAttention,
  kSequenceTooShort,
  kConfig,
  kIncompatibleCheckpoint,
  kKPrime,
  kIo,
  kDivergence,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

#define S2TP_DEFINE_ERROR(Name, Kind)                                \
  class Name : public Error {                                        \
   public:                                                           \
    explicit Name(const std::string& what) : Error(Kind, what) {}    \
  }

S2TP_DEFINE_ERROR(DimensionError, ErrorKind::kDimension);
S2TP_DEFINE_ERROR(DegenerateMaskError, ErrorKind::kDegenerateMask);
S2TP_DEFINE_ERROR(ContractError, ErrorKind::kContract);
S2TP_DEFINE_ERROR(IndexError, ErrorKind::kIndex);
S2TP_DEFINE_ERROR(DegenerateAttentionError, ErrorKind::kDegenerateAttention);
S2TP_DEFINE_ERROR(SequenceTooShortError, ErrorKind::kSequenceTooShort);
S2TP_DEFINE_ERROR(ConfigError, ErrorKind::kConfig);
S2TP_DEFINE_ERROR(IncompatibleCheckpointError, ErrorKind::kIncompatibleCheckpoint);
S2TP_DEFINE_ERROR(KPrimeError, ErrorKind::kKPrime);
S2TP_DEFINE_ERROR(IoError, ErrorKind::kIo);
S2TP_DEFINE_ERROR(DivergenceError, ErrorKind::kDivergence);

#undef S2TP_DEFINE_ERROR

}  // namespace s2tp
