#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace chronon {

/// Base class for all errors raised by the toolkit. The CLI maps these to
/// exit code 1 (analysis) or 2 (usage/config).
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Invalid argument or precondition violation (exit code 2 in the CLI).
class ArgumentError : public Error {
  public:
    using Error::Error;
};

/// Unreadable/unwritable file or OS-level I/O failure.
class IoError : public Error {
  public:
    using Error::Error;
};

/// Bad magic, version or header fields in a time-tag file.
class FormatError : public Error {
  public:
    using Error::Error;
};

/// File ends in the middle of a record.
class TruncationError : public Error {
  public:
    TruncationError(const std::string& what, std::uint64_t byte_offset)
        : Error(what), byte_offset_(byte_offset) {}
    std::uint64_t byte_offset() const { return byte_offset_; }

  private:
    std::uint64_t byte_offset_;
};

/// Config file syntax error or unknown key.
class ConfigError : public Error {
  public:
    using Error::Error;
};

/// Nonlinear fit failed to converge or produced unusable parameters.
class FitError : public Error {
  public:
    using Error::Error;
};

/// Multi-resolution peak search fell below the significance threshold.
/// Carries the per-stage diagnostics accumulated up to the failure.
class NoPeakError : public Error {
  public:
    NoPeakError(const std::string& what, std::string diagnostics)
        : Error(what), diagnostics_(std::move(diagnostics)) {}
    const std::string& diagnostics() const { return diagnostics_; }

  private:
    std::string diagnostics_;
};

/// Two-way sync arithmetic rejected its inputs (e.g. coarse offset
/// inconsistent with the measured one-way peak).
class ProtocolError : public Error {
  public:
    using Error::Error;
};

/// Density-matrix reconstruction failed.
class ReconstructionError : public Error {
  public:
    using Error::Error;
};

}  // namespace chronon
