#pragma once

#include <stdexcept>
#include <string>

namespace rawnet {

// Broad failure classes; the CLI maps each one to a process exit code.
enum class ErrorKind {
  config = 1,     // usage / configuration
  data = 2,       // unreadable or malformed inputs
  protocol = 3,   // train/test leakage, disjointness violations
  numeric = 4,    // non-finite values during training
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

#define RAWNET_DEFINE_ERROR(Name, Kind)                                   \
  class Name : public Error {                                             \
   public:                                                                \
    explicit Name(const std::string& what) : Error(ErrorKind::Kind, what) {} \
  };

RAWNET_DEFINE_ERROR(DecodeError, data)
RAWNET_DEFINE_ERROR(UnsupportedFormatError, data)
RAWNET_DEFINE_ERROR(ParseError, data)
RAWNET_DEFINE_ERROR(ArgumentError, config)
RAWNET_DEFINE_ERROR(ShapeError, config)
RAWNET_DEFINE_ERROR(ConfigError, config)
RAWNET_DEFINE_ERROR(CheckpointFormatError, data)
RAWNET_DEFINE_ERROR(IntegrityError, data)
RAWNET_DEFINE_ERROR(UninitializedStatsError, config)
RAWNET_DEFINE_ERROR(SplitError, data)
RAWNET_DEFINE_ERROR(CompositionError, data)
RAWNET_DEFINE_ERROR(ProtocolViolation, protocol)
RAWNET_DEFINE_ERROR(TrainingError, numeric)
RAWNET_DEFINE_ERROR(UndefinedMetricError, data)

#undef RAWNET_DEFINE_ERROR

}  // namespace rawnet
