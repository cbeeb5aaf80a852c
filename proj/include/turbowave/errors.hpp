// Copyright 2026 The TurboWave Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <stdexcept>
#include <string>

namespace turbowave {

// Base of every library error. kind() is a stable, machine-parsable class
// name that the CLI prints on failure.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(what), kind_(std::move(kind)) {}
  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

#define TURBOWAVE_DEFINE_ERROR(Name)                                   \
  class Name : public Error {                                          \
   public:                                                             \
    explicit Name(const std::string& what) : Error(#Name, what) {}     \
  }

TURBOWAVE_DEFINE_ERROR(InputError);      // rejected sample data
TURBOWAVE_DEFINE_ERROR(ConfigError);     // inconsistent configuration
TURBOWAVE_DEFINE_ERROR(ShapeError);      // tensor / length mismatch
TURBOWAVE_DEFINE_ERROR(LengthError);     // input too short
TURBOWAVE_DEFINE_ERROR(DecodeError);     // unreadable audio or archive
TURBOWAVE_DEFINE_ERROR(IntegrityError);  // checksum / version mismatch
TURBOWAVE_DEFINE_ERROR(StructureError);  // incompatible model structure
TURBOWAVE_DEFINE_ERROR(TrainingHalt);    // non-finite loss
TURBOWAVE_DEFINE_ERROR(IoError);         // unwritable path

#undef TURBOWAVE_DEFINE_ERROR

}  // namespace turbowave
