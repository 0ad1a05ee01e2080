#pragma once

#include <stdexcept>
#include <string>

namespace stitchlab {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ArgumentError : Error {
  using Error::Error;
};

// Dataset file missing, truncated, or otherwise unreadable.
struct IngestionError : Error {
  using Error::Error;
};

// A dataset record violates the binary format (e.g. label byte >= 10).
struct CorruptRecordError : Error {
  using Error::Error;
};

struct ShapeError : Error {
  using Error::Error;
};

struct GeometryError : Error {
  using Error::Error;
};

struct AssemblyError : Error {
  using Error::Error;
};

struct TrainingFailure : Error {
  TrainingFailure(const std::string& msg, long step) : Error(msg), step(step) {}
  long step;
};

struct CheckpointError : Error {
  using Error::Error;
};

struct IncompleteMatrixError : Error {
  using Error::Error;
};

}  // namespace stitchlab
