#pragma once

#include <stdexcept>
#include <string>

namespace dpdn {

// Base for all library errors so callers can catch the whole family at once.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// geometry
struct DegenerateSixD : Error {
  using Error::Error;
};
struct DegenerateConfiguration : Error {
  using Error::Error;
};
struct InvalidRotation : Error {
  using Error::Error;
};
struct InvalidPose : Error {
  using Error::Error;
};

// tensorcore
struct ShapeMismatch : Error {
  using Error::Error;
};

// objectives
struct LengthMismatch : Error {
  using Error::Error;
};
struct MissingLabels : Error {
  using Error::Error;
};
struct EmptyBatch : Error {
  using Error::Error;
};

// datagen
struct InvalidSpec : Error {
  using Error::Error;
};
struct DegeneratePose : Error {
  using Error::Error;
};
struct InsufficientData : Error {
  using Error::Error;
};

// evalharness
struct EmptyRecords : Error {
  using Error::Error;
};

// cli / io
struct IoError : Error {
  using Error::Error;
};
struct ConfigError : Error {
  using Error::Error;
};
struct CheckpointMismatch : Error {
  using Error::Error;
};
struct NumericalDivergence : Error {
  using Error::Error;
};

}  // namespace dpdn
