#pragma once

#include <stdexcept>
#include <string>

namespace turtle {

// File/format errors. Messages carry the byte offset or row that failed.
struct MalformedHeader : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DimensionMismatch : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NonFiniteValue : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct TooFewSamples : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Shape/contract errors between in-memory structures.
struct ShapeMismatch : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ViewCountMismatch : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct LengthMismatch : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Numerical failures.
struct NonFiniteGradient : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DivergenceDetected : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Margin oracle.
struct NotSeparable : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NoSeparableLabeling : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Selection.
struct AllRunsDegenerate : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace turtle
