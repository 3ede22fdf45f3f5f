#pragma once

#include <stdexcept>
#include <string>

namespace iftsplat {

struct EmptyScene : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DegenerateRotation : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct InvalidDiag : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NonFiniteBreakdown : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NonFiniteEval : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TooLarge : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct SingularSystem : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct MissingInput : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace iftsplat
