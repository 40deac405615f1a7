#pragma once

#include <stdexcept>
#include <string>

namespace geomix {

/// Base class for all geomix failures.
struct Error : std::runtime_error {
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

struct NotPositiveDefinite : Error {
  using Error::Error;
};
struct DimensionMismatch : Error {
  using Error::Error;
};
struct InvalidGeometry : Error {
  using Error::Error;
};
struct PointOutsideMesh : Error {
  int point_index = -1;
  PointOutsideMesh(const std::string& what, int index)
      : Error(what), point_index(index) {}
};
struct DegenerateTriangle : Error {
  using Error::Error;
};
struct RankDeficientDesign : Error {
  using Error::Error;
};
struct ZeroResidual : Error {
  using Error::Error;
};
struct DegenerateComponent : Error {
  using Error::Error;
};
struct NoConvergence : Error {
  double gradient_norm = 0.0;
  NoConvergence(const std::string& what, double gnorm)
      : Error(what), gradient_norm(gnorm) {}
};
struct StepHalvingExhausted : Error {
  using Error::Error;
};
struct UnsupportedTransform : Error {
  using Error::Error;
};
struct NonPositiveCpo : Error {
  using Error::Error;
};
struct NumericalOverflow : Error {
  int point_index = -1;
  NumericalOverflow(const std::string& what, int index)
      : Error(what), point_index(index) {}
};
struct DegenerateTruth : Error {
  using Error::Error;
};
struct InsufficientOrbits : Error {
  using Error::Error;
};
struct FoldTooSmall : Error {
  using Error::Error;
};
struct EmptyDesign : Error {
  using Error::Error;
};
struct ParseError : Error {
  using Error::Error;
};
struct SchemaError : Error {
  using Error::Error;
};
struct HeaderError : Error {
  using Error::Error;
};
struct CountMismatch : Error {
  using Error::Error;
};
struct ConfigInvalid : Error {
  using Error::Error;
};

}  // namespace geomix
