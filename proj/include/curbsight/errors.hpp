#pragma once

#include <stdexcept>
#include <string>

namespace curbsight {

// Base class for every recoverable failure raised by the library.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct NonPositiveDepth : Error {
  explicit NonPositiveDepth(const std::string& msg = "point at or behind the camera plane")
      : Error(msg) {}
};

struct AtOrAboveHorizon : Error {
  explicit AtOrAboveHorizon(const std::string& msg = "row at or above the horizon row")
      : Error(msg) {}
};

struct NonPositiveDistance : Error {
  explicit NonPositiveDistance(const std::string& msg = "distance must be positive")
      : Error(msg) {}
};

struct RegionOutsideImage : Error {
  explicit RegionOutsideImage(const std::string& msg = "region does not overlap the frame")
      : Error(msg) {}
};

struct NearVerticalLine : Error {
  explicit NearVerticalLine(const std::string& msg = "slope too steep for v = a*u + b form")
      : Error(msg) {}
};

struct RowAboveReference : Error {
  explicit RowAboveReference(const std::string& msg = "row above the remap reference row")
      : Error(msg) {}
};

struct NegativeDiscriminant : Error {
  explicit NegativeDiscriminant(const std::string& msg = "inverse remap has no real solution")
      : Error(msg) {}
};

struct DegenerateFit : Error {
  explicit DegenerateFit(const std::string& msg = "degenerate least-squares fit") : Error(msg) {}
};

struct DegenerateIntersection : Error {
  explicit DegenerateIntersection(const std::string& msg = "required intersection at infinity")
      : Error(msg) {}
};

struct EmptyImage : Error {
  explicit EmptyImage(const std::string& msg = "empty image") : Error(msg) {}
};

struct FaceOutsideImage : Error {
  explicit FaceOutsideImage(const std::string& msg = "curb face lies outside the raster")
      : Error(msg) {}
};

struct DegenerateFace : Error {
  explicit DegenerateFace(const std::string& msg = "curb face too thin to sample") : Error(msg) {}
};

struct DimensionMismatch : Error {
  explicit DimensionMismatch(const std::string& msg = "vector dimensions do not match")
      : Error(msg) {}
};

struct EmptyClass : Error {
  explicit EmptyClass(const std::string& msg = "training set misses a class") : Error(msg) {}
};

struct WrongBagSize : Error {
  explicit WrongBagSize(const std::string& msg = "instance bag has the wrong size")
      : Error(msg) {}
};

struct EmptyCounts : Error {
  explicit EmptyCounts(const std::string& msg = "no samples counted") : Error(msg) {}
};

struct MisalignedLogs : Error {
  explicit MisalignedLogs(const std::string& msg = "log and ground-truth frames do not align")
      : Error(msg) {}
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& msg) : Error(msg) {}
};

struct IoError : Error {
  explicit IoError(const std::string& msg) : Error(msg) {}
};

}  // namespace curbsight
