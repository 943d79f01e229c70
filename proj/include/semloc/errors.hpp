#pragma once

#include <stdexcept>
#include <string>

namespace semloc {

/// Base class of every error raised by the library.
class Error : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

#define SEMLOC_DEFINE_ERROR(Name)                                \
  class Name : public Error                                      \
  {                                                              \
  public:                                                        \
    explicit Name(const std::string& what) : Error(#Name ": " + what) {} \
  }

SEMLOC_DEFINE_ERROR(AmbiguousRotation);
SEMLOC_DEFINE_ERROR(BehindCamera);
SEMLOC_DEFINE_ERROR(InvalidDepth);
SEMLOC_DEFINE_ERROR(InvalidLabel);
SEMLOC_DEFINE_ERROR(DimensionError);
SEMLOC_DEFINE_ERROR(OutOfBounds);
SEMLOC_DEFINE_ERROR(DegenerateLevel);
SEMLOC_DEFINE_ERROR(SolverFailure);
SEMLOC_DEFINE_ERROR(NotInitialized);
SEMLOC_DEFINE_ERROR(LostTracking);
SEMLOC_DEFINE_ERROR(EmptyInput);
SEMLOC_DEFINE_ERROR(InvalidArgument);
SEMLOC_DEFINE_ERROR(ParseError);

#undef SEMLOC_DEFINE_ERROR

}  // namespace semloc
