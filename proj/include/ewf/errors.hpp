#pragma once

#include <stdexcept>
#include <string>

namespace ewf {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define EWF_DEFINE_ERROR(Name)            \
  class Name : public Error {             \
   public:                                \
    using Error::Error;                   \
  }

// phase-space core
EWF_DEFINE_ERROR(InvalidGrid);
EWF_DEFINE_ERROR(GridTooCoarse);
EWF_DEFINE_ERROR(NonHermitianSpinDensity);
EWF_DEFINE_ERROR(NonUnitTrace);
EWF_DEFINE_ERROR(InvalidBeam);
EWF_DEFINE_ERROR(IndexOutOfRange);

// propagation
EWF_DEFINE_ERROR(NonCommutingModel);
EWF_DEFINE_ERROR(BoundaryOverflow);
EWF_DEFINE_ERROR(InvalidStepPlan);
EWF_DEFINE_ERROR(StabilityViolation);

// oracle
EWF_DEFINE_ERROR(BandLimitViolation);
EWF_DEFINE_ERROR(SupportOverflow);

// experiments
EWF_DEFINE_ERROR(SlitUnresolved);
EWF_DEFINE_ERROR(InvalidPlan);
EWF_DEFINE_ERROR(UnderResolved);

// configuration and io
EWF_DEFINE_ERROR(ParseError);
EWF_DEFINE_ERROR(ValidationError);
EWF_DEFINE_ERROR(IoError);

#undef EWF_DEFINE_ERROR

}  // namespace ewf
