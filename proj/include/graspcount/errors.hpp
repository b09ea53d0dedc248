#pragma once

#include <stdexcept>
#include <string>

namespace graspcount {

// Two families so the CLI can map failures onto exit codes:
// ValidationError -> 2, DataError -> 3.
class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

#define GRASPCOUNT_ERROR(Name, Base)        \
    class Name : public Base {              \
    public:                                 \
        using Base::Base;                   \
    };

GRASPCOUNT_ERROR(JointLimitViolation, ValidationError)
GRASPCOUNT_ERROR(InvalidGeometry, ValidationError)
GRASPCOUNT_ERROR(DegenerateInput, ValidationError)
GRASPCOUNT_ERROR(ShapeMismatch, ValidationError)
GRASPCOUNT_ERROR(InvalidDim, ValidationError)
GRASPCOUNT_ERROR(InvalidMapping, ValidationError)
GRASPCOUNT_ERROR(NonFinite, ValidationError)
GRASPCOUNT_ERROR(NonFiniteGradient, ValidationError)
GRASPCOUNT_ERROR(LengthMismatch, ValidationError)
GRASPCOUNT_ERROR(DegenerateData, DataError)
GRASPCOUNT_ERROR(EmptyDataset, DataError)
GRASPCOUNT_ERROR(UntrainedModel, DataError)
GRASPCOUNT_ERROR(FormatError, DataError)

#undef GRASPCOUNT_ERROR

}  // namespace graspcount
