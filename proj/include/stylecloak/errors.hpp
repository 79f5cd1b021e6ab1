#ifndef STYLECLOAK_ERRORS_HPP
#define STYLECLOAK_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace stylecloak {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

#define STYLECLOAK_DEFINE_ERROR(Name)        \
    class Name : public Error {              \
    public:                                  \
        using Error::Error;                  \
    }

STYLECLOAK_DEFINE_ERROR(InvalidInput);
STYLECLOAK_DEFINE_ERROR(InvalidConfiguration);
STYLECLOAK_DEFINE_ERROR(ExtractorFault);
STYLECLOAK_DEFINE_ERROR(OptimizationDiverged);
STYLECLOAK_DEFINE_ERROR(NoEligibleCandidate);
STYLECLOAK_DEFINE_ERROR(TransferFault);
STYLECLOAK_DEFINE_ERROR(TrainingDiverged);
STYLECLOAK_DEFINE_ERROR(TransformFault);
STYLECLOAK_DEFINE_ERROR(DetectorDegenerate);
STYLECLOAK_DEFINE_ERROR(EmptyPortfolio);
STYLECLOAK_DEFINE_ERROR(IntegrityError);
STYLECLOAK_DEFINE_ERROR(NotFound);

#undef STYLECLOAK_DEFINE_ERROR

}  // namespace stylecloak

#endif  // STYLECLOAK_ERRORS_HPP
