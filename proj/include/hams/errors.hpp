#pragma once

#include <stdexcept>
#include <string>

namespace hams {

// Base class for all data-level failures. The CLI maps these to exit code 2.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

#define HAMS_DEFINE_ERROR(Name)            \
    struct Name : Error {                  \
        using Error::Error;                \
    }

// geometry
HAMS_DEFINE_ERROR(DegenerateConfiguration);
HAMS_DEFINE_ERROR(NotARotation);
HAMS_DEFINE_ERROR(InsufficientData);

// oracle
HAMS_DEFINE_ERROR(ConfigInvalid);
HAMS_DEFINE_ERROR(IndexOutOfRange);

// losses
HAMS_DEFINE_ERROR(ShapeMismatch);
HAMS_DEFINE_ERROR(EmptyMatchSet);
HAMS_DEFINE_ERROR(TooManyInstances);
HAMS_DEFINE_ERROR(EmptyValidSet);

// alignment
HAMS_DEFINE_ERROR(DisconnectedGraph);
HAMS_DEFINE_ERROR(DegenerateEdge);
HAMS_DEFINE_ERROR(NonFiniteEnergy);

// fusion
HAMS_DEFINE_ERROR(MissingView);

// bodyfit
HAMS_DEFINE_ERROR(TooFewPoints);
HAMS_DEFINE_ERROR(DegenerateCorrespondences);

// metrics
HAMS_DEFINE_ERROR(PersonCountMismatch);
HAMS_DEFINE_ERROR(CountMismatch);
HAMS_DEFINE_ERROR(DegenerateScene);
HAMS_DEFINE_ERROR(ZeroBaseline);

// io
HAMS_DEFINE_ERROR(BadMagic);
HAMS_DEFINE_ERROR(UnsupportedVersion);
HAMS_DEFINE_ERROR(TruncatedPayload);
HAMS_DEFINE_ERROR(DimOverflow);
HAMS_DEFINE_ERROR(EmptyCloud);
HAMS_DEFINE_ERROR(WriteFailure);

#undef HAMS_DEFINE_ERROR

}  // namespace hams
