#pragma once

#include <stdexcept>
#include <string>

namespace plume {

/// Base of every error raised by the pipeline. Subclasses carry the
/// failure kind in their type so callers can catch selectively.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

#define PLUME_DEFINE_ERROR(Name)                                   \
    class Name : public Error {                                    \
    public:                                                        \
        explicit Name(const std::string& what) : Error(what) {}    \
    };

// raster
PLUME_DEFINE_ERROR(BandMissing)
PLUME_DEFINE_ERROR(GridMismatch)
PLUME_DEFINE_ERROR(FormatError)
PLUME_DEFINE_ERROR(StencilError)
PLUME_DEFINE_ERROR(RegistryConflict)

// rtlut
PLUME_DEFINE_ERROR(GridError)
PLUME_DEFINE_ERROR(SpectralSupportError)
PLUME_DEFINE_ERROR(RangeError)

// retrieval
PLUME_DEFINE_ERROR(NoReferenceError)
PLUME_DEFINE_ERROR(RegressionError)

// simulator
PLUME_DEFINE_ERROR(DirectionUndefined)
PLUME_DEFINE_ERROR(ExtentError)
PLUME_DEFINE_ERROR(SamplerStarvation)

// detector
PLUME_DEFINE_ERROR(ShapeError)
PLUME_DEFINE_ERROR(EmptyLossError)
PLUME_DEFINE_ERROR(InsufficientPositives)

// quantify
PLUME_DEFINE_ERROR(EmptyMask)
PLUME_DEFINE_ERROR(WindUndefined)

// evalkit
PLUME_DEFINE_ERROR(DegenerateEval)

// alertd
PLUME_DEFINE_ERROR(IngestDeferred)
PLUME_DEFINE_ERROR(TransitionError)
PLUME_DEFINE_ERROR(NotFound)
PLUME_DEFINE_ERROR(ConflictError)
PLUME_DEFINE_ERROR(BadRequest)

#undef PLUME_DEFINE_ERROR

}  // namespace plume
