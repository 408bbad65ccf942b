#pragma once

#include <stdexcept>
#include <string>

namespace vps {

// Base for every error raised by the library. Subclasses map one-to-one to
// the failure kinds callers are expected to distinguish.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define VPS_DEFINE_ERROR(Name)         \
  class Name : public Error {          \
   public:                             \
    using Error::Error;                \
  }

VPS_DEFINE_ERROR(NonFiniteError);
VPS_DEFINE_ERROR(BadConfig);
VPS_DEFINE_ERROR(RouteNotInWorld);
VPS_DEFINE_ERROR(UnknownFrame);
VPS_DEFINE_ERROR(InsufficientOverlap);
VPS_DEFINE_ERROR(SolverDiverged);
VPS_DEFINE_ERROR(UnknownSubmap);
VPS_DEFINE_ERROR(IoFailure);
VPS_DEFINE_ERROR(CorruptMap);
VPS_DEFINE_ERROR(BindFailure);
VPS_DEFINE_ERROR(UnknownContent);
VPS_DEFINE_ERROR(Uninitialized);
VPS_DEFINE_ERROR(BadRate);
VPS_DEFINE_ERROR(ConnectionLost);
VPS_DEFINE_ERROR(MissingOracle);
VPS_DEFINE_ERROR(ProtocolError);

#undef VPS_DEFINE_ERROR

}  // namespace vps
