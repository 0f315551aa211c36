#pragma once

#include <stdexcept>
#include <string>

namespace polypath {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

#define POLYPATH_DEFINE_ERROR(Name)          \
  class Name : public Error {                \
  public:                                    \
    using Error::Error;                      \
  }

POLYPATH_DEFINE_ERROR(SlideTooSmall);
POLYPATH_DEFINE_ERROR(BadPatchShape);
POLYPATH_DEFINE_ERROR(BackendFailure);
POLYPATH_DEFINE_ERROR(EmptyEnsemble);
POLYPATH_DEFINE_ERROR(NoTissue);
POLYPATH_DEFINE_ERROR(EmptyDataset);
POLYPATH_DEFINE_ERROR(WrongPanelSize);
POLYPATH_DEFINE_ERROR(LengthMismatch);
POLYPATH_DEFINE_ERROR(WrongArity);
POLYPATH_DEFINE_ERROR(BadProportion);
POLYPATH_DEFINE_ERROR(WindowOutOfBounds);
POLYPATH_DEFINE_ERROR(InvalidArgument);
POLYPATH_DEFINE_ERROR(IoError);
POLYPATH_DEFINE_ERROR(ManifestError);

#undef POLYPATH_DEFINE_ERROR

} // namespace polypath
