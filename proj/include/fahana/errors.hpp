#pragma once

#include <stdexcept>
#include <string>

namespace fahana {

// Base class for everything this library throws on bad input or bad state.
// ValidationError covers semantic problems in configs, files, and arguments;
// IoError covers the filesystem layer (open/read/write failures).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

#define FAHANA_VALIDATION_ERROR(NAME)          \
  class NAME : public ValidationError {        \
   public:                                     \
    using ValidationError::ValidationError;    \
  }

FAHANA_VALIDATION_ERROR(SpaceTooLarge);
FAHANA_VALIDATION_ERROR(MalformedActions);
FAHANA_VALIDATION_ERROR(InvalidArchitecture);
FAHANA_VALIDATION_ERROR(EmptyGroup);
FAHANA_VALIDATION_ERROR(ZeroBaseline);
FAHANA_VALIDATION_ERROR(ParseError);
FAHANA_VALIDATION_ERROR(DuplicateSignature);
FAHANA_VALIDATION_ERROR(NonPositiveLatency);
FAHANA_VALIDATION_ERROR(MissingEntry);
FAHANA_VALIDATION_ERROR(DimensionMismatch);
FAHANA_VALIDATION_ERROR(AllZeroVariations);
FAHANA_VALIDATION_ERROR(InconsistentMap);
FAHANA_VALIDATION_ERROR(DegenerateSampling);
FAHANA_VALIDATION_ERROR(BatchSizeMismatch);
FAHANA_VALIDATION_ERROR(NonFiniteGradient);
FAHANA_VALIDATION_ERROR(UnknownArchitecture);

#undef FAHANA_VALIDATION_ERROR

}  // namespace fahana
