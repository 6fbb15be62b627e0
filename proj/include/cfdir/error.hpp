#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace cfdir {

enum class ErrorKind {
  Config,       // invalid configuration value
  NumericInput, // non-finite input to a numerical routine
  Index,        // index outside the container it refers to
  Input,        // otherwise malformed argument (empty batch, ...)
  State,        // illegal phase transition
  Validation,   // rejected user-supplied value (zero direction, ...)
  Naming,       // duplicate experiment name
  NotFound,     // unknown id or name
  Parse,        // malformed document
  TrainingFault // non-finite loss or gradient during optimisation
};

std::string_view to_string(ErrorKind kind);

/// All errors raised by the library. `field` names the offending
/// configuration field or document path when one applies.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message, std::string field = {})
      : std::runtime_error(message), kind_(kind), field_(std::move(field)) {}

  ErrorKind kind() const noexcept { return kind_; }
  const std::string& field() const noexcept { return field_; }

 private:
  ErrorKind kind_;
  std::string field_;
};

} // namespace cfdir
