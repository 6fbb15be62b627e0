#include "cfdir/error.hpp"

namespace cfdir {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Config: return "config";
    case ErrorKind::NumericInput: return "numeric_input";
    case ErrorKind::Index: return "index";
    case ErrorKind::Input: return "input";
    case ErrorKind::State: return "state";
    case ErrorKind::Validation: return "validation";
    case ErrorKind::Naming: return "naming";
    case ErrorKind::NotFound: return "not_found";
    case ErrorKind::Parse: return "parse";
    case ErrorKind::TrainingFault: return "training_fault";
  }
  return "unknown";
}

} // namespace cfdir
