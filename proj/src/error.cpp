#include "beamlink/error.hpp"

namespace beamlink {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::invalid_argument: return "invalid_argument";
    case ErrorKind::invalid_config: return "invalid_config";
    case ErrorKind::duplicate_id: return "duplicate_id";
    case ErrorKind::unknown_reference: return "unknown_reference";
    case ErrorKind::coverage: return "coverage";
    case ErrorKind::empty_pairs: return "empty_pairs";
    case ErrorKind::singular: return "singular";
    case ErrorKind::io: return "io";
    case ErrorKind::missing_input: return "missing_input";
    case ErrorKind::corrupt: return "corrupt";
    case ErrorKind::busy: return "busy";
    case ErrorKind::unknown_column: return "unknown_column";
  }
  return "unknown";
}

}  // namespace beamlink
