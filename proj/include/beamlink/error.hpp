#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace beamlink {

enum class ErrorKind {
  invalid_argument,  // a value violates a documented precondition
  invalid_config,    // a run configuration failed validation
  duplicate_id,
  unknown_reference, // id that resolves to nothing (sensor, surface, ...)
  coverage,          // fingerprint lacks populated bins
  empty_pairs,       // no object pairs for a mean distance
  singular,          // degenerate geometry in registration
  io,
  missing_input,
  corrupt,           // on-disk data fails validation
  busy,              // another writer holds the store lock
  unknown_column,
};

std::string_view to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace beamlink
