#pragma once

#include <stdexcept>
#include <string>

namespace diffgame {

enum class ErrorCode {
  invalid_dimension,
  invalid_parameter,
  invalid_input,
  unsupported_mode,
  unsupported_noise,
  numeric,
  not_psd,
  out_of_range,
  tree_too_deep,
  enumeration_limit,
  boundary_escape,
  invalid_grid,
  invalid_payoff,
  config,
};

const char* to_string(ErrorCode code);

/// Library-wide exception; `code()` identifies the failure class.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace diffgame
