#include "diffgame/error.hpp"

namespace diffgame {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::invalid_dimension: return "invalid dimension";
    case ErrorCode::invalid_parameter: return "invalid parameter";
    case ErrorCode::invalid_input: return "invalid input";
    case ErrorCode::unsupported_mode: return "unsupported mode";
    case ErrorCode::unsupported_noise: return "unsupported noise";
    case ErrorCode::numeric: return "numeric error";
    case ErrorCode::not_psd: return "matrix not positive semidefinite";
    case ErrorCode::out_of_range: return "out of range";
    case ErrorCode::tree_too_deep: return "tree too deep";
    case ErrorCode::enumeration_limit: return "enumeration limit";
    case ErrorCode::boundary_escape: return "boundary escape";
    case ErrorCode::invalid_grid: return "invalid grid";
    case ErrorCode::invalid_payoff: return "invalid payoff";
    case ErrorCode::config: return "configuration error";
  }
  return "error";
}

}  // namespace diffgame
