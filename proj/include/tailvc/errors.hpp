#ifndef TAILVC_ERRORS_HPP
#define TAILVC_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace tailvc {

// Every recoverable failure in the library is reported as an Error carrying
// one of these kinds, so callers (and the CLI exit-code mapping) can react
// without parsing message text.
enum class ErrorKind {
  non_positive_response,
  dimension_mismatch,
  empty_dataset,
  degenerate_coordinate,
  no_exceedances,
  no_local_exceedances,
  insufficient_local_data,
  singular_hessian,
  bandwidth_out_of_range,
  invalid_alpha,
  invalid_config,
  empty_grid,
  all_points_failed,
  too_many_failed_points,
  all_candidates_failed,
  empty_input,
  shape_mismatch,
  zero_local_information,
  file_not_found,
  parse_error,
};

inline const char* error_kind_name(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::non_positive_response: return "NonPositiveResponse";
    case ErrorKind::dimension_mismatch: return "DimensionMismatch";
    case ErrorKind::empty_dataset: return "EmptyDataset";
    case ErrorKind::degenerate_coordinate: return "DegenerateCoordinate";
    case ErrorKind::no_exceedances: return "NoExceedances";
    case ErrorKind::no_local_exceedances: return "NoLocalExceedances";
    case ErrorKind::insufficient_local_data: return "InsufficientLocalData";
    case ErrorKind::singular_hessian: return "SingularHessian";
    case ErrorKind::bandwidth_out_of_range: return "BandwidthOutOfRange";
    case ErrorKind::invalid_alpha: return "InvalidAlpha";
    case ErrorKind::invalid_config: return "InvalidConfig";
    case ErrorKind::empty_grid: return "EmptyGrid";
    case ErrorKind::all_points_failed: return "AllPointsFailed";
    case ErrorKind::too_many_failed_points: return "TooManyFailedPoints";
    case ErrorKind::all_candidates_failed: return "AllCandidatesFailed";
    case ErrorKind::empty_input: return "EmptyInput";
    case ErrorKind::shape_mismatch: return "ShapeMismatch";
    case ErrorKind::zero_local_information: return "ZeroLocalInformation";
    case ErrorKind::file_not_found: return "FileNotFound";
    case ErrorKind::parse_error: return "ParseError";
  }
  return "UnknownError";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(error_kind_name(kind)) + ": " + message),
        kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

}  // namespace tailvc

#endif
