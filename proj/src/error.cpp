#include "asynclc/error.hpp"

namespace asynclc {

const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidBandwidth: return "INVALID_BANDWIDTH";
    case ErrorCode::InvalidSampleSize: return "INVALID_SAMPLE_SIZE";
    case ErrorCode::InvalidParameter: return "BAD_PARAM";
    case ErrorCode::InvalidData: return "INVALID_DATA";
    case ErrorCode::NoLocalData: return "NO_LOCAL_DATA";
    case ErrorCode::SingularLocalFit: return "SINGULAR_LOCAL_FIT";
    case ErrorCode::SingularFit: return "SINGULAR_FIT";
    case ErrorCode::DegenerateScale: return "DEGENERATE_SCALE";
    case ErrorCode::EstimationFailed: return "ESTIMATION_FAILED";
    case ErrorCode::FoldDegenerate: return "FOLD_DEGENERATE";
    case ErrorCode::SelectionFailed: return "SELECTION_FAILED";
    case ErrorCode::CovarianceNotPD: return "COVARIANCE_NOT_PD";
    case ErrorCode::ParseError: return "PARSE_ERROR";
    case ErrorCode::OrphanSubject: return "ORPHAN_SUBJECT";
    case ErrorCode::EmptyInput: return "EMPTY_INPUT";
    case ErrorCode::IoError: return "IO_ERROR";
  }
  return "UNKNOWN";
}

int error_exit_code(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidParameter:
    case ErrorCode::InvalidBandwidth:
    case ErrorCode::InvalidSampleSize:
      return 1;
    case ErrorCode::InvalidData:
    case ErrorCode::ParseError:
    case ErrorCode::OrphanSubject:
    case ErrorCode::EmptyInput:
    case ErrorCode::IoError:
      return 2;
    default:
      return 3;
  }
}

}  // namespace asynclc
