#include "rdb/error.hpp"

namespace rdb {

const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid_argument";
    case ErrorCode::kParse: return "parse_error";
    case ErrorCode::kDuplicate: return "duplicate";
    case ErrorCode::kRange: return "out_of_range";
    case ErrorCode::kIndex: return "index_error";
    case ErrorCode::kDimension: return "dimension_mismatch";
    case ErrorCode::kNumeric: return "numeric_error";
    case ErrorCode::kDependency: return "missing_dependency";
    case ErrorCode::kAlignment: return "alignment_error";
    case ErrorCode::kCompatibility: return "incompatible";
    case ErrorCode::kIo: return "io_error";
    case ErrorCode::kGeneration: return "generation_error";
    case ErrorCode::kConfig: return "config_error";
    case ErrorCode::kInternal: return "internal_error";
  }
  return "unknown";
}

}  // namespace rdb
