#ifndef RDB_ERROR_HPP_
#define RDB_ERROR_HPP_

#include <stdexcept>
#include <string>

namespace rdb {

// Failure categories. Values line up with the rdb_status codes of the C API.
enum class ErrorCode {
  kInvalidArgument = 1,
  kParse = 2,
  kDuplicate = 3,
  kRange = 4,
  kIndex = 5,
  kDimension = 6,
  kNumeric = 7,
  kDependency = 8,
  kAlignment = 9,
  kCompatibility = 10,
  kIo = 11,
  kGeneration = 12,
  kConfig = 13,
  kInternal = 14,
};

const char* error_code_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

inline void require(bool condition, ErrorCode code, const std::string& message) {
  if (!condition) throw Error(code, message);
}

}  // namespace rdb

#endif  // RDB_ERROR_HPP_
