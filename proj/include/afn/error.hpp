#pragma once

#include <stdexcept>
#include <string>

namespace afn {

// Base for every error raised by the library. The kind() string is stable and
// used by the CLI to map failures to exit codes.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(kind + ": " + what), kind_(std::move(kind)) {}
  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

#define AFN_DEFINE_ERROR(Name, tag)                                 \
  class Name : public Error {                                       \
   public:                                                          \
    explicit Name(const std::string& what) : Error(tag, what) {}    \
  };

AFN_DEFINE_ERROR(FormatError, "format error")
AFN_DEFINE_ERROR(CorruptionError, "corruption error")
AFN_DEFINE_ERROR(InvalidArgument, "invalid argument")
AFN_DEFINE_ERROR(ShapeError, "shape error")
AFN_DEFINE_ERROR(ConfigError, "config error")
AFN_DEFINE_ERROR(NumericError, "numeric error")
AFN_DEFINE_ERROR(ResourceError, "resource error")
AFN_DEFINE_ERROR(IoError, "I/O error")
AFN_DEFINE_ERROR(SizeError, "size error")
AFN_DEFINE_ERROR(EmptyMetricError, "empty metric")

#undef AFN_DEFINE_ERROR

}  // namespace afn
