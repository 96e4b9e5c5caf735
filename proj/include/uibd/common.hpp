#ifndef UIBD_COMMON_HPP_
#define UIBD_COMMON_HPP_

#include <stdexcept>
#include <string>

namespace uibd {

// All recoverable failures in the core throw Error; the C API boundary
// converts them to status codes.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

[[noreturn]] inline void fail(const std::string& msg) { throw Error(msg); }

inline void require(bool cond, const std::string& msg) {
  if (!cond) fail(msg);
}

}  // namespace uibd

#endif  // UIBD_COMMON_HPP_
