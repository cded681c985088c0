#ifndef KERNGEN_COMMON_HPP
#define KERNGEN_COMMON_HPP

#include <cstdarg>
#include <cstdint>
#include <cstdio>
#include <stdexcept>
#include <string>

namespace kerngen {

struct error : std::runtime_error {
  explicit error(std::string const& msg) : std::runtime_error(msg) {}
};

inline std::string strprintf(char const* fmt, ...) {
  va_list ap;
  va_start(ap, fmt);
  va_list ap2;
  va_copy(ap2, ap);
  int const n = std::vsnprintf(nullptr, 0, fmt, ap);
  va_end(ap);
  std::string ret(static_cast<size_t>(n), '\0');
  std::vsnprintf(ret.data(), ret.size() + 1, fmt, ap2);
  va_end(ap2);
  return ret;
}

[[noreturn]] inline void rt_err(std::string const& msg) { throw error(msg); }

inline int64_t ceil_div(int64_t const a, int64_t const b) { return (a + b - 1) / b; }

// multiply with overflow check; errors rather than wrapping
inline int64_t checked_mul(int64_t const a, int64_t const b, char const* what) {
  int64_t r = 0;
  if (__builtin_mul_overflow(a, b, &r)) { rt_err(strprintf("overflow computing %s: %lld * %lld", what, (long long)a, (long long)b)); }
  return r;
}

}  // namespace kerngen

#endif
