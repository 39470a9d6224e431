#ifndef DEPUTY_TEXT_HPP_
#define DEPUTY_TEXT_HPP_

#include <charconv>
#include <string>
#include <string_view>

namespace deputy {

// Shortest decimal form that parses back to the same double.
inline std::string format_real(double x) {
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, ptr);
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

}  // namespace deputy

#endif  // DEPUTY_TEXT_HPP_
