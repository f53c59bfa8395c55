#pragma once

#include <cstdio>
#include <ostream>
#include <string>
#include <string_view>

namespace qmetro::csv {

/// %.12e rendering; non-finite values become nan / inf / -inf.
inline std::string num(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12e", x);
  return buf;
}

/// Writes comma-separated fields followed by a newline.
class RowWriter {
 public:
  explicit RowWriter(std::ostream& os) : os_(os) {}

  RowWriter& operator<<(double x) { return field(num(x)); }
  RowWriter& operator<<(std::string_view s) { return field(s); }
  RowWriter& operator<<(const char* s) { return field(s); }
  RowWriter& operator<<(std::size_t n) { return field(std::to_string(n)); }
  RowWriter& operator<<(long long n) { return field(std::to_string(n)); }
  RowWriter& operator<<(long n) { return field(std::to_string(n)); }
  RowWriter& operator<<(int n) { return field(std::to_string(n)); }

  void end() {
    os_ << '\n';
    first_ = true;
  }

 private:
  RowWriter& field(std::string_view s) {
    if (!first_) os_ << ',';
    os_ << s;
    first_ = false;
    return *this;
  }

  std::ostream& os_;
  bool first_ = true;
};

}  // namespace qmetro::csv
