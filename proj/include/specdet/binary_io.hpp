#pragma once

#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>

namespace specdet {

/// Raised for malformed binary files; code is a short stable identifier.
class FormatError : public std::runtime_error {
 public:
  FormatError(std::string code, const std::string& detail)
      : std::runtime_error(code + ": " + detail), code_(std::move(code)) {}
  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

namespace binio {

template <typename U>
void put_le(std::ostream& os, U v) {
  unsigned char buf[sizeof(U)];
  for (std::size_t i = 0; i < sizeof(U); ++i) buf[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(buf), sizeof(U));
}

inline void put_f32(std::ostream& os, float f) {
  std::uint32_t bits;
  std::memcpy(&bits, &f, sizeof bits);
  put_le<std::uint32_t>(os, bits);
}

template <typename U>
U get_le(std::istream& is, const char* what) {
  unsigned char buf[sizeof(U)];
  if (!is.read(reinterpret_cast<char*>(buf), sizeof(U))) {
    throw FormatError("truncated", std::string("unexpected end of file reading ") + what);
  }
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(static_cast<U>(buf[i]) << (8 * i));
  return v;
}

inline float get_f32(std::istream& is, const char* what) {
  const auto bits = get_le<std::uint32_t>(is, what);
  float f;
  std::memcpy(&f, &bits, sizeof f);
  return f;
}

inline void expect_magic(std::istream& is, const char magic[4]) {
  char buf[4];
  if (!is.read(buf, 4)) throw FormatError("truncated", "file shorter than magic");
  if (std::memcmp(buf, magic, 4) != 0) {
    throw FormatError("bad magic", std::string("expected ") + std::string(magic, 4));
  }
}

}  // namespace binio
}  // namespace specdet
