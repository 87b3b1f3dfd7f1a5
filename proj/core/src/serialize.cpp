#include "nnk/serialize.hpp"

#include <array>
#include <cstring>
#include <stdexcept>

namespace nnk::io {

namespace {

template <typename T>
void write_le(std::ostream& os, T v) {
  std::array<char, sizeof(T)> buf;
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  }
  os.write(buf.data(), buf.size());
}

template <typename T>
T read_le(std::istream& is, const char* what) {
  std::array<unsigned char, sizeof(T)> buf;
  if (!is.read(reinterpret_cast<char*>(buf.data()), buf.size())) {
    fail(is, std::string("truncated while reading ") + what);
  }
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    v |= static_cast<T>(buf[i]) << (8 * i);
  }
  return v;
}

}  // namespace

void fail(std::istream& is, const std::string& message) {
  const auto pos = is.tellg();
  throw std::runtime_error(message + " (offset " +
                           (pos < 0 ? std::string("eof") : std::to_string(pos)) + ")");
}

void write_u16(std::ostream& os, std::uint16_t v) { write_le(os, v); }
void write_u32(std::ostream& os, std::uint32_t v) { write_le(os, v); }
void write_u64(std::ostream& os, std::uint64_t v) { write_le(os, v); }

void write_f32(std::ostream& os, float v) {
  static_assert(sizeof(float) == 4);
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  write_le(os, bits);
}

void write_magic(std::ostream& os, const char magic[4]) { os.write(magic, 4); }

std::uint16_t read_u16(std::istream& is, const char* what) { return read_le<std::uint16_t>(is, what); }
std::uint32_t read_u32(std::istream& is, const char* what) { return read_le<std::uint32_t>(is, what); }
std::uint64_t read_u64(std::istream& is, const char* what) { return read_le<std::uint64_t>(is, what); }

float read_f32(std::istream& is, const char* what) {
  const std::uint32_t bits = read_le<std::uint32_t>(is, what);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

void expect_magic(std::istream& is, const char magic[4], const char* format_name) {
  char got[4];
  if (!is.read(got, 4)) {
    fail(is, std::string(format_name) + ": file too short for magic");
  }
  if (std::memcmp(got, magic, 4) != 0) {
    fail(is, std::string(format_name) + ": bad magic");
  }
}

}  // namespace nnk::io
