#pragma once

#include <cstdint>
#include <istream>
#include <ostream>
#include <string>

namespace nnk::io {

// Little-endian primitive readers/writers, independent of host byte order.
// All on-disk formats in this project (NNKF, NNKG, NNKC) are little-endian.

void write_u16(std::ostream& os, std::uint16_t v);
void write_u32(std::ostream& os, std::uint32_t v);
void write_u64(std::ostream& os, std::uint64_t v);
void write_f32(std::ostream& os, float v);
void write_magic(std::ostream& os, const char magic[4]);

std::uint16_t read_u16(std::istream& is, const char* what);
std::uint32_t read_u32(std::istream& is, const char* what);
std::uint64_t read_u64(std::istream& is, const char* what);
float read_f32(std::istream& is, const char* what);
void expect_magic(std::istream& is, const char magic[4], const char* format_name);

// Thrown location-aware from every reader; `what` names the field that failed.
[[noreturn]] void fail(std::istream& is, const std::string& message);

}  // namespace nnk::io
