#include "pointloc/binary_io.hpp"

#include <bit>
#include <istream>
#include <ostream>

#include "pointloc/errors.hpp"

namespace pointloc::bin {
namespace {

template <typename U>
void put(std::ostream& os, U v) {
  char buf[sizeof(U)];
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    buf[i] = static_cast<char>((v >> (8 * (sizeof(U) - 1 - i))) & 0xff);
  }
  os.write(buf, sizeof(U));
}

template <typename U>
U get(std::istream& is, const std::string& what) {
  unsigned char buf[sizeof(U)];
  if (!is.read(reinterpret_cast<char*>(buf), sizeof(U))) {
    throw Error(ErrorCode::kFormatError, "unexpected end of data in " + what);
  }
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v = static_cast<U>((v << 8) | buf[i]);
  return v;
}

}  // namespace

void write_u8(std::ostream& os, std::uint8_t v) { put(os, v); }
void write_u16(std::ostream& os, std::uint16_t v) { put(os, v); }
void write_u32(std::ostream& os, std::uint32_t v) { put(os, v); }
void write_u64(std::ostream& os, std::uint64_t v) { put(os, v); }
void write_i32(std::ostream& os, std::int32_t v) { put(os, static_cast<std::uint32_t>(v)); }
void write_f32(std::ostream& os, float v) { put(os, std::bit_cast<std::uint32_t>(v)); }
void write_f64(std::ostream& os, double v) { put(os, std::bit_cast<std::uint64_t>(v)); }

std::uint8_t read_u8(std::istream& is, const std::string& what) { return get<std::uint8_t>(is, what); }
std::uint16_t read_u16(std::istream& is, const std::string& what) { return get<std::uint16_t>(is, what); }
std::uint32_t read_u32(std::istream& is, const std::string& what) { return get<std::uint32_t>(is, what); }
std::uint64_t read_u64(std::istream& is, const std::string& what) { return get<std::uint64_t>(is, what); }
std::int32_t read_i32(std::istream& is, const std::string& what) {
  return static_cast<std::int32_t>(get<std::uint32_t>(is, what));
}
float read_f32(std::istream& is, const std::string& what) {
  return std::bit_cast<float>(get<std::uint32_t>(is, what));
}
double read_f64(std::istream& is, const std::string& what) {
  return std::bit_cast<double>(get<std::uint64_t>(is, what));
}

}  // namespace pointloc::bin
