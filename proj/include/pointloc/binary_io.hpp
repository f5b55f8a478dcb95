#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>

// Big-endian primitives shared by every binary file format in the repo.
namespace pointloc::bin {

void write_u8(std::ostream& os, std::uint8_t v);
void write_u16(std::ostream& os, std::uint16_t v);
void write_u32(std::ostream& os, std::uint32_t v);
void write_u64(std::ostream& os, std::uint64_t v);
void write_i32(std::ostream& os, std::int32_t v);
void write_f32(std::ostream& os, float v);
void write_f64(std::ostream& os, double v);

// Readers throw Error(kFormatError) naming `what` on a short read.
std::uint8_t read_u8(std::istream& is, const std::string& what);
std::uint16_t read_u16(std::istream& is, const std::string& what);
std::uint32_t read_u32(std::istream& is, const std::string& what);
std::uint64_t read_u64(std::istream& is, const std::string& what);
std::int32_t read_i32(std::istream& is, const std::string& what);
float read_f32(std::istream& is, const std::string& what);
double read_f64(std::istream& is, const std::string& what);

}  // namespace pointloc::bin
