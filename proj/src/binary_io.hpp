#pragma once

// Little-endian primitives shared by the checkpoint and dataset-cache formats.

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

namespace tsf::io {

inline void put_u64(std::ostream& os, std::uint64_t v) {
  char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  os.write(buf, 8);
}

inline void put_u32(std::ostream& os, std::uint32_t v) {
  char buf[4];
  for (int i = 0; i < 4; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  os.write(buf, 4);
}

inline void put_f64(std::ostream& os, double v) { put_u64(os, std::bit_cast<std::uint64_t>(v)); }

inline void put_string(std::ostream& os, const std::string& s) {
  put_u32(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline void put_f64s(std::ostream& os, const std::vector<double>& values) {
  put_u64(os, values.size());
  for (double v : values) put_f64(os, v);
}

class Reader {
 public:
  Reader(std::istream& is, std::string what) : is_(is), what_(std::move(what)) {}

  void raw(char* dst, std::size_t n) {
    is_.read(dst, static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(is_.gcount()) != n) throw std::runtime_error(what_ + ": truncated file");
  }
  std::uint64_t u64() {
    unsigned char buf[8];
    raw(reinterpret_cast<char*>(buf), 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
    return v;
  }
  std::uint32_t u32() {
    unsigned char buf[4];
    raw(reinterpret_cast<char*>(buf), 4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf[i]) << (8 * i);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string string() {
    const auto n = u32();
    if (n > (1u << 20)) throw std::runtime_error(what_ + ": implausible string length");
    std::string s(n, '\0');
    raw(s.data(), n);
    return s;
  }
  std::vector<double> f64s() {
    const auto n = u64();
    if (n > (std::uint64_t{1} << 32)) throw std::runtime_error(what_ + ": implausible array length");
    std::vector<double> v(n);
    for (auto& x : v) x = f64();
    return v;
  }
  void expect_magic(const char (&magic)[9]) {
    char buf[8];
    raw(buf, 8);
    if (std::memcmp(buf, magic, 8) != 0) throw std::runtime_error(what_ + ": bad magic, not a " + what_ + " file");
  }

 private:
  std::istream& is_;
  std::string what_;
};

}  // namespace tsf::io
