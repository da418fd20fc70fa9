// Little-endian binary writer/reader with running CRC32 for the dataset,
// codes, and checkpoint container formats.

#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "recomp/error.hpp"

namespace recomp {

class ByteWriter {
 public:
  void u8(uint8_t v) { bytes_.push_back(char(v)); }
  void u16(uint16_t v) {
    u8(uint8_t(v & 0xFF));
    u8(uint8_t(v >> 8));
  }
  void u32(uint32_t v) {
    u16(uint16_t(v & 0xFFFF));
    u16(uint16_t(v >> 16));
  }
  void u64(uint64_t v) {
    u32(uint32_t(v & 0xFFFFFFFFULL));
    u32(uint32_t(v >> 32));
  }
  void f32(float v) {
    uint32_t bits;
    static_assert(sizeof(bits) == sizeof(v));
    std::memcpy(&bits, &v, sizeof(bits));
    u32(bits);
  }
  void raw(const void* data, size_t n) {
    bytes_.append(static_cast<const char*>(data), n);
  }
  void str(const std::string& s) {
    u32(uint32_t(s.size()));
    raw(s.data(), s.size());
  }

  const std::string& bytes() const { return bytes_; }
  size_t size() const { return bytes_.size(); }

  // Appends CRC32 (IEEE) of everything written so far.
  void finish_crc();

 private:
  std::string bytes_;
};

class ByteReader {
 public:
  explicit ByteReader(std::string bytes) : bytes_(std::move(bytes)) {}

  uint8_t u8() {
    need(1);
    return uint8_t(bytes_[pos_++]);
  }
  uint16_t u16() {
    uint16_t lo = u8();
    return uint16_t(lo | (uint16_t(u8()) << 8));
  }
  uint32_t u32() {
    uint32_t lo = u16();
    return lo | (uint32_t(u16()) << 16);
  }
  uint64_t u64() {
    uint64_t lo = u32();
    return lo | (uint64_t(u32()) << 32);
  }
  float f32() {
    uint32_t bits = u32();
    float v;
    std::memcpy(&v, &bits, sizeof(v));
    return v;
  }
  std::string str() {
    uint32_t n = u32();
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  void raw(void* out, size_t n) {
    need(n);
    std::memcpy(out, bytes_.data() + pos_, n);
    pos_ += n;
  }

  size_t pos() const { return pos_; }
  size_t remaining() const { return bytes_.size() - pos_; }

  // Validates the trailing CRC32 over [0, size-4); call before reading.
  void check_crc(const char* what);

 private:
  void need(size_t n) const {
    if (pos_ + n > bytes_.size())
      throw Error(ErrorKind::Corrupt, "truncated file at offset " + std::to_string(pos_));
  }

  std::string bytes_;
  size_t pos_ = 0;
};

std::string read_file(const std::filesystem::path& path);

// Writes to "<path>.tmp" then renames onto path.
void write_file_atomic(const std::filesystem::path& path, const std::string& bytes);

uint32_t crc32_bytes(const void* data, size_t n);

}  // namespace recomp
