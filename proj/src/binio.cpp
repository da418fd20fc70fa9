#include "recomp/pipeline/binio.hpp"

#include <zlib.h>

#include <cstring>
#include <fstream>

namespace recomp {

uint32_t crc32_bytes(const void* data, size_t n) {
  return uint32_t(::crc32(::crc32(0L, Z_NULL, 0), static_cast<const Bytef*>(data), uInt(n)));
}

void ByteWriter::finish_crc() { u32(crc32_bytes(bytes_.data(), bytes_.size())); }

void ByteReader::check_crc(const char* what) {
  if (bytes_.size() < 4)
    throw Error(ErrorKind::Corrupt, std::string(what) + ": file too short for checksum");
  const size_t body = bytes_.size() - 4;
  uint32_t stored = 0;
  for (int i = 3; i >= 0; --i) stored = (stored << 8) | uint8_t(bytes_[body + size_t(i)]);
  const uint32_t actual = crc32_bytes(bytes_.data(), body);
  if (stored != actual)
    throw Error(ErrorKind::Corrupt,
                std::string(what) + ": CRC32 mismatch over bytes [0," + std::to_string(body) +
                    "); checksum stored at offset " + std::to_string(body));
  bytes_.resize(body);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw Error(ErrorKind::Io, "read failed for " + path.string());
  return bytes;
}

void write_file_atomic(const std::filesystem::path& path, const std::string& bytes) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::Io, "cannot open " + tmp.string() + " for writing");
    out.write(bytes.data(), std::streamsize(bytes.size()));
    if (!out) throw Error(ErrorKind::Io, "write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error(ErrorKind::Io, "rename to " + path.string() + " failed: " + ec.message());
}

}  // namespace recomp
