#include "binary_io.h"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <system_error>

#include "cola/errors.h"

namespace cola::detail {
namespace {

static_assert(std::endian::native == std::endian::little ||
                  std::endian::native == std::endian::big,
              "mixed-endian platforms are not supported");

template <typename U>
void put_le(std::string& out, U value) {
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    out.push_back(static_cast<char>((value >> (8 * i)) & 0xff));
  }
}

template <typename U>
U get_le(std::string_view raw) {
  U value = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    value |= static_cast<U>(static_cast<unsigned char>(raw[i])) << (8 * i);
  }
  return value;
}

}  // namespace

void ByteWriter::u32(std::uint32_t value) { put_le(buffer_, value); }
void ByteWriter::f32(float value) { put_le(buffer_, std::bit_cast<std::uint32_t>(value)); }
void ByteWriter::f64(double value) { put_le(buffer_, std::bit_cast<std::uint64_t>(value)); }

void ByteReader::fail(const std::string& what) const {
  throw FormatError(source_ + ": " + what + " at byte offset " + std::to_string(offset_));
}

std::string_view ByteReader::bytes(std::size_t count, const char* what) {
  if (remaining() < count) {
    fail(std::string("truncated ") + what + " (need " + std::to_string(count) + " bytes, have " +
         std::to_string(remaining()) + ")");
  }
  const std::string_view out = data_.substr(offset_, count);
  offset_ += count;
  return out;
}

std::uint32_t ByteReader::u32(const char* what) { return get_le<std::uint32_t>(bytes(4, what)); }

float ByteReader::f32(const char* what) {
  return std::bit_cast<float>(get_le<std::uint32_t>(bytes(4, what)));
}

double ByteReader::f64(const char* what) {
  return std::bit_cast<double>(get_le<std::uint64_t>(bytes(8, what)));
}

std::string read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(path.string() + ": cannot open for reading");
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file_bytes(const std::filesystem::path& path, const std::string& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error(tmp.string() + ": cannot open for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error(tmp.string() + ": write failed");
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace cola::detail
