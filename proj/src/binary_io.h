#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

namespace cola::detail {

// Little-endian encoder for the binary file formats.
class ByteWriter {
 public:
  void bytes(std::string_view raw) { buffer_.append(raw); }
  void u32(std::uint32_t value);
  void f32(float value);
  void f64(double value);

  const std::string& buffer() const { return buffer_; }

 private:
  std::string buffer_;
};

// Little-endian decoder; every failure throws FormatError naming the byte offset.
class ByteReader {
 public:
  ByteReader(std::string_view data, std::string source) : data_(data), source_(std::move(source)) {}

  std::string_view bytes(std::size_t count, const char* what);
  std::uint32_t u32(const char* what);
  float f32(const char* what);
  double f64(const char* what);

  std::size_t offset() const { return offset_; }
  std::size_t remaining() const { return data_.size() - offset_; }
  [[noreturn]] void fail(const std::string& what) const;

 private:
  std::string_view data_;
  std::string source_;
  std::size_t offset_ = 0;
};

std::string read_file_bytes(const std::filesystem::path& path);
// Writes through a sibling temporary file and renames it into place.
void write_file_bytes(const std::filesystem::path& path, const std::string& bytes);

}  // namespace cola::detail
