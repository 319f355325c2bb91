#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace mammofuse::io {

static_assert(std::endian::native == std::endian::little,
              "binary formats assume a little-endian host");

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
std::string read_text(const std::filesystem::path& path);

/// Writes to "<path>.tmp" and renames over path, creating parent directories.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

/// Little-endian append-only byte sink.
class ByteWriter {
public:
  template <class T>
  void put(T v) {
    static_assert(std::is_trivially_copyable_v<T>);
    const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
    buf_.insert(buf_.end(), p, p + sizeof(T));
  }
  void put_bytes(std::string_view s) { buf_.insert(buf_.end(), s.begin(), s.end()); }
  std::string_view view() const {
    return {reinterpret_cast<const char*>(buf_.data()), buf_.size()};
  }

private:
  std::vector<std::uint8_t> buf_;
};

/// Bounds-checked little-endian reader; throws FormatError mentioning `source`
/// on truncation.
class ByteReader {
public:
  ByteReader(const std::vector<std::uint8_t>& bytes, std::string source)
      : bytes_(bytes), source_(std::move(source)) {}

  template <class T>
  T get() {
    static_assert(std::is_trivially_copyable_v<T>);
    require(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string get_bytes(std::size_t n);
  std::size_t remaining() const noexcept { return bytes_.size() - pos_; }
  const std::string& source() const noexcept { return source_; }

private:
  void require(std::size_t n) const;

  const std::vector<std::uint8_t>& bytes_;
  std::string source_;
  std::size_t pos_ = 0;
};

/// Splits a CSV line on commas (no quoting; fields here never contain commas).
std::vector<std::string> split_csv(std::string_view line);
std::string trim(std::string_view s);

/// Fixed-precision decimal used in every CSV the tools emit.
std::string fmt_real(double v, int precision = 6);
std::string fmt_sci(double v, int precision = 6);

}  // namespace mammofuse::io
