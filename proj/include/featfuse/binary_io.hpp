#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "featfuse/error.hpp"

namespace featfuse::io {

static_assert(std::endian::native == std::endian::little,
              "binary payloads are little-endian; big-endian hosts are unsupported");

std::vector<std::uint8_t> ReadBytes(const std::filesystem::path& path);
void WriteBytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
std::string ReadText(const std::filesystem::path& path);
void WriteText(const std::filesystem::path& path, const std::string& text);

// Append-only little-endian encoder.
class ByteWriter {
 public:
  template <typename T>
  void Put(T value) {
    static_assert(std::is_trivially_copyable_v<T>);
    const auto* p = reinterpret_cast<const std::uint8_t*>(&value);
    bytes_.insert(bytes_.end(), p, p + sizeof(T));
  }

  template <typename T>
  void PutArray(std::span<const T> values) {
    static_assert(std::is_trivially_copyable_v<T>);
    const auto* p = reinterpret_cast<const std::uint8_t*>(values.data());
    bytes_.insert(bytes_.end(), p, p + values.size_bytes());
  }

  const std::vector<std::uint8_t>& bytes() const { return bytes_; }

 private:
  std::vector<std::uint8_t> bytes_;
};

// Bounds-checked little-endian decoder; throws IoError on truncation.
class ByteReader {
 public:
  ByteReader(std::span<const std::uint8_t> bytes, std::string source)
      : bytes_(bytes), source_(std::move(source)) {}

  template <typename T>
  T Get() {
    static_assert(std::is_trivially_copyable_v<T>);
    Require(sizeof(T));
    T value;
    std::memcpy(&value, bytes_.data() + offset_, sizeof(T));
    offset_ += sizeof(T);
    return value;
  }

  template <typename T>
  std::vector<T> GetArray(std::size_t count) {
    static_assert(std::is_trivially_copyable_v<T>);
    Require(count * sizeof(T));
    std::vector<T> out(count);
    std::memcpy(out.data(), bytes_.data() + offset_, count * sizeof(T));
    offset_ += count * sizeof(T);
    return out;
  }

  std::size_t remaining() const { return bytes_.size() - offset_; }

  void ExpectEnd() const {
    if (remaining() != 0) {
      throw IoError(source_ + ": " + std::to_string(remaining()) + " trailing bytes");
    }
  }

 private:
  void Require(std::size_t n) const {
    if (bytes_.size() - offset_ < n) throw IoError(source_ + ": truncated payload");
  }

  std::span<const std::uint8_t> bytes_;
  std::string source_;
  std::size_t offset_ = 0;
};

// Whole-file raw array of T (no header).
template <typename T>
std::vector<T> ReadRawArray(const std::filesystem::path& path, std::size_t expected_count) {
  const auto bytes = ReadBytes(path);
  if (bytes.size() != expected_count * sizeof(T)) {
    throw IoError(path.string() + ": expected " + std::to_string(expected_count * sizeof(T)) +
                  " bytes, found " + std::to_string(bytes.size()));
  }
  std::vector<T> out(expected_count);
  std::memcpy(out.data(), bytes.data(), bytes.size());
  return out;
}

template <typename T>
void WriteRawArray(const std::filesystem::path& path, std::span<const T> values) {
  WriteBytes(path, {reinterpret_cast<const std::uint8_t*>(values.data()), values.size_bytes()});
}

}  // namespace featfuse::io
