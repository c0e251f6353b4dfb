#pragma once

// Little-endian primitive encoding shared by the binary file formats.

#include <bit>
#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "gengap/errors.hpp"

namespace gengap::binary {

class Writer {
 public:
  template <typename T>
  void put(T value) {
    static_assert(std::is_trivially_copyable_v<T>);
    unsigned char raw[sizeof(T)];
    std::memcpy(raw, &value, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) {
      for (std::size_t i = 0; i < sizeof(T); ++i) {
        bytes_.push_back(raw[sizeof(T) - 1 - i]);
      }
    } else {
      bytes_.insert(bytes_.end(), raw, raw + sizeof(T));
    }
  }
  void put_bytes(const std::string& s) { bytes_.insert(bytes_.end(), s.begin(), s.end()); }
  void put_string(const std::string& s) {
    put(static_cast<std::uint32_t>(s.size()));
    put_bytes(s);
  }
  std::vector<std::uint8_t>& bytes() { return bytes_; }

 private:
  std::vector<std::uint8_t> bytes_;
};

class Reader {
 public:
  Reader(const std::uint8_t* data, std::size_t size) : data_(data), size_(size) {}

  template <typename T>
  T get() {
    static_assert(std::is_trivially_copyable_v<T>);
    need(sizeof(T));
    unsigned char raw[sizeof(T)];
    if constexpr (std::endian::native == std::endian::big) {
      for (std::size_t i = 0; i < sizeof(T); ++i) {
        raw[i] = data_[pos_ + sizeof(T) - 1 - i];
      }
    } else {
      std::memcpy(raw, data_ + pos_, sizeof(T));
    }
    pos_ += sizeof(T);
    T value;
    std::memcpy(&value, raw, sizeof(T));
    return value;
  }
  std::string get_bytes(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(data_ + pos_), n);
    pos_ += n;
    return s;
  }
  std::string get_string() { return get_bytes(get<std::uint32_t>()); }
  bool at_end() const { return pos_ == size_; }
  std::size_t remaining() const { return size_ - pos_; }

 private:
  void need(std::size_t n) const {
    if (size_ - pos_ < n) throw FormatError("unexpected end of data");
  }
  const std::uint8_t* data_;
  std::size_t size_;
  std::size_t pos_ = 0;
};

}  // namespace gengap::binary
