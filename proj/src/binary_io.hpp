// Copyright 2026 The steplab Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#pragma once

// Little-endian primitive readers and writers shared by the dataset and
// checkpoint formats.

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>

#include "spt/errors.hpp"

namespace spt::io {

template <typename T>
T to_little(T v) {
  if constexpr (std::endian::native == std::endian::big) {
    auto bytes = std::bit_cast<std::array<unsigned char, sizeof(T)>>(v);
    std::reverse(bytes.begin(), bytes.end());
    return std::bit_cast<T>(bytes);
  }
  return v;
}

class Writer {
 public:
  explicit Writer(std::ostream& out) : out_(out) {}

  void magic(std::string_view m) { out_.write(m.data(), static_cast<std::streamsize>(m.size())); }
  void u32(std::uint32_t v) { raw(to_little(v)); }
  void f64(double v) { raw(to_little(std::bit_cast<std::uint64_t>(v))); }

 private:
  template <typename T>
  void raw(T v) {
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out_.write(buf, sizeof(T));
  }

  std::ostream& out_;
};

class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}

  void expect_magic(std::string_view m) {
    std::string got(m.size(), '\0');
    const std::uint64_t at = offset_;
    read_bytes(got.data(), got.size(), "magic");
    if (got != m) throw FormatError(at, "bad magic: expected \"" + std::string(m) + "\"");
  }
  std::uint32_t u32(const char* what) {
    std::uint32_t v;
    read_bytes(&v, sizeof v, what);
    return to_little(v);
  }
  double f64(const char* what) {
    std::uint64_t v;
    read_bytes(&v, sizeof v, what);
    return std::bit_cast<double>(to_little(v));
  }
  std::uint64_t offset() const noexcept { return offset_; }
  bool at_end() { return in_.peek() == std::char_traits<char>::eof(); }

 private:
  void read_bytes(void* dst, std::size_t n, const char* what) {
    in_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) {
      throw FormatError(offset_ + static_cast<std::uint64_t>(in_.gcount()),
                        std::string("truncated file while reading ") + what);
    }
    offset_ += n;
  }

  std::istream& in_;
  std::uint64_t offset_ = 0;
};

}  // namespace spt::io
