// Copyright 2026 The ttrnn Authors. Apache 2.0 License.
//
// Little-endian binary encoding used by the TT record and checkpoint formats.

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace ttrnn {

class BinaryWriter {
 public:
  void u8(std::uint8_t v);
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void f64(double v);
  void str(std::string_view s);
  void f64_array(std::span<const double> values);
  void raw(std::string_view bytes) { buf_.append(bytes); }

  const std::string& bytes() const { return buf_; }

 private:
  std::string buf_;
};

// Reads from a borrowed buffer; every accessor throws FormatError when the
// buffer runs out.
class BinaryReader {
 public:
  explicit BinaryReader(std::string_view data) : data_(data) {}

  std::uint8_t u8();
  std::uint32_t u32();
  std::uint64_t u64();
  double f64();
  std::string str();
  void f64_array(std::span<double> out);
  std::string_view raw(std::size_t size);

  std::size_t position() const { return pos_; }
  std::size_t remaining() const { return data_.size() - pos_; }

 private:
  void need(std::size_t size) const;

  std::string_view data_;
  std::size_t pos_ = 0;
};

}  // namespace ttrnn
