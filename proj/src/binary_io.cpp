// Copyright 2026 The ttrnn Authors. Apache 2.0 License.

#include "ttrnn/binary_io.hpp"

#include <bit>
#include <limits>

#include "ttrnn/errors.hpp"

namespace ttrnn {

void BinaryWriter::u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }

void BinaryWriter::u32(std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void BinaryWriter::u64(std::uint64_t v) {
  for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void BinaryWriter::f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

void BinaryWriter::str(std::string_view s) {
  u32(static_cast<std::uint32_t>(s.size()));
  buf_.append(s);
}

void BinaryWriter::f64_array(std::span<const double> values) {
  for (double v : values) f64(v);
}

void BinaryReader::need(std::size_t size) const {
  if (size > remaining()) {
    throw FormatError("truncated input: need " + std::to_string(size) +
                      " bytes at offset " + std::to_string(pos_) + ", have " +
                      std::to_string(remaining()));
  }
}

std::uint8_t BinaryReader::u8() {
  need(1);
  return static_cast<std::uint8_t>(data_[pos_++]);
}

std::uint32_t BinaryReader::u32() {
  need(4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) {
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(data_[pos_++])) << (8 * i);
  }
  return v;
}

std::uint64_t BinaryReader::u64() {
  need(8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) {
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_++])) << (8 * i);
  }
  return v;
}

double BinaryReader::f64() { return std::bit_cast<double>(u64()); }

std::string BinaryReader::str() {
  const std::uint32_t size = u32();
  need(size);
  std::string s(data_.substr(pos_, size));
  pos_ += size;
  return s;
}

void BinaryReader::f64_array(std::span<double> out) {
  if (out.size() > std::numeric_limits<std::size_t>::max() / 8) {
    throw FormatError("array too large");
  }
  need(out.size() * 8);
  for (double& v : out) v = f64();
}

std::string_view BinaryReader::raw(std::size_t size) {
  need(size);
  std::string_view v = data_.substr(pos_, size);
  pos_ += size;
  return v;
}

}  // namespace ttrnn
