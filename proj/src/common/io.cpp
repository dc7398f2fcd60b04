// Copyright 2026 The qmap Authors
// SPDX-License-Identifier: Apache-2.0

#include "qmap/common/io.hpp"

#include <bit>
#include <sstream>

#include "qmap/common/error.hpp"

namespace qmap {
namespace {

static_assert(std::endian::native == std::endian::little,
              "binary formats assume a little-endian host");

}  // namespace

BinaryWriter::BinaryWriter(const std::filesystem::path& path)
    : path_(path), out_(path, std::ios::binary | std::ios::trunc) {
  if (!out_) throw DataError("cannot open " + path.string() + " for writing");
}

void BinaryWriter::bytes(const void* data, std::size_t size) {
  out_.write(static_cast<const char*>(data), static_cast<std::streamsize>(size));
  if (!out_) throw DataError("failed writing " + path_.string());
}

void BinaryWriter::u32(std::uint32_t v) { bytes(&v, sizeof v); }
void BinaryWriter::u64(std::uint64_t v) { bytes(&v, sizeof v); }

void BinaryWriter::f32s(std::span<const float> values) {
  bytes(values.data(), values.size_bytes());
}

void BinaryWriter::close() {
  out_.close();
  if (!out_) throw DataError("failed closing " + path_.string());
}

BinaryReader::BinaryReader(const std::filesystem::path& path)
    : path_(path), in_(path, std::ios::binary) {
  if (!in_) throw DataError("cannot open " + path.string());
}

void BinaryReader::read(void* data, std::size_t size) {
  in_.read(static_cast<char*>(data), static_cast<std::streamsize>(size));
  if (static_cast<std::size_t>(in_.gcount()) != size) {
    throw DataError(path_.string() + ": unexpected end of file");
  }
}

void BinaryReader::expect_magic(std::string_view magic) {
  const std::string got = string(magic.size());
  if (got != magic) {
    throw DataError(path_.string() + ": not a " + std::string(magic) + " file");
  }
}

std::uint32_t BinaryReader::u32() {
  std::uint32_t v = 0;
  read(&v, sizeof v);
  return v;
}

std::uint64_t BinaryReader::u64() {
  std::uint64_t v = 0;
  read(&v, sizeof v);
  return v;
}

std::string BinaryReader::string(std::size_t size) {
  std::string s(size, '\0');
  read(s.data(), size);
  return s;
}

std::vector<float> BinaryReader::f32s(std::size_t count) {
  std::vector<float> v(count);
  f32s_into(v);
  return v;
}

void BinaryReader::f32s_into(std::span<float> out) { read(out.data(), out.size_bytes()); }

void BinaryReader::expect_end() {
  if (in_.peek() != std::char_traits<char>::eof()) {
    throw DataError(path_.string() + ": trailing bytes after payload");
  }
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace qmap
