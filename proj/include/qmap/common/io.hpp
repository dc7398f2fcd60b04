// Copyright 2026 The qmap Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace qmap {

// Little-endian binary streams. Failures raise DataError naming the file.
class BinaryWriter {
 public:
  explicit BinaryWriter(const std::filesystem::path& path);

  void bytes(const void* data, std::size_t size);
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void f32s(std::span<const float> values);
  void close();

 private:
  std::filesystem::path path_;
  std::ofstream out_;
};

class BinaryReader {
 public:
  explicit BinaryReader(const std::filesystem::path& path);

  void expect_magic(std::string_view magic);
  std::uint32_t u32();
  std::uint64_t u64();
  std::string string(std::size_t size);
  std::vector<float> f32s(std::size_t count);
  void f32s_into(std::span<float> out);
  void expect_end();

 private:
  void read(void* data, std::size_t size);

  std::filesystem::path path_;
  std::ifstream in_;
};

std::string read_text_file(const std::filesystem::path& path);

}  // namespace qmap
