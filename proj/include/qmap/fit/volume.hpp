// Copyright 2026 The qmap Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

namespace qmap {

// Multi-channel voxel grid. Data are voxel-major: channel c of voxel v is
// data[v * channels() + c], voxels in x-fastest order.
struct Volume {
  std::array<std::size_t, 3> shape{1, 1, 1};
  std::vector<std::string> names;  // one per channel
  std::string model;               // "dti", "noddi", "signals", "mask", ...
  std::vector<float> data;

  Volume() = default;
  Volume(std::array<std::size_t, 3> shape, std::vector<std::string> names, std::string model);

  std::size_t voxels() const { return shape[0] * shape[1] * shape[2]; }
  std::size_t channels() const { return names.size(); }
  float& at(std::size_t voxel, std::size_t channel) { return data[voxel * channels() + channel]; }
  float at(std::size_t voxel, std::size_t channel) const {
    return data[voxel * channels() + channel];
  }
  // Index of the named channel; DataError if absent.
  std::size_t channel_index(const std::string& name) const;
  // Values of one channel over all voxels.
  std::vector<double> channel(std::size_t c) const;

  void validate() const;  // ShapeError on a size mismatch
};

// Channel names "s0", "s1", ... for raw signal volumes.
std::vector<std::string> signal_channel_names(std::size_t count);

// Binary file: "QVOL", u32 header length, JSON header {shape, names, model},
// then little-endian float32 data.
void write_volume(const std::filesystem::path& path, const Volume& volume);
Volume read_volume(const std::filesystem::path& path);

// One row per voxel: index, x, y, z, then one column per channel.
void write_volume_csv(const std::filesystem::path& path, const Volume& volume);

// True where the mask volume's first channel is non-zero; all true without a mask.
std::vector<bool> mask_from(const Volume* mask, std::size_t voxels);

}  // namespace qmap
