// Copyright 2026 The qmap Authors
// SPDX-License-Identifier: Apache-2.0

#include "qmap/fit/volume.hpp"

#include <cstdint>
#include <fstream>

#include <json.hpp>

#include "qmap/common/error.hpp"
#include "qmap/common/io.hpp"

namespace qmap {

Volume::Volume(std::array<std::size_t, 3> shape_in, std::vector<std::string> names_in,
               std::string model_in)
    : shape(shape_in), names(std::move(names_in)), model(std::move(model_in)) {
  data.assign(voxels() * channels(), 0.0f);
}

std::size_t Volume::channel_index(const std::string& name) const {
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] == name) return i;
  }
  throw DataError("volume has no channel '" + name + "'");
}

std::vector<double> Volume::channel(std::size_t c) const {
  std::vector<double> out(voxels());
  for (std::size_t v = 0; v < out.size(); ++v) out[v] = at(v, c);
  return out;
}

void Volume::validate() const {
  if (names.empty()) throw ShapeError("volume has no channels");
  if (data.size() != voxels() * channels()) {
    throw ShapeError("volume data size " + std::to_string(data.size()) + " does not match " +
                     std::to_string(voxels()) + " voxels x " + std::to_string(channels()) +
                     " channels");
  }
}

std::vector<std::string> signal_channel_names(std::size_t count) {
  std::vector<std::string> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back("s" + std::to_string(i));
  return out;
}

void write_volume(const std::filesystem::path& path, const Volume& volume) {
  volume.validate();
  nlohmann::json header;
  header["shape"] = volume.shape;
  header["names"] = volume.names;
  header["model"] = volume.model;
  const std::string text = header.dump();

  BinaryWriter out(path);
  out.bytes("QVOL", 4);
  out.u32(static_cast<std::uint32_t>(text.size()));
  out.bytes(text.data(), text.size());
  out.f32s(volume.data);
  out.close();
}

Volume read_volume(const std::filesystem::path& path) {
  BinaryReader in(path);
  in.expect_magic("QVOL");
  const std::uint32_t length = in.u32();
  const std::string text = in.string(length);
  Volume v;
  try {
    const auto header = nlohmann::json::parse(text);
    v.shape = header.at("shape").get<std::array<std::size_t, 3>>();
    v.names = header.at("names").get<std::vector<std::string>>();
    v.model = header.value("model", std::string{});
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": bad volume header: " + e.what());
  }
  v.data = in.f32s(v.voxels() * v.channels());
  in.expect_end();
  v.validate();
  return v;
}

void write_volume_csv(const std::filesystem::path& path, const Volume& volume) {
  volume.validate();
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "index,x,y,z";
  for (const auto& n : volume.names) out << ',' << n;
  out << '\n';
  out.precision(9);
  for (std::size_t v = 0; v < volume.voxels(); ++v) {
    const std::size_t x = v % volume.shape[0];
    const std::size_t y = (v / volume.shape[0]) % volume.shape[1];
    const std::size_t z = v / (volume.shape[0] * volume.shape[1]);
    out << v << ',' << x << ',' << y << ',' << z;
    for (std::size_t c = 0; c < volume.channels(); ++c) out << ',' << volume.at(v, c);
    out << '\n';
  }
  if (!out) throw DataError("failed writing " + path.string());
}

std::vector<bool> mask_from(const Volume* mask, std::size_t voxels) {
  std::vector<bool> out(voxels, true);
  if (mask == nullptr) return out;
  if (mask->voxels() != voxels) {
    throw ShapeError("mask has " + std::to_string(mask->voxels()) + " voxels, expected " +
                     std::to_string(voxels));
  }
  for (std::size_t v = 0; v < voxels; ++v) out[v] = mask->at(v, 0) != 0.0f;
  return out;
}

}  // namespace qmap
