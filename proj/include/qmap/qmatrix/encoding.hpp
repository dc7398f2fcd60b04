// Copyright 2026 The qmap Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "qmap/qmatrix/qmatrix.hpp"

namespace qmap {

// How a (scheme, signals) pair becomes a network input: a 2D or 3D Qmatrix,
// or the raw signals in acquisition order, zero-padded to a fixed width
// (the scheme-locked baseline).
enum class InputVariant { q2d, q3d, vector };

std::string to_string(InputVariant variant);
InputVariant parse_input_variant(std::string_view text);  // "2d" | "3d" | "vector"

struct InputEncoding {
  InputVariant variant = InputVariant::q2d;
  QmatrixConfig qmatrix{};        // unused for the vector variant
  std::size_t vector_width = 32;  // vector variant only

  // Network input encodings; both turn on antipodal mirroring.
  static InputEncoding dti(InputVariant variant = InputVariant::q2d, int q_n = 20);
  static InputEncoding noddi(InputVariant variant = InputVariant::q2d, int q_n = 20);

  std::size_t channels() const;
  // Spatial extent: {} for vectors, {q_n, q_n} or {q_n, q_n, q_n}.
  std::vector<std::size_t> spatial_shape() const;
  std::size_t input_size() const;
  void validate() const;
};

void to_json(nlohmann::json& j, const InputEncoding& e);
void from_json(const nlohmann::json& j, InputEncoding& e);

// Writes input_size() values into `out`. ShapeError if a vector input would
// need more than vector_width signals.
void encode_input(const GradientScheme& scheme, std::span<const double> signals,
                  const InputEncoding& encoding, std::span<float> out);
std::vector<float> encode_input(const GradientScheme& scheme, std::span<const double> signals,
                                const InputEncoding& encoding);

}  // namespace qmap
