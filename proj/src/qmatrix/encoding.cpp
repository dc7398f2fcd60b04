// Copyright 2026 The qmap Authors
// SPDX-License-Identifier: Apache-2.0

#include "qmap/qmatrix/encoding.hpp"

#include <algorithm>

#include "qmap/common/error.hpp"

namespace qmap {

std::string to_string(InputVariant variant) {
  switch (variant) {
    case InputVariant::q2d:
      return "2d";
    case InputVariant::q3d:
      return "3d";
    case InputVariant::vector:
      return "vector";
  }
  return "?";
}

InputVariant parse_input_variant(std::string_view text) {
  if (text == "2d" || text == "2D") return InputVariant::q2d;
  if (text == "3d" || text == "3D") return InputVariant::q3d;
  if (text == "vector") return InputVariant::vector;
  throw ConfigError("unknown input variant '" + std::string(text) + "'");
}

InputEncoding InputEncoding::dti(InputVariant variant, int q_n) {
  InputEncoding e;
  e.variant = variant;
  e.qmatrix = QmatrixConfig::dti();
  e.qmatrix.q_n = q_n;
  e.qmatrix.mirror = true;
  e.qmatrix.variant = variant == InputVariant::q3d ? QmatrixVariant::k3d : QmatrixVariant::k2d;
  e.vector_width = 32;
  return e;
}

InputEncoding InputEncoding::noddi(InputVariant variant, int q_n) {
  InputEncoding e;
  e.variant = variant;
  e.qmatrix = QmatrixConfig::noddi();
  e.qmatrix.q_n = q_n;
  e.qmatrix.mirror = true;
  if (variant == InputVariant::q3d) {
    e.qmatrix.variant = QmatrixVariant::k3d;
    e.qmatrix.per_shell = false;
  }
  e.vector_width = 104;
  return e;
}

std::size_t InputEncoding::channels() const {
  return variant == InputVariant::vector ? vector_width : qmatrix.channels();
}

std::vector<std::size_t> InputEncoding::spatial_shape() const {
  const auto n = static_cast<std::size_t>(qmatrix.q_n);
  switch (variant) {
    case InputVariant::q2d:
      return {n, n};
    case InputVariant::q3d:
      return {n, n, n};
    case InputVariant::vector:
      return {};
  }
  return {};
}

std::size_t InputEncoding::input_size() const {
  std::size_t size = channels();
  for (std::size_t s : spatial_shape()) size *= s;
  return size;
}

void InputEncoding::validate() const {
  if (variant == InputVariant::vector) {
    if (vector_width == 0) throw ConfigError("vector width must be positive");
    return;
  }
  qmatrix.validate();
  const bool is3d = qmatrix.variant == QmatrixVariant::k3d;
  if (is3d != (variant == InputVariant::q3d)) {
    throw ConfigError("input variant and Qmatrix variant disagree");
  }
}

void to_json(nlohmann::json& j, const InputEncoding& e) {
  j = nlohmann::json{{"variant", to_string(e.variant)},
                     {"q_n", e.qmatrix.q_n},
                     {"b_norm", e.qmatrix.b_norm},
                     {"per_shell", e.qmatrix.per_shell},
                     {"expected_shells", e.qmatrix.expected_shells},
                     {"mirror", e.qmatrix.mirror},
                     {"vector_width", e.vector_width}};
}

void from_json(const nlohmann::json& j, InputEncoding& e) {
  e.variant = parse_input_variant(j.at("variant").get<std::string>());
  e.qmatrix.q_n = j.at("q_n").get<int>();
  e.qmatrix.b_norm = j.at("b_norm").get<double>();
  e.qmatrix.per_shell = j.value("per_shell", false);
  e.qmatrix.expected_shells = j.value("expected_shells", std::size_t{3});
  e.qmatrix.mirror = j.value("mirror", false);
  e.qmatrix.variant =
      e.variant == InputVariant::q3d ? QmatrixVariant::k3d : QmatrixVariant::k2d;
  e.vector_width = j.value("vector_width", std::size_t{32});
}

void encode_input(const GradientScheme& scheme, std::span<const double> signals,
                  const InputEncoding& encoding, std::span<float> out) {
  if (out.size() != encoding.input_size()) {
    throw ShapeError("input buffer has " + std::to_string(out.size()) + " values, expected " +
                     std::to_string(encoding.input_size()));
  }
  if (encoding.variant == InputVariant::vector) {
    if (signals.size() != scheme.size()) {
      throw ShapeError("got " + std::to_string(signals.size()) + " signals for " +
                       std::to_string(scheme.size()) + " diffusion-weighted entries");
    }
    if (signals.size() > encoding.vector_width) {
      throw ShapeError(std::to_string(signals.size()) + " signals exceed the input width " +
                       std::to_string(encoding.vector_width));
    }
    std::fill(out.begin(), out.end(), 0.0f);
    std::transform(signals.begin(), signals.end(), out.begin(),
                   [](double v) { return static_cast<float>(v); });
    return;
  }
  const Qmatrix q = encode(scheme, signals, encoding.qmatrix);
  std::transform(q.values().begin(), q.values().end(), out.begin(),
                 [](double v) { return static_cast<float>(v); });
}

std::vector<float> encode_input(const GradientScheme& scheme, std::span<const double> signals,
                                const InputEncoding& encoding) {
  std::vector<float> out(encoding.input_size());
  encode_input(scheme, signals, encoding, out);
  return out;
}

}  // namespace qmap
