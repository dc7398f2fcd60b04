// Copyright 2026 The qmap Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "qmap/forward/sampling.hpp"
#include "qmap/forward/simulate.hpp"
#include "qmap/qmatrix/encoding.hpp"

namespace qmap {

enum class ModelKind { dti, noddi };

std::string to_string(ModelKind model);
ModelKind parse_model_kind(std::string_view text);

// Label layout: DTI {FA, MD, AD, RD} (diffusivities in mm^2/s), NODDI
// {ICVF, ISOVF, ODI}.
std::vector<std::string> label_names(ModelKind model);
std::vector<double> dti_label(const DtiGroundTruth& truth, const GradientScheme& scheme);
std::vector<double> noddi_label(const NoddiGroundTruth& truth);

struct DatasetConfig {
  ModelKind model = ModelKind::dti;
  std::size_t n_samples = 0;
  SimConfig sim = SimConfig::dti();
  std::optional<Range> snr = Range{30.0, 100.0};  // per-sample SNR draw; none: noise-free
  std::uint64_t seed = 0;
  DtiPrior dti_prior{};
  NoddiPrior noddi_prior{};
  std::optional<GradientScheme> fixed_scheme;  // every sample uses this scheme
  bool analytic = false;  // analytic model signals instead of the random walk
  std::size_t threads = 0;

  static DatasetConfig for_model(ModelKind model);
  void validate() const;
};

void to_json(nlohmann::json& j, const DatasetConfig& c);

// One simulated training pair before input encoding.
struct RawSample {
  GradientScheme scheme;
  std::vector<double> signals;
  std::vector<double> label;
};

// Sample i uses the stream make_rng(seed, i), so results do not depend on
// the thread count.
std::vector<RawSample> simulate_samples(const DatasetConfig& config);

struct Dataset {
  ModelKind model = ModelKind::dti;
  InputEncoding encoding{};
  std::size_t label_dim = 0;
  std::vector<float> inputs;  // size() x encoding.input_size()
  std::vector<float> labels;  // size() x label_dim
  nlohmann::json provenance;  // written to the sidecar

  std::size_t size() const { return label_dim == 0 ? 0 : labels.size() / label_dim; }
  std::span<const float> input(std::size_t i) const;
  std::span<const float> label(std::size_t i) const;
};

Dataset encode_dataset(std::span<const RawSample> samples, ModelKind model,
                       const InputEncoding& encoding, std::size_t threads = 0);

Dataset generate_dataset(const DatasetConfig& config, const InputEncoding& encoding);

// Binary container: "QMAP", u32 version, u32 model, u64 samples, u32 q_n,
// u32 variant, u32 channels, u32 label_dim, then per sample the input and
// the label as float32. The sidecar `<path>.json` holds the encoding and the
// provenance (priors, simulation settings, seed).
void write_dataset(const std::filesystem::path& path, const Dataset& dataset);
Dataset read_dataset(const std::filesystem::path& path);

}  // namespace qmap
