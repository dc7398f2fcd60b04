// Copyright 2026 The qmap Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "qmap/fit/fit.hpp"
#include "qmap/forward/dataset.hpp"
#include "qmap/harness/metrics.hpp"
#include "qmap/regressor/network.hpp"
#include "qmap/scheme/scheme.hpp"

namespace qmap {

struct DatasetPlan {
  std::string name;
  DatasetConfig config;
  std::string scheme_name;  // set when config.fixed_scheme is
};

struct NetworkPlan {
  std::string name;
  std::string dataset;
  NetworkSpec spec;
  TrainConfig train;
};

struct NamedScheme {
  std::string name;
  GradientScheme scheme;
};

enum class ReferenceKind { fit, truth };

struct PhantomPlan {
  std::size_t count = 5;
  std::array<std::size_t, 3> shape{16, 16, 4};
  std::optional<double> snr = 50.0;
  std::uint64_t seed = 0;
  ReferenceKind reference = ReferenceKind::fit;
  std::vector<NamedScheme> schemes;
  NoddiFitOptions noddi_fit{};
};

struct EvalKey {
  std::string network;
  std::string scheme;
};

// Rank-sum test of one parameter's per-phantom NRMSE between two rows.
struct ComparisonPlan {
  std::string parameter;
  EvalKey a;
  EvalKey b;
};

// Network input restricted to k-direction subsets of a test scheme; the
// reference map still comes from the full scheme.
struct SubsetSweepPlan {
  std::string network;
  std::string scheme;
  std::vector<std::size_t> k;
  std::size_t candidates = 500;
  std::uint64_t seed = 0;
};

struct ExperimentConfig {
  std::string name = "experiment";
  ModelKind model = ModelKind::dti;
  std::uint64_t seed = 0;
  std::size_t threads = 0;
  std::optional<std::filesystem::path> out_dir;  // no artifacts when empty
  bool write_maps = true;
  bool verbose = false;
  std::vector<DatasetPlan> datasets;
  std::vector<NetworkPlan> networks;
  PhantomPlan phantoms;
  std::vector<ComparisonPlan> comparisons;
  std::optional<SubsetSweepPlan> subset_sweep;
  nlohmann::json source;  // the parsed JSON, echoed into the report

  void validate() const;  // ConfigError on dangling names or empty plans
};

// Missing seeds are derived from the top-level seed. Relative scheme paths
// are looked up next to `base_dir` first.
ExperimentConfig parse_experiment_config(const nlohmann::json& j,
                                         const std::filesystem::path& base_dir = {});
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

// Per-phantom NRMSE (%) of one network (or "reference") on one test scheme.
struct EvalRow {
  std::string network;
  std::string scheme;
  std::size_t k = 0;  // subset size in a subset sweep, else 0
  std::vector<std::string> parameters;
  std::vector<std::vector<double>> per_phantom;  // [parameter][phantom]
  std::vector<MeanStd> summary;                  // per parameter
  MeanStd overall;  // per-phantom mean over parameters, then mean and std

  const MeanStd& parameter(const std::string& name) const;
};

struct ComparisonResult {
  ComparisonPlan plan;
  RankSumResult test;
};

struct ExperimentReport {
  std::string name;
  nlohmann::json config;
  nlohmann::json seeds;
  std::map<std::string, TrainResult> training;
  std::vector<EvalRow> reference_vs_truth;  // only with a fitted reference
  std::vector<EvalRow> rows;
  std::vector<ComparisonResult> comparisons;
  std::vector<EvalRow> subset_sweep;
  std::vector<std::pair<std::string, double>> timings;  // wall-clock seconds per stage

  // DataError if the row does not exist.
  const EvalRow& row(const std::string& network, const std::string& scheme) const;
  nlohmann::json to_json() const;
};

// Simulates each dataset once, encodes it per network, trains, builds the
// phantoms for every test scheme, infers and scores. Writes report.json,
// weights and maps under out_dir when set. A failing stage is rethrown with
// the stage name prefixed, keeping the DataError / NumericalError category.
ExperimentReport run_experiment(const ExperimentConfig& config);
ExperimentReport run_experiment(const std::filesystem::path& config_path);

}  // namespace qmap
