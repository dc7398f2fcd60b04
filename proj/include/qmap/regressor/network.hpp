// Copyright 2026 The qmap Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "qmap/forward/dataset.hpp"
#include "qmap/qmatrix/encoding.hpp"

namespace qmap {

enum class NetworkKind { resconv, mlp };

std::string to_string(NetworkKind kind);
NetworkKind parse_network_kind(std::string_view text);

struct NetworkSpec {
  NetworkKind kind = NetworkKind::resconv;
  ModelKind model = ModelKind::dti;
  InputEncoding encoding{};
  std::size_t output_dim = 4;
  // Network outputs are multiplied by these to give physical labels.
  std::vector<double> output_scale{1.0, 1e-3, 1e-3, 1e-3};

  // resconv
  bool occupancy = true;        // add bin-occupancy indicator channels before the stem
  bool flatten = true;          // flatten the feature maps instead of averaging them
  std::size_t stem_channels = 32;
  std::size_t stem_kernel = 7;
  std::size_t stem_stride = 2;
  std::size_t res_blocks = 2;
  std::size_t block_kernel = 3;
  std::size_t dense_units = 128;
  double leaky_slope = 0.2;

  // mlp
  std::vector<std::size_t> hidden{256, 256, 256};

  std::uint64_t seed = 0;

  // Occupancy channels, 7x7 (or 7x7x7) stem, two residual blocks, flatten,
  // dense 128, output.
  static NetworkSpec resconv(ModelKind model, const InputEncoding& encoding);
  // Fully connected baseline on zero-padded signals: 32-256-256-256-4 (DTI),
  // 104-400-400-400-3 (NODDI).
  static NetworkSpec mlp(ModelKind model);

  void validate() const;  // ConfigError
};

void to_json(nlohmann::json& j, const NetworkSpec& s);
void from_json(const nlohmann::json& j, NetworkSpec& s);

// Labels divided by output_scale; what the network is trained to emit.
std::vector<double> default_output_scale(ModelKind model);

namespace detail {
class Layer;
}

// Activations are (channels, batch * spatial) matrices, sample-major along
// the columns.
class Network {
 public:
  explicit Network(const NetworkSpec& spec);  // Xavier-uniform init from spec.seed
  ~Network();
  Network(const Network& other);
  Network& operator=(const Network& other);
  Network(Network&&) noexcept;
  Network& operator=(Network&&) noexcept;

  const NetworkSpec& spec() const { return spec_; }
  std::size_t input_size() const { return spec_.encoding.input_size(); }
  std::size_t output_dim() const { return spec_.output_dim; }

  std::size_t param_count() const { return static_cast<std::size_t>(params_.size()); }
  Eigen::VectorXd& params() { return params_; }
  const Eigen::VectorXd& params() const { return params_; }
  const Eigen::VectorXd& grads() const { return grads_; }

  // Layer list for diagnostics: "conv 3->32 k7 s2", ...
  std::vector<std::string> describe() const;
  // (fan_in, fan_out, weight count) of every weighted layer, in order.
  struct WeightBlock {
    std::size_t offset = 0;
    std::size_t count = 0;
    std::size_t fan_in = 0;
    std::size_t fan_out = 0;
  };
  std::vector<WeightBlock> weight_blocks() const;

  // `inputs` holds `batch` samples of input_size() values. Returns the raw
  // network output, (output_dim, batch).
  Eigen::MatrixXd forward(std::span<const float> inputs, std::size_t batch);

  // Backpropagates d(loss)/d(output) through the last forward() call,
  // overwriting grads(). Returns d(loss)/d(input), (input_size, batch) in
  // the sample's channel-major layout.
  Eigen::MatrixXd backward(const Eigen::MatrixXd& grad_output);

  // Forward pass scaled to physical units: batch x output_dim, row-major.
  std::vector<double> predict(std::span<const float> inputs, std::size_t batch);

 private:
  void build();

  NetworkSpec spec_;
  std::vector<std::unique_ptr<detail::Layer>> layers_;
  Eigen::VectorXd params_;
  Eigen::VectorXd grads_;
  std::size_t last_batch_ = 0;
};

// Mean over all outputs of
// (y - t)^2. Writes d(loss)/dy into `grad` when given.
double mse_loss(const Eigen::MatrixXd& output, const Eigen::MatrixXd& target,
                Eigen::MatrixXd* grad);

struct TrainConfig {
  std::size_t batch = 100;
  double lr0 = 1e-3;
  double decay = 0.87;  // per epoch
  std::size_t epochs = 10;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double validation_fraction = 0.1;
  std::uint64_t seed = 0;
  bool verbose = false;

  double learning_rate(std::size_t epoch) const;
  void validate() const;  // ConfigError
};

void to_json(nlohmann::json& j, const TrainConfig& c);

class AdamOptimizer {
 public:
  AdamOptimizer(std::size_t n, const TrainConfig& config);
  // One bias-corrected Adam update of `params` with gradient `grads`.
  void step(Eigen::VectorXd& params, const Eigen::VectorXd& grads, double lr);
  std::size_t steps() const { return t_; }

 private:
  double beta1_, beta2_, epsilon_;
  Eigen::VectorXd m_, v_;
  std::size_t t_ = 0;
};

// One minibatch: forward, loss, backward, Adam step. Labels in physical
// units. NumericalError if the loss is not finite.
double train_step(Network& net, AdamOptimizer& optimizer, std::span<const float> inputs,
                  std::span<const float> labels, std::size_t batch, double lr);

struct TrainResult {
  double initial_train_loss = 0.0;
  double initial_val_loss = 0.0;
  std::vector<double> train_loss;  // per epoch, mean over minibatches
  std::vector<double> val_loss;    // per epoch
  std::size_t best_epoch = 0;
  double seconds = 0.0;
};

void to_json(nlohmann::json& j, const TrainResult& r);

// Seeded shuffle, held-out validation split, epoch-shuffled minibatches. The
// network ends with the weights of the best validation epoch.
TrainResult train(Network& net, const Dataset& dataset, const TrainConfig& config);

// Mean loss (in training units) over a dataset subset.
double evaluate_loss(Network& net, const Dataset& dataset, std::span<const std::size_t> indices);

// "QNET", u32 spec JSON length, spec JSON, u64 weight count, float32 weights.
void save_network(const std::filesystem::path& path, const Network& net);
Network load_network(const std::filesystem::path& path);

}  // namespace qmap
