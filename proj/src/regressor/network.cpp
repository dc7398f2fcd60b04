// Copyright 2026 The qmap Authors
// SPDX-License-Identifier: Apache-2.0

#include "qmap/regressor/network.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "layers.hpp"
#include "qmap/common/error.hpp"
#include "qmap/common/io.hpp"

namespace qmap {

using detail::Shape;
using Eigen::Index;

std::string to_string(NetworkKind kind) { return kind == NetworkKind::resconv ? "resconv" : "mlp"; }

NetworkKind parse_network_kind(std::string_view text) {
  if (text == "resconv") return NetworkKind::resconv;
  if (text == "mlp") return NetworkKind::mlp;
  throw ConfigError("unknown network kind '" + std::string(text) + "'");
}

std::vector<double> default_output_scale(ModelKind model) {
  if (model == ModelKind::dti) return {1.0, 1e-3, 1e-3, 1e-3};
  return {1.0, 1.0, 1.0};
}

NetworkSpec NetworkSpec::resconv(ModelKind model, const InputEncoding& encoding) {
  NetworkSpec s;
  s.kind = NetworkKind::resconv;
  s.model = model;
  s.encoding = encoding;
  s.output_dim = label_names(model).size();
  s.output_scale = default_output_scale(model);
  return s;
}

NetworkSpec NetworkSpec::mlp(ModelKind model) {
  NetworkSpec s;
  s.kind = NetworkKind::mlp;
  s.model = model;
  s.encoding = model == ModelKind::dti ? InputEncoding::dti(InputVariant::vector)
                                       : InputEncoding::noddi(InputVariant::vector);
  s.output_dim = label_names(model).size();
  s.output_scale = default_output_scale(model);
  s.hidden = model == ModelKind::dti ? std::vector<std::size_t>{256, 256, 256}
                                     : std::vector<std::size_t>{400, 400, 400};
  s.leaky_slope = 0.0;
  return s;
}

void NetworkSpec::validate() const {
  encoding.validate();
  if (output_dim == 0) throw ConfigError("network output dimension must be positive");
  if (output_scale.size() != output_dim) {
    throw ConfigError("output_scale needs one entry per output");
  }
  for (double s : output_scale) {
    if (!(s > 0.0) || !std::isfinite(s)) throw ConfigError("output_scale entries must be > 0");
  }
  if (kind == NetworkKind::resconv) {
    if (encoding.variant == InputVariant::vector) {
      throw ConfigError("resconv needs a Qmatrix input, not a signal vector");
    }
    if (stem_kernel % 2 == 0 || block_kernel % 2 == 0) {
      throw ConfigError("convolution kernels must be odd");
    }
    if (stem_channels == 0 || dense_units == 0 || stem_stride == 0) {
      throw ConfigError("resconv sizes must be positive");
    }
  } else {
    if (encoding.variant != InputVariant::vector) {
      throw ConfigError("mlp needs the vector input variant");
    }
    for (std::size_t h : hidden) {
      if (h == 0) throw ConfigError("mlp hidden sizes must be positive");
    }
  }
}

void to_json(nlohmann::json& j, const NetworkSpec& s) {
  j = nlohmann::json{{"kind", to_string(s.kind)},
                     {"model", to_string(s.model)},
                     {"encoding", s.encoding},
                     {"output_dim", s.output_dim},
                     {"output_scale", s.output_scale},
                     {"seed", s.seed}};
  if (s.kind == NetworkKind::resconv) {
    j["occupancy"] = s.occupancy;
    j["flatten"] = s.flatten;
    j["stem_channels"] = s.stem_channels;
    j["stem_kernel"] = s.stem_kernel;
    j["stem_stride"] = s.stem_stride;
    j["res_blocks"] = s.res_blocks;
    j["block_kernel"] = s.block_kernel;
    j["dense_units"] = s.dense_units;
  } else {
    j["hidden"] = s.hidden;
  }
  j["leaky_slope"] = s.leaky_slope;
}

void from_json(const nlohmann::json& j, NetworkSpec& s) {
  const NetworkKind kind = parse_network_kind(j.at("kind").get<std::string>());
  const ModelKind model = parse_model_kind(j.at("model").get<std::string>());
  if (kind == NetworkKind::mlp) {
    s = NetworkSpec::mlp(model);
    s.hidden = j.value("hidden", s.hidden);
  } else {
    s = NetworkSpec::resconv(model, j.at("encoding").get<InputEncoding>());
    s.occupancy = j.value("occupancy", s.occupancy);
    s.flatten = j.value("flatten", s.flatten);
    s.stem_channels = j.value("stem_channels", s.stem_channels);
    s.stem_kernel = j.value("stem_kernel", s.stem_kernel);
    s.stem_stride = j.value("stem_stride", s.stem_stride);
    s.res_blocks = j.value("res_blocks", s.res_blocks);
    s.block_kernel = j.value("block_kernel", s.block_kernel);
    s.dense_units = j.value("dense_units", s.dense_units);
  }
  s.encoding = j.at("encoding").get<InputEncoding>();
  s.output_dim = j.value("output_dim", s.output_dim);
  s.output_scale = j.value("output_scale", s.output_scale);
  s.leaky_slope = j.value("leaky_slope", s.leaky_slope);
  s.seed = j.value("seed", s.seed);
}

Network::Network(const NetworkSpec& spec) : spec_(spec) {
  spec_.validate();
  build();
  Rng rng = make_rng(spec_.seed);
  for (auto& layer : layers_) layer->init(rng);
}

Network::~Network() = default;

Network::Network(const Network& other)
    : spec_(other.spec_), params_(other.params_), grads_(other.grads_) {
  for (const auto& layer : other.layers_) layers_.push_back(layer->clone());
  std::size_t offset = 0;
  for (auto& layer : layers_) {
    layer->bind(params_.data() + offset, grads_.data() + offset);
    offset += layer->param_count();
  }
}

Network& Network::operator=(const Network& other) {
  if (this != &other) *this = Network(other);
  return *this;
}

Network::Network(Network&&) noexcept = default;
Network& Network::operator=(Network&&) noexcept = default;

void Network::build() {
  Shape shape{spec_.encoding.channels(), spec_.encoding.spatial_shape()};
  auto add = [&](std::unique_ptr<detail::Layer> layer) {
    shape = layer->output_shape();
    layers_.push_back(std::move(layer));
  };
  if (spec_.kind == NetworkKind::resconv) {
    if (spec_.occupancy) add(std::make_unique<detail::AppendOccupancy>(shape));
    add(std::make_unique<detail::Conv>(shape, spec_.stem_channels, spec_.stem_kernel,
                                       spec_.stem_stride));
    add(std::make_unique<detail::LeakyRelu>(shape, spec_.leaky_slope));
    for (std::size_t i = 0; i < spec_.res_blocks; ++i) {
      add(std::make_unique<detail::ResidualBlock>(shape, spec_.block_kernel, spec_.leaky_slope));
    }
    if (spec_.flatten) {
      add(std::make_unique<detail::Flatten>(shape));
    } else {
      add(std::make_unique<detail::GlobalAveragePool>(shape));
    }
    add(std::make_unique<detail::Dense>(shape.channels, spec_.dense_units));
    add(std::make_unique<detail::LeakyRelu>(shape, spec_.leaky_slope));
    add(std::make_unique<detail::Dense>(shape.channels, spec_.output_dim));
  } else {
    for (std::size_t h : spec_.hidden) {
      add(std::make_unique<detail::Dense>(shape.size(), h));
      add(std::make_unique<detail::LeakyRelu>(shape, spec_.leaky_slope));
    }
    add(std::make_unique<detail::Dense>(shape.size(), spec_.output_dim));
  }
  std::size_t total = 0;
  for (const auto& layer : layers_) total += layer->param_count();
  params_ = Eigen::VectorXd::Zero(static_cast<Index>(total));
  grads_ = Eigen::VectorXd::Zero(static_cast<Index>(total));
  std::size_t offset = 0;
  for (auto& layer : layers_) {
    layer->bind(params_.data() + offset, grads_.data() + offset);
    offset += layer->param_count();
  }
}

std::vector<std::string> Network::describe() const {
  std::vector<std::string> out;
  for (const auto& layer : layers_) out.push_back(layer->describe());
  return out;
}

std::vector<Network::WeightBlock> Network::weight_blocks() const {
  std::vector<WeightBlock> out;
  std::size_t offset = 0;
  for (const auto& layer : layers_) {
    for (const auto& w : layer->weights()) {
      out.push_back({offset + w.offset, w.count, w.fan_in, w.fan_out});
    }
    offset += layer->param_count();
  }
  return out;
}

Eigen::MatrixXd Network::forward(std::span<const float> inputs, std::size_t batch) {
  const std::size_t n_in = input_size();
  if (inputs.size() != batch * n_in) {
    throw ShapeError("network expects " + std::to_string(n_in) + " values per sample, got " +
                     std::to_string(batch == 0 ? inputs.size() : inputs.size() / batch));
  }
  const std::size_t channels = spec_.encoding.channels();
  const std::size_t positions = n_in / channels;
  Eigen::MatrixXd x(static_cast<Index>(channels), static_cast<Index>(batch * positions));
  for (std::size_t n = 0; n < batch; ++n) {
    for (std::size_t c = 0; c < channels; ++c) {
      for (std::size_t p = 0; p < positions; ++p) {
        x(static_cast<Index>(c), static_cast<Index>(n * positions + p)) =
            inputs[n * n_in + c * positions + p];
      }
    }
  }
  Eigen::MatrixXd y;
  for (auto& layer : layers_) {
    layer->forward(x, y, batch);
    std::swap(x, y);
  }
  last_batch_ = batch;
  return x;
}

Eigen::MatrixXd Network::backward(const Eigen::MatrixXd& grad_output) {
  if (grad_output.rows() != static_cast<Index>(output_dim()) ||
      grad_output.cols() != static_cast<Index>(last_batch_)) {
    throw ShapeError("output gradient does not match the last forward pass");
  }
  Eigen::MatrixXd g = grad_output;
  Eigen::MatrixXd g_in;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) {
    (*it)->backward(g, g_in, last_batch_);
    std::swap(g, g_in);
  }
  const std::size_t n_in = input_size();
  const std::size_t channels = spec_.encoding.channels();
  const std::size_t positions = n_in / channels;
  Eigen::MatrixXd out(static_cast<Index>(n_in), static_cast<Index>(last_batch_));
  for (std::size_t n = 0; n < last_batch_; ++n) {
    for (std::size_t c = 0; c < channels; ++c) {
      for (std::size_t p = 0; p < positions; ++p) {
        out(static_cast<Index>(c * positions + p), static_cast<Index>(n)) =
            g(static_cast<Index>(c), static_cast<Index>(n * positions + p));
      }
    }
  }
  return out;
}

std::vector<double> Network::predict(std::span<const float> inputs, std::size_t batch) {
  const Eigen::MatrixXd y = forward(inputs, batch);
  std::vector<double> out(batch * output_dim());
  for (std::size_t n = 0; n < batch; ++n) {
    for (std::size_t k = 0; k < output_dim(); ++k) {
      out[n * output_dim() + k] =
          y(static_cast<Index>(k), static_cast<Index>(n)) * spec_.output_scale[k];
    }
  }
  return out;
}

double mse_loss(const Eigen::MatrixXd& output, const Eigen::MatrixXd& target,
                Eigen::MatrixXd* grad) {
  if (output.rows() != target.rows() || output.cols() != target.cols()) {
    throw ShapeError("loss target shape mismatch");
  }
  const Eigen::MatrixXd diff = output - target;
  const double count = static_cast<double>(diff.size());
  if (grad != nullptr) *grad = (2.0 / count) * diff;
  return diff.squaredNorm() / count;
}

double TrainConfig::learning_rate(std::size_t epoch) const {
  return lr0 * std::pow(decay, static_cast<double>(epoch));
}

void TrainConfig::validate() const {
  if (batch == 0) throw ConfigError("batch size must be positive");
  if (!(decay > 0.0 && decay <= 1.0)) throw ConfigError("learning-rate decay must be in (0, 1]");
  if (!(lr0 > 0.0)) throw ConfigError("learning rate must be positive");
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0)) {
    throw ConfigError("validation fraction must be in [0, 1)");
  }
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{{"batch", c.batch},     {"lr0", c.lr0},         {"decay", c.decay},
                     {"epochs", c.epochs},   {"beta1", c.beta1},     {"beta2", c.beta2},
                     {"epsilon", c.epsilon}, {"validation_fraction", c.validation_fraction},
                     {"seed", c.seed},       {"loss", "mse"},        {"optimizer", "adam"}};
}

AdamOptimizer::AdamOptimizer(std::size_t n, const TrainConfig& config)
    : beta1_(config.beta1),
      beta2_(config.beta2),
      epsilon_(config.epsilon),
      m_(Eigen::VectorXd::Zero(static_cast<Index>(n))),
      v_(Eigen::VectorXd::Zero(static_cast<Index>(n))) {}

void AdamOptimizer::step(Eigen::VectorXd& params, const Eigen::VectorXd& grads, double lr) {
  ++t_;
  m_ = beta1_ * m_ + (1.0 - beta1_) * grads;
  v_ = beta2_ * v_ + (1.0 - beta2_) * grads.cwiseProduct(grads);
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  params.array() -= lr * (m_.array() / c1) / ((v_.array() / c2).sqrt() + epsilon_);
}

namespace {

Eigen::MatrixXd scaled_targets(const Network& net, std::span<const float> labels,
                               std::size_t batch) {
  const std::size_t k = net.output_dim();
  Eigen::MatrixXd t(static_cast<Index>(k), static_cast<Index>(batch));
  for (std::size_t n = 0; n < batch; ++n) {
    for (std::size_t i = 0; i < k; ++i) {
      t(static_cast<Index>(i), static_cast<Index>(n)) =
          labels[n * k + i] / net.spec().output_scale[i];
    }
  }
  return t;
}

void gather(const Dataset& data, std::span<const std::size_t> idx, std::vector<float>& inputs,
            std::vector<float>& labels) {
  const std::size_t n_in = data.encoding.input_size();
  inputs.resize(idx.size() * n_in);
  labels.resize(idx.size() * data.label_dim);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const auto x = data.input(idx[i]);
    const auto y = data.label(idx[i]);
    std::copy(x.begin(), x.end(), inputs.begin() + static_cast<std::ptrdiff_t>(i * n_in));
    std::copy(y.begin(), y.end(),
              labels.begin() + static_cast<std::ptrdiff_t>(i * data.label_dim));
  }
}

}  // namespace

double train_step(Network& net, AdamOptimizer& optimizer, std::span<const float> inputs,
                  std::span<const float> labels, std::size_t batch, double lr) {
  const Eigen::MatrixXd out = net.forward(inputs, batch);
  Eigen::MatrixXd grad;
  const double loss = mse_loss(out, scaled_targets(net, labels, batch), &grad);
  if (!std::isfinite(loss)) {
    throw NumericalError("training loss is not finite (" + std::to_string(loss) +
                         ") after " + std::to_string(optimizer.steps()) + " steps");
  }
  net.backward(grad);
  optimizer.step(net.params(), net.grads(), lr);
  return loss;
}

double evaluate_loss(Network& net, const Dataset& dataset, std::span<const std::size_t> indices) {
  if (indices.empty()) return 0.0;
  constexpr std::size_t kChunk = 256;
  std::vector<float> inputs, labels;
  double total = 0.0;
  for (std::size_t start = 0; start < indices.size(); start += kChunk) {
    const auto idx = indices.subspan(start, std::min(kChunk, indices.size() - start));
    gather(dataset, idx, inputs, labels);
    const Eigen::MatrixXd out = net.forward(inputs, idx.size());
    total += mse_loss(out, scaled_targets(net, labels, idx.size()), nullptr) *
             static_cast<double>(idx.size());
  }
  return total / static_cast<double>(indices.size());
}

void to_json(nlohmann::json& j, const TrainResult& r) {
  j = nlohmann::json{{"initial_train_loss", r.initial_train_loss},
                     {"initial_val_loss", r.initial_val_loss},
                     {"train_loss", r.train_loss},
                     {"val_loss", r.val_loss},
                     {"best_epoch", r.best_epoch},
                     {"seconds", r.seconds}};
}

TrainResult train(Network& net, const Dataset& dataset, const TrainConfig& config) {
  config.validate();
  if (dataset.size() == 0) throw DataError("training dataset is empty");
  if (dataset.encoding.input_size() != net.input_size() ||
      dataset.label_dim != net.output_dim()) {
    throw ShapeError("dataset shape does not match the network");
  }
  if (dataset.model != net.spec().model) throw ShapeError("dataset model does not match the network");
  const auto t0 = std::chrono::steady_clock::now();

  Rng rng = make_rng(config.seed);
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  std::size_t n_val = static_cast<std::size_t>(
      std::llround(config.validation_fraction * static_cast<double>(dataset.size())));
  n_val = std::min(n_val, dataset.size() - 1);
  std::vector<std::size_t> val(order.end() - static_cast<std::ptrdiff_t>(n_val), order.end());
  std::vector<std::size_t> tr(order.begin(), order.end() - static_cast<std::ptrdiff_t>(n_val));

  TrainResult result;
  result.initial_train_loss = evaluate_loss(net, dataset, tr);
  result.initial_val_loss = val.empty() ? result.initial_train_loss : evaluate_loss(net, dataset, val);

  AdamOptimizer optimizer(net.param_count(), config);
  Eigen::VectorXd best = net.params();
  double best_loss = result.initial_val_loss;
  std::vector<float> inputs, labels;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const double lr = config.learning_rate(epoch);
    std::shuffle(tr.begin(), tr.end(), rng);
    double sum = 0.0;
    for (std::size_t start = 0; start < tr.size(); start += config.batch) {
      const std::span<const std::size_t> idx(tr.data() + start,
                                             std::min(config.batch, tr.size() - start));
      gather(dataset, idx, inputs, labels);
      sum += train_step(net, optimizer, inputs, labels, idx.size(), lr) *
             static_cast<double>(idx.size());
    }
    result.train_loss.push_back(sum / static_cast<double>(tr.size()));
    const double v = val.empty() ? result.train_loss.back() : evaluate_loss(net, dataset, val);
    result.val_loss.push_back(v);
    if (v < best_loss) {
      best_loss = v;
      best = net.params();
      result.best_epoch = epoch + 1;
    }
    if (config.verbose) {
      std::fprintf(stderr, "epoch %zu/%zu lr %.3g train %.5g val %.5g\n", epoch + 1,
                   config.epochs, lr, result.train_loss.back(), v);
    }
  }
  net.params() = best;
  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

void save_network(const std::filesystem::path& path, const Network& net) {
  const std::string text = nlohmann::json(net.spec()).dump();
  BinaryWriter out(path);
  out.bytes("QNET", 4);
  out.u32(static_cast<std::uint32_t>(text.size()));
  out.bytes(text.data(), text.size());
  out.u64(net.param_count());
  std::vector<float> w(net.param_count());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = static_cast<float>(net.params()(static_cast<Index>(i)));
  out.f32s(w);
  out.close();
}

Network load_network(const std::filesystem::path& path) {
  BinaryReader in(path);
  in.expect_magic("QNET");
  const std::string text = in.string(in.u32());
  NetworkSpec spec;
  try {
    spec = nlohmann::json::parse(text).get<NetworkSpec>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": bad network spec: " + e.what());
  }
  Network net(spec);
  const std::uint64_t count = in.u64();
  if (count != net.param_count()) {
    throw DataError(path.string() + ": weight count " + std::to_string(count) +
                    " does not match the spec (" + std::to_string(net.param_count()) + ")");
  }
  const auto w = in.f32s(count);
  in.expect_end();
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (!std::isfinite(w[i])) throw DataError(path.string() + ": non-finite weight");
    net.params()(static_cast<Index>(i)) = w[i];
  }
  return net;
}

}  // namespace qmap
