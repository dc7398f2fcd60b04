// Copyright 2026 The qmap Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "qmap/common/rng.hpp"

namespace qmap::detail {

struct Shape {
  std::size_t channels = 0;
  std::vector<std::size_t> spatial;  // empty for flat features

  std::size_t positions() const;
  std::size_t size() const { return channels * positions(); }
};

// Activations are (channels, batch * positions), sample-major columns.
class Layer {
 public:
  virtual ~Layer() = default;
  virtual std::unique_ptr<Layer> clone() const = 0;

  virtual Shape output_shape() const = 0;
  virtual std::string describe() const = 0;

  virtual std::size_t param_count() const { return 0; }
  // Points the layer at its slice of the flat parameter and gradient stores.
  virtual void bind(double* /*params*/, double* /*grads*/) {}
  virtual void init(Rng& /*rng*/) {}
  // (offset within the layer, count, fan_in, fan_out) of each weight tensor.
  struct Weights {
    std::size_t offset, count, fan_in, fan_out;
  };
  virtual std::vector<Weights> weights() const { return {}; }

  virtual void forward(const Eigen::MatrixXd& in, Eigen::MatrixXd& out, std::size_t batch) = 0;
  // Uses state cached by the last forward(); overwrites this layer's grads.
  virtual void backward(const Eigen::MatrixXd& grad_out, Eigen::MatrixXd& grad_in,
                        std::size_t batch) = 0;
};

// N-d convolution with zero padding (kernel - 1) / 2, via im2col + GEMM.
class Conv final : public Layer {
 public:
  Conv(const Shape& in, std::size_t out_channels, std::size_t kernel, std::size_t stride);
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Conv>(*this); }

  Shape output_shape() const override { return out_; }
  std::string describe() const override;
  std::size_t param_count() const override;
  void bind(double* params, double* grads) override;
  void init(Rng& rng) override;
  std::vector<Weights> weights() const override;
  void forward(const Eigen::MatrixXd& in, Eigen::MatrixXd& out, std::size_t batch) override;
  void backward(const Eigen::MatrixXd& grad_out, Eigen::MatrixXd& grad_in,
                std::size_t batch) override;

 private:
  Shape in_, out_;
  std::size_t kernel_, stride_, taps_;
  std::vector<int> gather_;  // out position * taps + tap -> input position or -1
  double* w_ = nullptr;      // (out channels, in channels * taps), column-major
  double* b_ = nullptr;
  double* gw_ = nullptr;
  double* gb_ = nullptr;
  Eigen::MatrixXd cols_;
};

class Dense final : public Layer {
 public:
  Dense(std::size_t in, std::size_t out);
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Dense>(*this); }

  Shape output_shape() const override { return {out_, {}}; }
  std::string describe() const override;
  std::size_t param_count() const override { return out_ * in_ + out_; }
  void bind(double* params, double* grads) override;
  void init(Rng& rng) override;
  std::vector<Weights> weights() const override;
  void forward(const Eigen::MatrixXd& in, Eigen::MatrixXd& out, std::size_t batch) override;
  void backward(const Eigen::MatrixXd& grad_out, Eigen::MatrixXd& grad_in,
                std::size_t batch) override;

 private:
  std::size_t in_, out_;
  double* w_ = nullptr;
  double* b_ = nullptr;
  double* gw_ = nullptr;
  double* gb_ = nullptr;
  Eigen::MatrixXd input_;
};

// Leaky rectifier; slope 0 gives the plain ReLU.
class LeakyRelu final : public Layer {
 public:
  LeakyRelu(const Shape& shape, double slope) : shape_(shape), slope_(slope) {}
  std::unique_ptr<Layer> clone() const override { return std::make_unique<LeakyRelu>(*this); }

  Shape output_shape() const override { return shape_; }
  std::string describe() const override;
  void forward(const Eigen::MatrixXd& in, Eigen::MatrixXd& out, std::size_t batch) override;
  void backward(const Eigen::MatrixXd& grad_out, Eigen::MatrixXd& grad_in,
                std::size_t batch) override;

 private:
  Shape shape_;
  double slope_;
  Eigen::MatrixXd input_;
};

// act(x + conv(act(conv(x)))), same-size convolutions.
class ResidualBlock final : public Layer {
 public:
  ResidualBlock(const Shape& shape, std::size_t kernel, double slope);
  std::unique_ptr<Layer> clone() const override {
    return std::make_unique<ResidualBlock>(*this);
  }

  Shape output_shape() const override { return shape_; }
  std::string describe() const override;
  std::size_t param_count() const override;
  void bind(double* params, double* grads) override;
  void init(Rng& rng) override;
  std::vector<Weights> weights() const override;
  void forward(const Eigen::MatrixXd& in, Eigen::MatrixXd& out, std::size_t batch) override;
  void backward(const Eigen::MatrixXd& grad_out, Eigen::MatrixXd& grad_in,
                std::size_t batch) override;

 private:
  Shape shape_;
  Conv conv1_, conv2_;
  LeakyRelu act1_, act_out_;
  Eigen::MatrixXd h1_, a1_, h2_;
};

// Appends one indicator channel per input channel: 1 where the input is
// non-zero (an occupied Qmatrix bin), 0 elsewhere. No parameters.
class AppendOccupancy final : public Layer {
 public:
  explicit AppendOccupancy(const Shape& in) : in_(in) {}
  std::unique_ptr<Layer> clone() const override {
    return std::make_unique<AppendOccupancy>(*this);
  }

  Shape output_shape() const override { return {2 * in_.channels, in_.spatial}; }
  std::string describe() const override;
  void forward(const Eigen::MatrixXd& in, Eigen::MatrixXd& out, std::size_t batch) override;
  void backward(const Eigen::MatrixXd& grad_out, Eigen::MatrixXd& grad_in,
                std::size_t batch) override;

 private:
  Shape in_;
};

// (C, N * P) -> (C * P, N); feature c + C * p.
class Flatten final : public Layer {
 public:
  explicit Flatten(const Shape& in) : in_(in) {}
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Flatten>(*this); }

  Shape output_shape() const override { return {in_.size(), {}}; }
  std::string describe() const override;
  void forward(const Eigen::MatrixXd& in, Eigen::MatrixXd& out, std::size_t batch) override;
  void backward(const Eigen::MatrixXd& grad_out, Eigen::MatrixXd& grad_in,
                std::size_t batch) override;

 private:
  Shape in_;
};

// Mean over spatial positions: (C, N * P) -> (C, N).
class GlobalAveragePool final : public Layer {
 public:
  explicit GlobalAveragePool(const Shape& in) : in_(in) {}
  std::unique_ptr<Layer> clone() const override {
    return std::make_unique<GlobalAveragePool>(*this);
  }

  Shape output_shape() const override { return {in_.channels, {}}; }
  std::string describe() const override;
  void forward(const Eigen::MatrixXd& in, Eigen::MatrixXd& out, std::size_t batch) override;
  void backward(const Eigen::MatrixXd& grad_out, Eigen::MatrixXd& grad_in,
                std::size_t batch) override;

 private:
  Shape in_;
};

}  // namespace qmap::detail
