// Copyright 2026 The qmap Authors
// SPDX-License-Identifier: Apache-2.0

#include "layers.hpp"

#include <cmath>

#include "qmap/common/error.hpp"

namespace qmap::detail {
namespace {

using Eigen::Index;
using MatrixMap = Eigen::Map<Eigen::MatrixXd>;
using VectorMap = Eigen::Map<Eigen::VectorXd>;

void xavier_uniform(double* w, std::size_t count, std::size_t fan_in, std::size_t fan_out,
                    Rng& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (std::size_t i = 0; i < count; ++i) w[i] = a * (2.0 * uniform01(rng) - 1.0);
}

std::string shape_text(const Shape& s) {
  std::string t = std::to_string(s.channels);
  for (std::size_t d : s.spatial) t += "x" + std::to_string(d);
  return t;
}

}  // namespace

std::size_t Shape::positions() const {
  std::size_t p = 1;
  for (std::size_t d : spatial) p *= d;
  return p;
}

Conv::Conv(const Shape& in, std::size_t out_channels, std::size_t kernel, std::size_t stride)
    : in_(in), kernel_(kernel), stride_(stride) {
  if (in.spatial.empty()) throw ConfigError("convolution needs a spatial input");
  if (kernel == 0 || stride == 0 || out_channels == 0) {
    throw ConfigError("convolution kernel, stride and channels must be positive");
  }
  const std::size_t dims = in.spatial.size();
  const auto pad = static_cast<long>((kernel - 1) / 2);
  out_.channels = out_channels;
  for (std::size_t d : in.spatial) {
    const long span = static_cast<long>(d) + 2 * pad - static_cast<long>(kernel);
    if (span < 0) throw ConfigError("input smaller than the convolution kernel");
    out_.spatial.push_back(static_cast<std::size_t>(span) / stride + 1);
  }
  taps_ = 1;
  for (std::size_t d = 0; d < dims; ++d) taps_ *= kernel;

  const std::size_t n_out = out_.positions();
  gather_.assign(n_out * taps_, -1);
  std::vector<std::size_t> o(dims), t(dims);
  for (std::size_t p = 0; p < n_out; ++p) {
    std::size_t rem = p;
    for (std::size_t d = dims; d-- > 0;) {
      o[d] = rem % out_.spatial[d];
      rem /= out_.spatial[d];
    }
    for (std::size_t tap = 0; tap < taps_; ++tap) {
      std::size_t r = tap;
      for (std::size_t d = dims; d-- > 0;) {
        t[d] = r % kernel;
        r /= kernel;
      }
      long lin = 0;
      bool inside = true;
      for (std::size_t d = 0; d < dims; ++d) {
        const long i = static_cast<long>(o[d] * stride) - pad + static_cast<long>(t[d]);
        if (i < 0 || i >= static_cast<long>(in.spatial[d])) {
          inside = false;
          break;
        }
        lin = lin * static_cast<long>(in.spatial[d]) + i;
      }
      if (inside) gather_[p * taps_ + tap] = static_cast<int>(lin);
    }
  }
}

std::string Conv::describe() const {
  return "conv " + shape_text(in_) + " -> " + shape_text(out_) + " k" + std::to_string(kernel_) +
         " s" + std::to_string(stride_);
}

std::size_t Conv::param_count() const {
  return out_.channels * in_.channels * taps_ + out_.channels;
}

void Conv::bind(double* params, double* grads) {
  const std::size_t nw = out_.channels * in_.channels * taps_;
  w_ = params;
  b_ = params + nw;
  gw_ = grads;
  gb_ = grads + nw;
}

void Conv::init(Rng& rng) {
  const std::size_t nw = out_.channels * in_.channels * taps_;
  xavier_uniform(w_, nw, in_.channels * taps_, out_.channels * taps_, rng);
  std::fill(b_, b_ + out_.channels, 0.0);
}

std::vector<Layer::Weights> Conv::weights() const {
  return {{0, out_.channels * in_.channels * taps_, in_.channels * taps_, out_.channels * taps_}};
}

void Conv::forward(const Eigen::MatrixXd& in, Eigen::MatrixXd& out, std::size_t batch) {
  const std::size_t cin = in_.channels;
  const std::size_t s_in = in_.positions();
  const std::size_t p_out = out_.positions();
  cols_.resize(static_cast<Index>(cin * taps_), static_cast<Index>(batch * p_out));
  for (std::size_t n = 0; n < batch; ++n) {
    for (std::size_t p = 0; p < p_out; ++p) {
      double* col = cols_.col(static_cast<Index>(n * p_out + p)).data();
      const int* g = &gather_[p * taps_];
      for (std::size_t c = 0; c < cin; ++c) {
        for (std::size_t tap = 0; tap < taps_; ++tap) {
          col[c * taps_ + tap] =
              g[tap] < 0 ? 0.0
                         : in(static_cast<Index>(c),
                              static_cast<Index>(n * s_in + static_cast<std::size_t>(g[tap])));
        }
      }
    }
  }
  const MatrixMap w(w_, static_cast<Index>(out_.channels), static_cast<Index>(cin * taps_));
  const VectorMap b(b_, static_cast<Index>(out_.channels));
  out.noalias() = w * cols_;
  out.colwise() += b;
}

void Conv::backward(const Eigen::MatrixXd& grad_out, Eigen::MatrixXd& grad_in,
                    std::size_t batch) {
  const std::size_t cin = in_.channels;
  const std::size_t s_in = in_.positions();
  const std::size_t p_out = out_.positions();
  const MatrixMap w(w_, static_cast<Index>(out_.channels), static_cast<Index>(cin * taps_));
  MatrixMap gw(gw_, static_cast<Index>(out_.channels), static_cast<Index>(cin * taps_));
  VectorMap gb(gb_, static_cast<Index>(out_.channels));
  gw.noalias() = grad_out * cols_.transpose();
  gb = grad_out.rowwise().sum();
  const Eigen::MatrixXd gcols = w.transpose() * grad_out;
  grad_in.setZero(static_cast<Index>(cin), static_cast<Index>(batch * s_in));
  for (std::size_t n = 0; n < batch; ++n) {
    for (std::size_t p = 0; p < p_out; ++p) {
      const double* col = gcols.col(static_cast<Index>(n * p_out + p)).data();
      const int* g = &gather_[p * taps_];
      for (std::size_t c = 0; c < cin; ++c) {
        for (std::size_t tap = 0; tap < taps_; ++tap) {
          if (g[tap] < 0) continue;
          grad_in(static_cast<Index>(c),
                  static_cast<Index>(n * s_in + static_cast<std::size_t>(g[tap]))) +=
              col[c * taps_ + tap];
        }
      }
    }
  }
}

Dense::Dense(std::size_t in, std::size_t out) : in_(in), out_(out) {
  if (in == 0 || out == 0) throw ConfigError("dense layer sizes must be positive");
}

std::string Dense::describe() const {
  return "dense " + std::to_string(in_) + " -> " + std::to_string(out_);
}

void Dense::bind(double* params, double* grads) {
  w_ = params;
  b_ = params + in_ * out_;
  gw_ = grads;
  gb_ = grads + in_ * out_;
}

void Dense::init(Rng& rng) {
  xavier_uniform(w_, in_ * out_, in_, out_, rng);
  std::fill(b_, b_ + out_, 0.0);
}

std::vector<Layer::Weights> Dense::weights() const { return {{0, in_ * out_, in_, out_}}; }

void Dense::forward(const Eigen::MatrixXd& in, Eigen::MatrixXd& out, std::size_t /*batch*/) {
  if (in.rows() != static_cast<Index>(in_)) throw ShapeError("dense layer input size mismatch");
  input_ = in;
  const MatrixMap w(w_, static_cast<Index>(out_), static_cast<Index>(in_));
  const VectorMap b(b_, static_cast<Index>(out_));
  out.noalias() = w * in;
  out.colwise() += b;
}

void Dense::backward(const Eigen::MatrixXd& grad_out, Eigen::MatrixXd& grad_in,
                     std::size_t /*batch*/) {
  const MatrixMap w(w_, static_cast<Index>(out_), static_cast<Index>(in_));
  MatrixMap gw(gw_, static_cast<Index>(out_), static_cast<Index>(in_));
  VectorMap gb(gb_, static_cast<Index>(out_));
  gw.noalias() = grad_out * input_.transpose();
  gb = grad_out.rowwise().sum();
  grad_in.noalias() = w.transpose() * grad_out;
}

std::string LeakyRelu::describe() const {
  return slope_ == 0.0 ? "relu" : "leaky_relu " + std::to_string(slope_);
}

void LeakyRelu::forward(const Eigen::MatrixXd& in, Eigen::MatrixXd& out, std::size_t /*batch*/) {
  input_ = in;
  out = in.unaryExpr([s = slope_](double x) { return x > 0.0 ? x : s * x; });
}

void LeakyRelu::backward(const Eigen::MatrixXd& grad_out, Eigen::MatrixXd& grad_in,
                         std::size_t /*batch*/) {
  grad_in = grad_out.binaryExpr(input_, [s = slope_](double g, double x) {
    return x > 0.0 ? g : s * g;
  });
}

ResidualBlock::ResidualBlock(const Shape& shape, std::size_t kernel, double slope)
    : shape_(shape),
      conv1_(shape, shape.channels, kernel, 1),
      conv2_(shape, shape.channels, kernel, 1),
      act1_(shape, slope),
      act_out_(shape, slope) {}

std::string ResidualBlock::describe() const {
  return "residual [" + conv1_.describe() + ", " + act1_.describe() + ", " + conv2_.describe() +
         "] + skip, " + act_out_.describe();
}

std::size_t ResidualBlock::param_count() const {
  return conv1_.param_count() + conv2_.param_count();
}

void ResidualBlock::bind(double* params, double* grads) {
  conv1_.bind(params, grads);
  conv2_.bind(params + conv1_.param_count(), grads + conv1_.param_count());
}

void ResidualBlock::init(Rng& rng) {
  conv1_.init(rng);
  conv2_.init(rng);
}

std::vector<Layer::Weights> ResidualBlock::weights() const {
  auto a = conv1_.weights();
  for (auto w : conv2_.weights()) {
    w.offset += conv1_.param_count();
    a.push_back(w);
  }
  return a;
}

void ResidualBlock::forward(const Eigen::MatrixXd& in, Eigen::MatrixXd& out, std::size_t batch) {
  conv1_.forward(in, h1_, batch);
  act1_.forward(h1_, a1_, batch);
  conv2_.forward(a1_, h2_, batch);
  h2_ += in;
  act_out_.forward(h2_, out, batch);
}

void ResidualBlock::backward(const Eigen::MatrixXd& grad_out, Eigen::MatrixXd& grad_in,
                             std::size_t batch) {
  Eigen::MatrixXd g_sum, g_a1, g_h1;
  act_out_.backward(grad_out, g_sum, batch);
  conv2_.backward(g_sum, g_a1, batch);
  act1_.backward(g_a1, g_h1, batch);
  conv1_.backward(g_h1, grad_in, batch);
  grad_in += g_sum;
}

std::string GlobalAveragePool::describe() const {
  return "global_average_pool " + shape_text(in_) + " -> " + std::to_string(in_.channels);
}

std::string AppendOccupancy::describe() const {
  return "occupancy " + shape_text(in_) + " -> " + shape_text(output_shape());
}

void AppendOccupancy::forward(const Eigen::MatrixXd& in, Eigen::MatrixXd& out,
                              std::size_t /*batch*/) {
  const Index c = in.rows();
  out.resize(2 * c, in.cols());
  out.topRows(c) = in;
  out.bottomRows(c) = (in.array() != 0.0).cast<double>();
}

void AppendOccupancy::backward(const Eigen::MatrixXd& grad_out, Eigen::MatrixXd& grad_in,
                               std::size_t /*batch*/) {
  grad_in = grad_out.topRows(static_cast<Index>(in_.channels));
}

std::string Flatten::describe() const {
  return "flatten " + shape_text(in_) + " -> " + std::to_string(in_.size());
}

void Flatten::forward(const Eigen::MatrixXd& in, Eigen::MatrixXd& out, std::size_t batch) {
  // Columns of one sample are contiguous, so each sample is one block of memory.
  const auto n = static_cast<Index>(in_.size());
  out = Eigen::Map<const Eigen::MatrixXd>(in.data(), n, static_cast<Index>(batch));
}

void Flatten::backward(const Eigen::MatrixXd& grad_out, Eigen::MatrixXd& grad_in,
                       std::size_t batch) {
  const auto c = static_cast<Index>(in_.channels);
  grad_in = Eigen::Map<const Eigen::MatrixXd>(grad_out.data(), c,
                                              static_cast<Index>(batch * in_.positions()));
}

void GlobalAveragePool::forward(const Eigen::MatrixXd& in, Eigen::MatrixXd& out,
                                std::size_t batch) {
  const auto p = static_cast<Index>(in_.positions());
  out.resize(static_cast<Index>(in_.channels), static_cast<Index>(batch));
  for (Index n = 0; n < static_cast<Index>(batch); ++n) {
    out.col(n) = in.middleCols(n * p, p).rowwise().mean();
  }
}

void GlobalAveragePool::backward(const Eigen::MatrixXd& grad_out, Eigen::MatrixXd& grad_in,
                                 std::size_t batch) {
  const auto p = static_cast<Index>(in_.positions());
  grad_in.resize(static_cast<Index>(in_.channels), static_cast<Index>(batch) * p);
  const double inv = 1.0 / static_cast<double>(p);
  for (Index n = 0; n < static_cast<Index>(batch); ++n) {
    grad_in.middleCols(n * p, p) = (grad_out.col(n) * inv).replicate(1, p);
  }
}

}  // namespace qmap::detail
