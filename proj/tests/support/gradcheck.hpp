#pragma once

// Central finite-difference checks for layers and whole networks.

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "qmap/common/rng.hpp"
#include "qmap/regressor/network.hpp"
#include "regressor/layers.hpp"

namespace qmap::testing {

struct GradCheck {
  std::string name;
  double input_error = 0.0;  // relative, over the probed entries
  double param_error = 0.0;
};

inline double relative_error(const std::vector<double>& a, const std::vector<double>& b) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double scale = std::max(std::sqrt(std::max(na, nb)), 1e-12);
  return std::sqrt(diff) / scale;
}

// Loss sum(r .* layer(x)) for a fixed random r, probing up to `probes`
// input entries and parameters.
inline GradCheck check_layer(detail::Layer& layer, const detail::Shape& in, std::size_t batch,
                             std::uint64_t seed, std::size_t probes = 60, double h = 1e-5) {
  Rng rng = make_rng(seed);
  std::vector<double> params(layer.param_count()), grads(layer.param_count());
  layer.bind(params.data(), grads.data());
  layer.init(rng);
  for (auto& p : params) p += 0.05 * standard_normal(rng);  // non-zero biases too

  Eigen::MatrixXd x(in.channels, batch * in.positions());
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = standard_normal(rng);
  Eigen::MatrixXd y;
  layer.forward(x, y, batch);
  Eigen::MatrixXd r(y.rows(), y.cols());
  for (Eigen::Index i = 0; i < r.size(); ++i) r.data()[i] = standard_normal(rng);

  auto loss = [&](const Eigen::MatrixXd& input) {
    Eigen::MatrixXd out;
    layer.forward(input, out, batch);
    return (out.array() * r.array()).sum();
  };

  layer.forward(x, y, batch);
  Eigen::MatrixXd gx;
  layer.backward(r, gx, batch);
  const std::vector<double> gp = grads;

  GradCheck result;
  result.name = layer.describe();
  std::vector<double> analytic, numeric;
  const std::size_t nx = static_cast<std::size_t>(x.size());
  for (std::size_t k = 0; k < std::min(probes, nx); ++k) {
    const std::size_t i = (k * 7919) % nx;
    Eigen::MatrixXd xp = x, xm = x;
    xp.data()[i] += h;
    xm.data()[i] -= h;
    numeric.push_back((loss(xp) - loss(xm)) / (2 * h));
    analytic.push_back(gx.data()[i]);
  }
  result.input_error = relative_error(analytic, numeric);

  analytic.clear();
  numeric.clear();
  for (std::size_t k = 0; k < std::min(probes, params.size()); ++k) {
    const std::size_t i = (k * 7919) % params.size();
    const double keep = params[i];
    params[i] = keep + h;
    const double lp = loss(x);
    params[i] = keep - h;
    const double lm = loss(x);
    params[i] = keep;
    numeric.push_back((lp - lm) / (2 * h));
    analytic.push_back(gp[i]);
  }
  result.param_error = relative_error(analytic, numeric);
  return result;
}

// Whole network under the MSE loss against random targets.
inline GradCheck check_network(Network& net, std::size_t batch, std::uint64_t seed,
                               std::size_t probes = 80, double h = 1e-5) {
  Rng rng = make_rng(seed);
  std::vector<float> x(batch * net.input_size());
  for (auto& v : x) v = static_cast<float>(uniform01(rng));
  Eigen::MatrixXd target(net.output_dim(), batch);
  for (Eigen::Index i = 0; i < target.size(); ++i) target.data()[i] = standard_normal(rng);

  auto loss = [&] { return mse_loss(net.forward(x, batch), target, nullptr); };
  Eigen::MatrixXd g;
  mse_loss(net.forward(x, batch), target, &g);
  net.backward(g);
  const Eigen::VectorXd grads = net.grads();

  GradCheck result;
  result.name = to_string(net.spec().kind);
  std::vector<double> analytic, numeric;
  auto& p = net.params();
  const std::size_t n = static_cast<std::size_t>(p.size());
  for (std::size_t k = 0; k < std::min(probes, n); ++k) {
    const std::size_t i = (k * 104729) % n;
    const double keep = p[static_cast<Eigen::Index>(i)];
    p[static_cast<Eigen::Index>(i)] = keep + h;
    const double lp = loss();
    p[static_cast<Eigen::Index>(i)] = keep - h;
    const double lm = loss();
    p[static_cast<Eigen::Index>(i)] = keep;
    numeric.push_back((lp - lm) / (2 * h));
    analytic.push_back(grads[static_cast<Eigen::Index>(i)]);
  }
  result.param_error = relative_error(analytic, numeric);
  return result;
}

// The layer zoo used by the checks: every layer type on small shapes.
struct LayerCase {
  std::unique_ptr<detail::Layer> layer;
  detail::Shape in;
};

inline std::vector<LayerCase> small_layers() {
  using detail::Shape;
  std::vector<LayerCase> cases;
  const Shape img{2, {5, 5}};
  const Shape vol{2, {4, 4, 4}};
  cases.push_back({std::make_unique<detail::Conv>(img, 3, 3, 1), img});
  cases.push_back({std::make_unique<detail::Conv>(img, 3, 3, 2), img});
  cases.push_back({std::make_unique<detail::Conv>(Shape{1, {6, 6}}, 2, 7, 2), Shape{1, {6, 6}}});
  cases.push_back({std::make_unique<detail::Conv>(vol, 2, 3, 2), vol});
  cases.push_back({std::make_unique<detail::Dense>(7, 4), Shape{7, {}}});
  cases.push_back({std::make_unique<detail::LeakyRelu>(img, 0.2), img});
  cases.push_back({std::make_unique<detail::LeakyRelu>(Shape{6, {}}, 0.0), Shape{6, {}}});
  cases.push_back({std::make_unique<detail::ResidualBlock>(Shape{3, {4, 4}}, 3, 0.2),
                   Shape{3, {4, 4}}});
  cases.push_back({std::make_unique<detail::GlobalAveragePool>(img), img});
  cases.push_back({std::make_unique<detail::Flatten>(img), img});
  cases.push_back({std::make_unique<detail::AppendOccupancy>(img), img});
  return cases;
}

}  // namespace qmap::testing
