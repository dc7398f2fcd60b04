// Copyright 2026 The qmap Authors
// SPDX-License-Identifier: Apache-2.0

#include "qmap/scheme/scheme.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>

#include <Eigen/Dense>

#include "qmap/common/error.hpp"

namespace qmap {

namespace detail {
extern const std::string_view kSchemeDtiA;
extern const std::string_view kSchemeDtiB;
extern const std::string_view kSchemeNoddiA;
extern const std::string_view kSchemeNoddiB;
}  // namespace detail

GradientScheme::GradientScheme(std::vector<Acquisition> entries, std::size_t n_b0)
    : entries_(std::move(entries)), n_b0_(n_b0) {
  if (entries_.empty()) throw DataError("gradient scheme has no diffusion-weighted entries");
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const auto& e = entries_[i];
    if (!(e.b > 0.0) || !std::isfinite(e.b)) {
      throw DataError("scheme entry " + std::to_string(i) + ": b-value must be positive");
    }
    if (std::abs(e.dir.norm() - 1.0) > 1e-6) {
      throw DataError("scheme entry " + std::to_string(i) + ": direction is not unit length");
    }
  }
}

double GradientScheme::max_b() const {
  double m = 0.0;
  for (const auto& e : entries_) m = std::max(m, e.b);
  return m;
}

GradientScheme GradientScheme::subset(std::span<const std::size_t> indices) const {
  std::vector<Acquisition> picked;
  picked.reserve(indices.size());
  for (std::size_t i : indices) {
    if (i >= entries_.size()) throw DataError("subset index out of range");
    picked.push_back(entries_[i]);
  }
  return GradientScheme(std::move(picked), n_b0_);
}

bool operator==(const GradientScheme& a, const GradientScheme& b) {
  if (a.n_b0_ != b.n_b0_ || a.entries_.size() != b.entries_.size()) return false;
  for (std::size_t i = 0; i < a.entries_.size(); ++i) {
    if (a.entries_[i].b != b.entries_[i].b || a.entries_[i].dir != b.entries_[i].dir) return false;
  }
  return true;
}

namespace {

bool parse_double(std::string_view token, double& out) {
  // from_chars for double is available in libstdc++ 11.
  const char* first = token.data();
  const char* last = token.data() + token.size();
  if (first != last && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last && std::isfinite(out);
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    std::size_t j = i;
    while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
    if (j > i) fields.push_back(line.substr(i, j - i));
    i = j;
  }
  return fields;
}

}  // namespace

GradientScheme parse_scheme(std::string_view text) {
  std::vector<Acquisition> entries;
  std::size_t n_b0 = 0;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    const auto fields = split_fields(line);
    if (fields.empty()) continue;

    double values[4] = {0.0, 0.0, 0.0, 0.0};
    for (std::size_t k = 0; k < fields.size() && k < 4; ++k) {
      if (!parse_double(fields[k], values[k])) {
        throw ParseError(line_no, "cannot parse number '" + std::string(fields[k]) + "'");
      }
    }
    const double b = values[0];
    if (b < 0.0) throw ParseError(line_no, "negative b-value");
    if (b == 0.0 && (fields.size() == 1 || fields.size() == 4)) {
      ++n_b0;
      continue;
    }
    if (fields.size() != 4) {
      throw ParseError(line_no, "expected 4 fields (b gx gy gz), got " + std::to_string(fields.size()));
    }
    Eigen::Vector3d dir(values[1], values[2], values[3]);
    const double norm = dir.norm();
    if (!(norm > 1e-12)) throw ParseError(line_no, "zero-length gradient direction");
    entries.push_back({b, dir / norm});
  }
  if (entries.empty()) throw ParseError(line_no, "no diffusion-weighted rows");
  return GradientScheme(std::move(entries), n_b0);
}

GradientScheme load_scheme(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open scheme file " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  try {
    return parse_scheme(buffer.str());
  } catch (const ParseError& e) {
    throw ParseError(e.line(), path.string() + ": " + std::string(e.what()));
  }
}

std::string format_scheme(const GradientScheme& scheme) {
  std::ostringstream out;
  out.precision(17);
  out << "# b gx gy gz\n";
  for (std::size_t i = 0; i < scheme.n_b0(); ++i) out << "0 0 0 0\n";
  for (const auto& e : scheme.entries()) {
    out << e.b << ' ' << e.dir.x() << ' ' << e.dir.y() << ' ' << e.dir.z() << '\n';
  }
  return out.str();
}

std::vector<std::string> builtin_scheme_names() { return {"dti_a", "dti_b", "noddi_a", "noddi_b"}; }

GradientScheme builtin_scheme(std::string_view name) {
  if (name == "dti_a") return parse_scheme(detail::kSchemeDtiA);
  if (name == "dti_b") return parse_scheme(detail::kSchemeDtiB);
  if (name == "noddi_a") return parse_scheme(detail::kSchemeNoddiA);
  if (name == "noddi_b") return parse_scheme(detail::kSchemeNoddiB);
  throw DataError("unknown builtin scheme '" + std::string(name) + "'");
}

GradientScheme resolve_scheme(std::string_view name_or_path) {
  const auto names = builtin_scheme_names();
  if (std::find(names.begin(), names.end(), name_or_path) != names.end()) {
    return builtin_scheme(name_or_path);
  }
  return load_scheme(std::filesystem::path(std::string(name_or_path)));
}

std::vector<QPoint> normalize_qpoints(const GradientScheme& scheme, double b_norm) {
  if (!(b_norm > 0.0)) throw ConfigError("normalization b-value must be positive");
  std::vector<QPoint> points;
  points.reserve(scheme.size());
  for (std::size_t i = 0; i < scheme.size(); ++i) {
    const auto& e = scheme[i];
    if (e.b > b_norm) {
      throw RangeError("b-value " + std::to_string(e.b) + " exceeds the normalization b-value " +
                       std::to_string(b_norm));
    }
    points.push_back({std::sqrt(e.b / b_norm) * e.dir, i});
  }
  return points;
}

ShellPartition group_shells(const GradientScheme& scheme, double tolerance) {
  if (tolerance < 0.0) throw ConfigError("shell tolerance must be non-negative");
  std::vector<std::size_t> order(scheme.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scheme[a].b < scheme[b].b; });

  ShellPartition partition;
  double shell_min = 0.0;
  for (std::size_t idx : order) {
    const double b = scheme[idx].b;
    if (partition.shells.empty() || b - shell_min > tolerance) {
      partition.shells.push_back({0.0, {}});
      shell_min = b;
    }
    partition.shells.back().members.push_back(idx);
  }
  for (auto& shell : partition.shells) {
    double sum = 0.0;
    for (std::size_t idx : shell.members) sum += scheme[idx].b;
    shell.b = sum / static_cast<double>(shell.members.size());
    std::sort(shell.members.begin(), shell.members.end());
  }
  return partition;
}

double condition_number(std::span<const Eigen::Vector3d> directions) {
  if (directions.size() < 6) return std::numeric_limits<double>::infinity();
  Eigen::MatrixXd design(static_cast<Eigen::Index>(directions.size()), 6);
  for (std::size_t i = 0; i < directions.size(); ++i) {
    const Eigen::Vector3d g = directions[i].normalized();
    design.row(static_cast<Eigen::Index>(i)) << g.x() * g.x(), g.y() * g.y(), g.z() * g.z(),
        2 * g.x() * g.y(), 2 * g.x() * g.z(), 2 * g.y() * g.z();
  }
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(design);
  const auto& sv = svd.singularValues();
  const double largest = sv[0];
  const double smallest = sv[sv.size() - 1];
  if (!(smallest > largest * 1e-10)) return std::numeric_limits<double>::infinity();
  return largest / smallest;
}

double condition_number(const GradientScheme& scheme) {
  std::vector<Eigen::Vector3d> dirs;
  dirs.reserve(scheme.size());
  for (const auto& e : scheme.entries()) dirs.push_back(e.dir);
  return condition_number(dirs);
}

GradientScheme select_subset(const GradientScheme& scheme,
                             std::span<const std::size_t> k_per_shell,
                             const SubsetOptions& options) {
  if (options.n_candidates < 1) throw ConfigError("select_subset needs at least one candidate");
  const ShellPartition shells = group_shells(scheme, options.shell_tolerance);
  if (k_per_shell.size() != shells.size()) {
    throw DataError("select_subset: got " + std::to_string(k_per_shell.size()) +
                    " per-shell counts for " + std::to_string(shells.size()) + " shells");
  }
  for (std::size_t s = 0; s < shells.size(); ++s) {
    if (k_per_shell[s] > shells.shells[s].members.size()) {
      throw DataError("select_subset: k=" + std::to_string(k_per_shell[s]) + " exceeds shell size " +
                      std::to_string(shells.shells[s].members.size()) + " at b=" +
                      std::to_string(shells.shells[s].b));
    }
  }

  Rng rng = make_rng(options.seed);
  std::vector<std::size_t> best;
  double best_cond = std::numeric_limits<double>::infinity();
  std::vector<Eigen::Vector3d> dirs;
  for (std::size_t c = 0; c < options.n_candidates; ++c) {
    std::vector<std::size_t> picked;
    for (std::size_t s = 0; s < shells.size(); ++s) {
      std::vector<std::size_t> pool = shells.shells[s].members;
      // Partial Fisher-Yates.
      for (std::size_t i = 0; i < k_per_shell[s]; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
        std::swap(pool[i], pool[pick(rng)]);
        picked.push_back(pool[i]);
      }
    }
    std::sort(picked.begin(), picked.end());
    dirs.clear();
    for (std::size_t i : picked) dirs.push_back(scheme[i].dir);
    const double cond = condition_number(dirs);
    if (best.empty() || cond < best_cond) {
      best_cond = cond;
      best = std::move(picked);
    }
  }
  return scheme.subset(best);
}

GradientScheme select_subset(const GradientScheme& scheme, std::size_t k,
                             const SubsetOptions& options) {
  const std::size_t n_shells = group_shells(scheme, options.shell_tolerance).size();
  const std::vector<std::size_t> ks(n_shells, k);
  return select_subset(scheme, ks, options);
}

std::vector<Eigen::Vector3d> hemisphere_directions(std::size_t n) {
  // Upper half of a 2n-point Fibonacci sphere.
  std::vector<Eigen::Vector3d> dirs;
  dirs.reserve(n);
  const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
  const double total = 2.0 * static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double z = 1.0 - (2.0 * static_cast<double>(i) + 1.0) / total;
    const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    const double phi = golden * static_cast<double>(i);
    dirs.emplace_back(r * std::cos(phi), r * std::sin(phi), z);
  }
  return dirs;
}

std::vector<Eigen::Vector3d> random_scheme_directions(std::size_t n, Rng& rng) {
  auto dirs = hemisphere_directions(n);
  const Eigen::Matrix3d rot = random_rotation(rng);
  const bool flip = uniform01(rng) < 0.5;
  for (auto& d : dirs) {
    d = (rot * d).normalized();
    if (flip && uniform01(rng) < 0.5) d = -d;
  }
  return dirs;
}

}  // namespace qmap
