// Copyright 2026 The qmap Authors
// SPDX-License-Identifier: Apache-2.0

#include "qmap/forward/dataset.hpp"

#include <fstream>

#include "qmap/common/error.hpp"
#include "qmap/common/io.hpp"
#include "qmap/common/parallel.hpp"
#include "qmap/fit/fit.hpp"

namespace qmap {
namespace {

constexpr std::uint32_t kDatasetVersion = 1;

std::uint32_t variant_tag(InputVariant v) {
  switch (v) {
    case InputVariant::q2d:
      return 0;
    case InputVariant::q3d:
      return 1;
    case InputVariant::vector:
      return 2;
  }
  return 0;
}

InputVariant variant_from_tag(std::uint32_t tag) {
  switch (tag) {
    case 0:
      return InputVariant::q2d;
    case 1:
      return InputVariant::q3d;
    case 2:
      return InputVariant::vector;
    default:
      throw DataError("unknown input variant tag " + std::to_string(tag));
  }
}

std::filesystem::path sidecar_path(const std::filesystem::path& path) {
  return path.string() + ".json";
}

nlohmann::json range_json(const Range& r) { return nlohmann::json::array({r.lo, r.hi}); }
nlohmann::json range_json(const CountRange& r) { return nlohmann::json::array({r.lo, r.hi}); }

}  // namespace

std::string to_string(ModelKind model) { return model == ModelKind::dti ? "dti" : "noddi"; }

ModelKind parse_model_kind(std::string_view text) {
  if (text == "dti" || text == "DTI") return ModelKind::dti;
  if (text == "noddi" || text == "NODDI") return ModelKind::noddi;
  throw ConfigError("unknown model '" + std::string(text) + "'");
}

std::vector<std::string> label_names(ModelKind model) {
  if (model == ModelKind::dti) return {"FA", "MD", "AD", "RD"};
  return {"ICVF", "ISOVF", "ODI"};
}

std::vector<double> dti_label(const DtiGroundTruth& truth, const GradientScheme& scheme) {
  std::vector<double> clean(scheme.size());
  for (std::size_t j = 0; j < scheme.size(); ++j) {
    clean[j] = dti_signal(truth, scheme[j].b, scheme[j].dir);
  }
  const auto s = dti_scalars(fit_dti_lls(clean, scheme).tensor);
  return {s.fa, s.md, s.ad, s.rd};
}

std::vector<double> noddi_label(const NoddiGroundTruth& truth) {
  return {truth.icvf, truth.isovf, truth.odi};
}

DatasetConfig DatasetConfig::for_model(ModelKind model) {
  DatasetConfig c;
  c.model = model;
  c.sim = model == ModelKind::dti ? SimConfig::dti() : SimConfig::noddi();
  return c;
}

void DatasetConfig::validate() const {
  if (n_samples == 0) throw ConfigError("dataset needs at least one sample");
  sim.validate();
  if (snr && !(snr->lo > 0.0 && snr->hi >= snr->lo)) {
    throw ConfigError("snr range must satisfy 0 < lo <= hi");
  }
}

void to_json(nlohmann::json& j, const DatasetConfig& c) {
  j["model"] = to_string(c.model);
  j["n_samples"] = c.n_samples;
  j["seed"] = c.seed;
  j["analytic"] = c.analytic;
  j["simulation"] = {{"n_protons", c.sim.n_protons},   {"dt_ms", c.sim.dt},
                     {"te_ms", c.sim.te},              {"delta_small_ms", c.sim.delta_small},
                     {"delta_big_ms", c.sim.delta_big}, {"gamma", c.sim.gamma},
                     {"n_b0_average", c.sim.n_b0_average}};
  j["snr"] = c.snr ? range_json(*c.snr) : nlohmann::json(nullptr);
  if (c.fixed_scheme) {
    j["fixed_scheme"] = format_scheme(*c.fixed_scheme);
  } else if (c.model == ModelKind::dti) {
    j["prior"] = {{"d_max", c.dti_prior.d_max},
                  {"b", range_json(c.dti_prior.b)},
                  {"n", range_json(c.dti_prior.n)}};
  } else {
    auto shells = nlohmann::json::array();
    for (std::size_t s = 0; s < 3; ++s) {
      shells.push_back({{"b", range_json(c.noddi_prior.b[s])},
                        {"n", range_json(c.noddi_prior.n[s])}});
    }
    j["prior"] = {{"shells", shells}};
  }
}

std::vector<RawSample> simulate_samples(const DatasetConfig& config) {
  config.validate();
  std::vector<RawSample> out(config.n_samples);
  parallel_for(config.n_samples, config.threads, [&](std::size_t i) {
    Rng rng = make_rng(config.seed, i);
    RawSample& s = out[i];
    GroundTruth truth;
    if (config.model == ModelKind::dti) {
      DtiGroundTruth t;
      if (config.fixed_scheme) {
        t = sample_dti_tensor(rng, config.dti_prior.d_max);
        s.scheme = *config.fixed_scheme;
      } else {
        std::tie(t, s.scheme) = sample_dti_truth(rng, config.dti_prior);
      }
      s.label = dti_label(t, s.scheme);
      truth = t;
    } else {
      NoddiGroundTruth t;
      if (config.fixed_scheme) {
        t = sample_noddi_parameters(rng);
        s.scheme = *config.fixed_scheme;
      } else {
        std::tie(t, s.scheme) = sample_noddi_truth(rng, config.noddi_prior);
      }
      s.label = noddi_label(t);
      truth = t;
    }
    SimConfig sim = config.sim;
    sim.snr.reset();
    if (config.snr) sim.snr = config.snr->lo + (config.snr->hi - config.snr->lo) * uniform01(rng);
    s.signals = config.analytic ? analytic_signals(truth, s.scheme, sim, rng).values
                                : mc_simulate(truth, s.scheme, sim, rng).values;
  });
  return out;
}

std::span<const float> Dataset::input(std::size_t i) const {
  const std::size_t n = encoding.input_size();
  return std::span<const float>(inputs).subspan(i * n, n);
}

std::span<const float> Dataset::label(std::size_t i) const {
  return std::span<const float>(labels).subspan(i * label_dim, label_dim);
}

Dataset encode_dataset(std::span<const RawSample> samples, ModelKind model,
                       const InputEncoding& encoding, std::size_t threads) {
  encoding.validate();
  Dataset d;
  d.model = model;
  d.encoding = encoding;
  d.label_dim = label_names(model).size();
  const std::size_t n_in = encoding.input_size();
  d.inputs.assign(samples.size() * n_in, 0.0f);
  d.labels.assign(samples.size() * d.label_dim, 0.0f);
  parallel_for(samples.size(), threads, [&](std::size_t i) {
    const auto& s = samples[i];
    if (s.label.size() != d.label_dim) throw ShapeError("sample label has the wrong length");
    encode_input(s.scheme, s.signals, encoding,
                 std::span<float>(d.inputs).subspan(i * n_in, n_in));
    for (std::size_t k = 0; k < d.label_dim; ++k) {
      d.labels[i * d.label_dim + k] = static_cast<float>(s.label[k]);
    }
  });
  return d;
}

Dataset generate_dataset(const DatasetConfig& config, const InputEncoding& encoding) {
  const auto samples = simulate_samples(config);
  Dataset d = encode_dataset(samples, config.model, encoding, config.threads);
  d.provenance = config;
  return d;
}

void write_dataset(const std::filesystem::path& path, const Dataset& dataset) {
  const std::size_t n_in = dataset.encoding.input_size();
  if (dataset.inputs.size() != dataset.size() * n_in) {
    throw ShapeError("dataset inputs do not match the sample count");
  }
  BinaryWriter out(path);
  out.bytes("QMAP", 4);
  out.u32(kDatasetVersion);
  out.u32(dataset.model == ModelKind::dti ? 0 : 1);
  out.u64(dataset.size());
  out.u32(dataset.encoding.variant == InputVariant::vector
              ? 0
              : static_cast<std::uint32_t>(dataset.encoding.qmatrix.q_n));
  out.u32(variant_tag(dataset.encoding.variant));
  out.u32(static_cast<std::uint32_t>(dataset.encoding.channels()));
  out.u32(static_cast<std::uint32_t>(dataset.label_dim));
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    out.f32s(dataset.input(i));
    out.f32s(dataset.label(i));
  }
  out.close();

  nlohmann::json sidecar;
  sidecar["encoding"] = dataset.encoding;
  sidecar["labels"] = label_names(dataset.model);
  sidecar["provenance"] = dataset.provenance;
  std::ofstream side(sidecar_path(path));
  side << sidecar.dump(2) << '\n';
  if (!side) throw DataError("failed writing " + sidecar_path(path).string());
}

Dataset read_dataset(const std::filesystem::path& path) {
  BinaryReader in(path);
  in.expect_magic("QMAP");
  const std::uint32_t version = in.u32();
  if (version != kDatasetVersion) {
    throw DataError(path.string() + ": unsupported dataset version " + std::to_string(version));
  }
  Dataset d;
  const std::uint32_t model = in.u32();
  if (model > 1) throw DataError(path.string() + ": unknown model tag");
  d.model = model == 0 ? ModelKind::dti : ModelKind::noddi;
  const std::uint64_t count = in.u64();
  const std::uint32_t q_n = in.u32();
  const InputVariant variant = variant_from_tag(in.u32());
  const std::uint32_t channels = in.u32();
  d.label_dim = in.u32();
  if (d.label_dim != label_names(d.model).size()) {
    throw DataError(path.string() + ": label dimension does not match the model");
  }

  d.encoding = d.model == ModelKind::dti ? InputEncoding::dti(variant, static_cast<int>(q_n))
                                         : InputEncoding::noddi(variant, static_cast<int>(q_n));
  if (std::filesystem::exists(sidecar_path(path))) {
    try {
      const auto side = nlohmann::json::parse(read_text_file(sidecar_path(path)));
      d.encoding = side.at("encoding").get<InputEncoding>();
      d.provenance = side.value("provenance", nlohmann::json::object());
    } catch (const nlohmann::json::exception& e) {
      throw DataError(sidecar_path(path).string() + ": " + e.what());
    }
  } else if (variant == InputVariant::vector) {
    d.encoding.vector_width = channels;
  }
  if (d.encoding.variant != variant || d.encoding.channels() != channels ||
      (variant != InputVariant::vector &&
       d.encoding.qmatrix.q_n != static_cast<int>(q_n))) {
    throw DataError(path.string() + ": header disagrees with the sidecar encoding");
  }

  const std::size_t n_in = d.encoding.input_size();
  d.inputs.resize(count * n_in);
  d.labels.resize(count * d.label_dim);
  for (std::size_t i = 0; i < count; ++i) {
    in.f32s_into(std::span<float>(d.inputs).subspan(i * n_in, n_in));
    in.f32s_into(std::span<float>(d.labels).subspan(i * d.label_dim, d.label_dim));
  }
  in.expect_end();
  return d;
}

}  // namespace qmap
