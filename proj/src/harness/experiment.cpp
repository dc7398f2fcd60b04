// Copyright 2026 The qmap Authors
// SPDX-License-Identifier: Apache-2.0

#include "qmap/harness/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <iostream>
#include <set>

#include "qmap/common/error.hpp"
#include "qmap/common/io.hpp"
#include "qmap/fit/volume.hpp"
#include "qmap/harness/phantom.hpp"
#include "qmap/regressor/infer.hpp"

namespace qmap {
namespace {

using nlohmann::json;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

// Distinct, reproducible seeds for the parts of an experiment.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t salt) {
  std::uint64_t x = master ^ (salt * 0x9e3779b97f4a7c15ULL);
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return (x ^ (x >> 31)) >> 1;  // fits a signed JSON integer
}

GradientScheme scheme_from(const std::string& name, const std::filesystem::path& base_dir) {
  const auto builtins = builtin_scheme_names();
  if (std::find(builtins.begin(), builtins.end(), name) != builtins.end()) {
    return builtin_scheme(name);
  }
  const std::filesystem::path p(name);
  if (p.is_relative() && !base_dir.empty() && std::filesystem::exists(base_dir / p)) {
    return load_scheme(base_dir / p);
  }
  return resolve_scheme(name);
}

Range range_from(const json& j) {
  if (!j.is_array() || j.size() != 2) throw ConfigError("expected a [lo, hi] pair");
  return {j[0].get<double>(), j[1].get<double>()};
}

template <typename Fn>
auto run_stage(const std::string& stage, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const NumericalError& e) {
    throw NumericalError("stage '" + stage + "': " + e.what());
  } catch (const DataError& e) {
    throw DataError("stage '" + stage + "': " + e.what());
  } catch (const json::exception& e) {
    throw DataError("stage '" + stage + "': " + e.what());
  } catch (const std::exception& e) {
    throw std::runtime_error("stage '" + stage + "': " + e.what());
  }
}

json mean_std_json(const MeanStd& m) { return {{"mean", m.mean}, {"std", m.std}}; }

json row_json(const EvalRow& r) {
  json params = json::object();
  for (std::size_t p = 0; p < r.parameters.size(); ++p) {
    params[r.parameters[p]] = {{"mean", r.summary[p].mean},
                               {"std", r.summary[p].std},
                               {"per_phantom", r.per_phantom[p]}};
  }
  json j = {{"network", r.network},
            {"scheme", r.scheme},
            {"nrmse_percent", params},
            {"overall", mean_std_json(r.overall)}};
  if (r.k > 0) j["k"] = r.k;
  return j;
}

void finish_row(EvalRow& row) {
  row.summary.clear();
  for (const auto& values : row.per_phantom) row.summary.push_back(mean_std(values));
  const std::size_t n = row.per_phantom.empty() ? 0 : row.per_phantom[0].size();
  std::vector<double> per(n, 0.0);
  for (const auto& values : row.per_phantom) {
    for (std::size_t i = 0; i < n; ++i) per[i] += values[i] / row.per_phantom.size();
  }
  row.overall = mean_std(per);
}

EvalRow make_row(const std::string& network, const std::string& scheme,
                 const std::vector<std::string>& parameters, std::size_t phantoms) {
  EvalRow row;
  row.network = network;
  row.scheme = scheme;
  row.parameters = parameters;
  row.per_phantom.assign(parameters.size(), std::vector<double>(phantoms, 0.0));
  return row;
}

void score(EvalRow& row, std::size_t phantom, const Volume& pred, const Volume& ref,
           const Volume& mask) {
  const auto inside = mask_from(&mask, mask.voxels());
  for (std::size_t p = 0; p < row.parameters.size(); ++p) {
    const auto a = pred.channel(pred.channel_index(row.parameters[p]));
    const auto b = ref.channel(ref.channel_index(row.parameters[p]));
    row.per_phantom[p][phantom] = nrmse(a, b, inside);
  }
}

// Positions of `subset` entries inside `full`, which keeps relative order.
std::vector<std::size_t> subset_positions(const GradientScheme& full, const GradientScheme& subset) {
  std::vector<std::size_t> idx;
  std::size_t j = 0;
  for (const auto& e : subset.entries()) {
    while (j < full.size() && !(full[j].b == e.b && full[j].dir == e.dir)) ++j;
    if (j == full.size()) throw DataError("subset entry not found in the full scheme");
    idx.push_back(j++);
  }
  return idx;
}

Volume select_channels(const Volume& signals, std::span<const std::size_t> channels) {
  Volume out(signals.shape, signal_channel_names(channels.size()), signals.model);
  for (std::size_t v = 0; v < signals.voxels(); ++v) {
    for (std::size_t c = 0; c < channels.size(); ++c) out.at(v, c) = signals.at(v, channels[c]);
  }
  return out;
}

void write_json(const std::filesystem::path& path, const json& j) {
  std::ofstream f(path);
  if (!f) throw DataError("cannot write " + path.string());
  f << j.dump(2) << '\n';
}

}  // namespace

const MeanStd& EvalRow::parameter(const std::string& name) const {
  for (std::size_t p = 0; p < parameters.size(); ++p) {
    if (parameters[p] == name) return summary.at(p);
  }
  throw DataError("no parameter '" + name + "' in row " + network + "/" + scheme);
}

const EvalRow& ExperimentReport::row(const std::string& network, const std::string& scheme) const {
  for (const auto& r : rows) {
    if (r.network == network && r.scheme == scheme) return r;
  }
  throw DataError("no evaluation row for network '" + network + "' on scheme '" + scheme + "'");
}

json ExperimentReport::to_json() const {
  json j;
  j["name"] = name;
  j["config"] = config;
  j["seeds"] = seeds;
  json training_json = json::object();
  for (const auto& [net, result] : training) training_json[net] = result;
  j["training"] = training_json;
  j["reference_vs_truth"] = json::array();
  for (const auto& r : reference_vs_truth) j["reference_vs_truth"].push_back(row_json(r));
  j["results"] = json::array();
  for (const auto& r : rows) j["results"].push_back(row_json(r));
  j["comparisons"] = json::array();
  for (const auto& c : comparisons) {
    j["comparisons"].push_back({{"parameter", c.plan.parameter},
                                {"a", {{"network", c.plan.a.network}, {"scheme", c.plan.a.scheme}}},
                                {"b", {{"network", c.plan.b.network}, {"scheme", c.plan.b.scheme}}},
                                {"p", c.test.p},
                                {"rank_sum", c.test.rank_sum},
                                {"exact", c.test.exact},
                                {"tie_fallback", c.test.tie_fallback}});
  }
  j["subset_sweep"] = json::array();
  for (const auto& r : subset_sweep) j["subset_sweep"].push_back(row_json(r));
  json t = json::array();
  for (const auto& [stage, s] : timings) t.push_back({{"stage", stage}, {"seconds", s}});
  j["timings"] = t;
  return j;
}

void ExperimentConfig::validate() const {
  if (networks.empty()) throw ConfigError("experiment declares no networks");
  if (phantoms.schemes.empty()) throw ConfigError("experiment declares no test schemes");
  if (phantoms.count == 0) throw ConfigError("phantom count must be positive");
  std::set<std::string> dataset_names;
  for (const auto& d : datasets) {
    if (!dataset_names.insert(d.name).second) throw ConfigError("duplicate dataset '" + d.name + "'");
    if (d.config.model != model) throw ConfigError("dataset '" + d.name + "' has another model");
    d.config.validate();
  }
  std::set<std::string> network_names;
  for (const auto& n : networks) {
    if (n.name == "reference" || !network_names.insert(n.name).second) {
      throw ConfigError("invalid or duplicate network name '" + n.name + "'");
    }
    if (!dataset_names.count(n.dataset)) {
      throw ConfigError("network '" + n.name + "' uses unknown dataset '" + n.dataset + "'");
    }
    n.spec.validate();
    n.train.validate();
  }
  std::set<std::string> scheme_names;
  for (const auto& s : phantoms.schemes) {
    if (!scheme_names.insert(s.name).second) throw ConfigError("duplicate scheme '" + s.name + "'");
  }
  const auto labels = label_names(model);
  auto check_key = [&](const EvalKey& k) {
    if (!network_names.count(k.network) && k.network != "reference") {
      throw ConfigError("comparison names unknown network '" + k.network + "'");
    }
    if (k.network == "reference" && phantoms.reference != ReferenceKind::fit) {
      throw ConfigError("reference rows need a fitted reference");
    }
    if (!scheme_names.count(k.scheme)) {
      throw ConfigError("comparison names unknown scheme '" + k.scheme + "'");
    }
  };
  for (const auto& c : comparisons) {
    check_key(c.a);
    check_key(c.b);
    if (std::find(labels.begin(), labels.end(), c.parameter) == labels.end()) {
      throw ConfigError("unknown parameter '" + c.parameter + "'");
    }
  }
  if (subset_sweep) {
    if (!network_names.count(subset_sweep->network)) {
      throw ConfigError("subset sweep names unknown network '" + subset_sweep->network + "'");
    }
    if (!scheme_names.count(subset_sweep->scheme)) {
      throw ConfigError("subset sweep names unknown scheme '" + subset_sweep->scheme + "'");
    }
    if (subset_sweep->k.empty()) throw ConfigError("subset sweep needs at least one k");
  }
}

ExperimentConfig parse_experiment_config(const json& j, const std::filesystem::path& base_dir) {
  try {
    ExperimentConfig c;
    c.source = j;
    c.name = j.value("name", c.name);
    c.model = parse_model_kind(j.value("model", std::string("dti")));
    c.seed = j.value("seed", c.seed);
    c.threads = j.value("threads", c.threads);
    if (j.contains("out_dir") && !j["out_dir"].is_null()) {
      std::filesystem::path out = j["out_dir"].get<std::string>();
      if (out.is_relative() && !base_dir.empty()) out = base_dir / out;
      c.out_dir = out;
    }
    c.write_maps = j.value("write_maps", c.write_maps);
    c.verbose = j.value("verbose", c.verbose);

    std::uint64_t salt = 1;
    for (const auto& [name, d] : j.at("datasets").items()) {
      DatasetPlan plan;
      plan.name = name;
      plan.config = DatasetConfig::for_model(c.model);
      plan.config.n_samples = d.at("n_samples").get<std::size_t>();
      plan.config.seed = d.value("seed", derive_seed(c.seed, salt++));
      plan.config.threads = c.threads;
      plan.config.analytic = d.value("analytic", false);
      plan.config.sim.n_protons = d.value("protons", plan.config.sim.n_protons);
      if (d.contains("snr")) {
        if (d["snr"].is_null()) {
          plan.config.snr.reset();
        } else {
          plan.config.snr = range_from(d["snr"]);
        }
      }
      if (d.contains("scheme")) {
        plan.scheme_name = d["scheme"].get<std::string>();
        plan.config.fixed_scheme = scheme_from(plan.scheme_name, base_dir);
      }
      if (d.contains("b_range")) plan.config.dti_prior.b = range_from(d["b_range"]);
      c.datasets.push_back(std::move(plan));
    }

    salt = 101;
    for (const auto& n : j.at("networks")) {
      NetworkPlan plan;
      plan.name = n.at("name").get<std::string>();
      plan.dataset = n.at("dataset").get<std::string>();
      const auto kind = parse_network_kind(n.value("kind", std::string("resconv")));
      if (kind == NetworkKind::mlp) {
        plan.spec = NetworkSpec::mlp(c.model);
      } else {
        const auto variant = parse_input_variant(n.value("variant", std::string("2d")));
        const int q_n = n.value("q_n", 20);
        auto enc = c.model == ModelKind::dti ? InputEncoding::dti(variant, q_n)
                                             : InputEncoding::noddi(variant, q_n);
        enc.qmatrix.mirror = n.value("mirror", enc.qmatrix.mirror);
        plan.spec = NetworkSpec::resconv(c.model, enc);
        plan.spec.occupancy = n.value("occupancy", plan.spec.occupancy);
        plan.spec.flatten = n.value("flatten", plan.spec.flatten);
        plan.spec.stem_stride = n.value("stem_stride", plan.spec.stem_stride);
        plan.spec.stem_channels = n.value("stem_channels", plan.spec.stem_channels);
        plan.spec.res_blocks = n.value("res_blocks", plan.spec.res_blocks);
        plan.spec.dense_units = n.value("dense_units", plan.spec.dense_units);
      }
      plan.spec.seed = n.value("init_seed", derive_seed(c.seed, salt++));
      plan.train.epochs = n.value("epochs", plan.train.epochs);
      plan.train.batch = n.value("batch", plan.train.batch);
      plan.train.lr0 = n.value("lr0", plan.train.lr0);
      plan.train.decay = n.value("decay", plan.train.decay);
      plan.train.seed = n.value("train_seed", derive_seed(c.seed, salt++));
      plan.train.verbose = c.verbose;
      c.networks.push_back(std::move(plan));
    }

    const json p = j.at("phantoms");
    c.phantoms.count = p.value("count", c.phantoms.count);
    if (p.contains("shape")) c.phantoms.shape = p["shape"].get<std::array<std::size_t, 3>>();
    if (p.contains("snr")) {
      if (p["snr"].is_null()) {
        c.phantoms.snr.reset();
      } else {
        c.phantoms.snr = p["snr"].get<double>();
      }
    }
    c.phantoms.seed = p.value("seed", derive_seed(c.seed, 1000));
    const std::string ref = p.value("reference", std::string("fit"));
    if (ref == "fit") {
      c.phantoms.reference = ReferenceKind::fit;
    } else if (ref == "truth") {
      c.phantoms.reference = ReferenceKind::truth;
    } else {
      throw ConfigError("phantom reference must be 'fit' or 'truth'");
    }
    for (const auto& [label, s] : p.at("schemes").items()) {
      c.phantoms.schemes.push_back({label, scheme_from(s.get<std::string>(), base_dir)});
    }

    if (j.contains("comparisons")) {
      for (const auto& cmp : j["comparisons"]) {
        ComparisonPlan plan;
        plan.parameter = cmp.at("parameter").get<std::string>();
        plan.a = {cmp.at("a").at("network").get<std::string>(),
                  cmp.at("a").at("scheme").get<std::string>()};
        plan.b = {cmp.at("b").at("network").get<std::string>(),
                  cmp.at("b").at("scheme").get<std::string>()};
        c.comparisons.push_back(std::move(plan));
      }
    }
    if (j.contains("subset_sweep")) {
      const json& s = j["subset_sweep"];
      SubsetSweepPlan plan;
      plan.network = s.at("network").get<std::string>();
      plan.scheme = s.at("scheme").get<std::string>();
      plan.k = s.at("k").get<std::vector<std::size_t>>();
      plan.candidates = s.value("candidates", plan.candidates);
      plan.seed = s.value("seed", derive_seed(c.seed, 2000));
      c.subset_sweep = std::move(plan);
    }
    c.validate();
    return c;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("experiment config: ") + e.what());
  }
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  const std::string text = read_text_file(path);
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(0, path.string() + ": " + e.what());
  }
  return parse_experiment_config(j, path.parent_path());
}

ExperimentReport run_experiment(const ExperimentConfig& config) {
  config.validate();
  ExperimentReport report;
  report.name = config.name;
  report.config = config.source;
  const auto labels = label_names(config.model);
  auto log = [&](const std::string& msg) {
    if (config.verbose) std::cerr << "[" << config.name << "] " << msg << std::endl;
  };
  auto timed = [&](const std::string& stage, auto&& fn) {
    const auto start = Clock::now();
    run_stage(stage, fn);
    report.timings.emplace_back(stage, seconds_since(start));
  };

  std::optional<std::filesystem::path> out = config.out_dir;
  if (out) {
    std::filesystem::create_directories(*out / "weights");
    if (config.write_maps) std::filesystem::create_directories(*out / "maps");
  }

  json seeds = {{"experiment", config.seed}, {"phantoms", config.phantoms.seed}};
  for (const auto& d : config.datasets) seeds["datasets"][d.name] = d.config.seed;
  for (const auto& n : config.networks) {
    seeds["networks"][n.name] = {{"init", n.spec.seed}, {"train", n.train.seed}};
  }
  if (config.subset_sweep) seeds["subset_sweep"] = config.subset_sweep->seed;
  report.seeds = seeds;

  // Training: each dataset is simulated once, right before its first user,
  // and dropped after its last.
  std::map<std::string, Network> networks;
  std::map<std::string, std::vector<RawSample>> raw;
  for (std::size_t ni = 0; ni < config.networks.size(); ++ni) {
    const NetworkPlan& plan = config.networks[ni];
    const auto dp = std::find_if(config.datasets.begin(), config.datasets.end(),
                                 [&](const DatasetPlan& d) { return d.name == plan.dataset; });
    if (!raw.count(plan.dataset)) {
      timed("simulate:" + dp->name, [&] {
        log("simulating dataset " + dp->name);
        raw[dp->name] = simulate_samples(dp->config);
      });
    }
    Dataset data;
    timed("encode:" + plan.name, [&] {
      data = encode_dataset(raw[dp->name], config.model, plan.spec.encoding, config.threads);
      data.provenance = {{"dataset", dp->name}};
      to_json(data.provenance["simulation"], dp->config);
    });
    const bool last_use =
        std::none_of(config.networks.begin() + static_cast<std::ptrdiff_t>(ni) + 1,
                     config.networks.end(),
                     [&](const NetworkPlan& n) { return n.dataset == plan.dataset; });
    if (last_use) raw.erase(plan.dataset);

    timed("train:" + plan.name, [&] {
      log("training " + plan.name);
      Network net(plan.spec);
      report.training[plan.name] = train(net, data, plan.train);
      if (out) save_network(*out / "weights" / (plan.name + ".qnet"), net);
      networks.emplace(plan.name, std::move(net));
    });
  }

  // Evaluation on phantoms, one set per test scheme.
  const std::size_t n_ph = config.phantoms.count;
  for (const auto& ts : config.phantoms.schemes) {
    std::vector<Phantom> phantoms(n_ph);
    timed("phantoms:" + ts.name, [&] {
      log("building phantoms for scheme " + ts.name);
      for (std::size_t i = 0; i < n_ph; ++i) {
        PhantomConfig pc;
        pc.model = config.model;
        pc.shape = config.phantoms.shape;
        pc.snr = config.phantoms.snr;
        pc.seed = config.phantoms.seed + i;
        pc.threads = config.threads;
        pc.noddi_fit = config.phantoms.noddi_fit;
        phantoms[i] = make_phantom(ts.scheme, pc);
        if (config.phantoms.reference == ReferenceKind::truth) {
          phantoms[i].reference = phantoms[i].truth;
        }
        if (out && config.write_maps) {
          const std::string stem = ts.name + "_p" + std::to_string(i);
          write_volume(*out / "maps" / (stem + "_truth.qvol"), phantoms[i].truth);
          write_volume(*out / "maps" / (stem + "_reference.qvol"), phantoms[i].reference);
          write_volume(*out / "maps" / (stem + "_mask.qvol"), phantoms[i].mask);
        }
      }
    });

    if (config.phantoms.reference == ReferenceKind::fit) {
      EvalRow row = make_row("reference", ts.name, labels, n_ph);
      for (std::size_t i = 0; i < n_ph; ++i) {
        score(row, i, phantoms[i].reference, phantoms[i].truth, phantoms[i].mask);
      }
      finish_row(row);
      report.reference_vs_truth.push_back(row);
    }

    for (const auto& plan : config.networks) {
      timed("infer:" + plan.name + "@" + ts.name, [&] {
        Network& net = networks.at(plan.name);
        EvalRow row = make_row(plan.name, ts.name, labels, n_ph);
        for (std::size_t i = 0; i < n_ph; ++i) {
          const Volume pred = infer_volume(net, phantoms[i].signals, ts.scheme, &phantoms[i].mask);
          score(row, i, pred, phantoms[i].reference, phantoms[i].mask);
          if (out && config.write_maps) {
            write_volume(*out / "maps" / (plan.name + "_" + ts.name + "_p" + std::to_string(i) +
                                          ".qvol"),
                         pred);
          }
        }
        finish_row(row);
        log(plan.name + " on " + ts.name + ": mean NRMSE " + std::to_string(row.overall.mean) +
            "%");
        report.rows.push_back(std::move(row));
      });
    }

    if (config.subset_sweep && config.subset_sweep->scheme == ts.name) {
      const SubsetSweepPlan& sweep = *config.subset_sweep;
      timed("subset_sweep:" + sweep.network + "@" + ts.name, [&] {
        Network& net = networks.at(sweep.network);
        for (std::size_t k : sweep.k) {
          SubsetOptions opts;
          opts.n_candidates = sweep.candidates;
          opts.seed = sweep.seed + k;
          const GradientScheme sub = select_subset(ts.scheme, k, opts);
          const auto idx = subset_positions(ts.scheme, sub);
          EvalRow row = make_row(sweep.network, ts.name, labels, n_ph);
          row.k = k;
          for (std::size_t i = 0; i < n_ph; ++i) {
            const Volume signals = select_channels(phantoms[i].signals, idx);
            const Volume pred = infer_volume(net, signals, sub, &phantoms[i].mask);
            score(row, i, pred, phantoms[i].reference, phantoms[i].mask);
          }
          finish_row(row);
          report.subset_sweep.push_back(std::move(row));
        }
      });
    }
  }

  for (const auto& cmp : config.comparisons) {
    run_stage("compare:" + cmp.parameter, [&] {
      auto find = [&](const EvalKey& k) -> const EvalRow& {
        if (k.network == "reference") {
          for (const auto& r : report.reference_vs_truth) {
            if (r.scheme == k.scheme) return r;
          }
        }
        return report.row(k.network, k.scheme);
      };
      const EvalRow& a = find(cmp.a);
      const EvalRow& b = find(cmp.b);
      const auto pa = std::find(a.parameters.begin(), a.parameters.end(), cmp.parameter) -
                      a.parameters.begin();
      const auto pb = std::find(b.parameters.begin(), b.parameters.end(), cmp.parameter) -
                      b.parameters.begin();
      report.comparisons.push_back(
          {cmp, wilcoxon_rank_sum(a.per_phantom[static_cast<std::size_t>(pa)],
                                  b.per_phantom[static_cast<std::size_t>(pb)])});
    });
  }

  if (out) write_json(*out / "report.json", report.to_json());
  return report;
}

ExperimentReport run_experiment(const std::filesystem::path& config_path) {
  return run_experiment(load_experiment_config(config_path));
}

}  // namespace qmap
