// Copyright 2026 The qmap Authors
// SPDX-License-Identifier: Apache-2.0

// Command-line front end. Exit codes: 0 success, 1 usage, 2 data error,
// 3 numerical failure.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "qmap/common/error.hpp"
#include "qmap/fit/volume.hpp"
#include "qmap/forward/dataset.hpp"
#include "qmap/harness/experiment.hpp"
#include "qmap/harness/metrics.hpp"
#include "qmap/harness/phantom.hpp"
#include "qmap/regressor/infer.hpp"
#include "qmap/regressor/network.hpp"
#include "qmap/scheme/scheme.hpp"

namespace {

using nlohmann::json;

constexpr int kUsage = 1;
constexpr int kDataError = 2;
constexpr int kNumericalError = 3;

std::optional<qmap::Range> parse_snr(const std::string& text) {
  if (text == "none" || text == "inf") return std::nullopt;
  const auto colon = text.find(':');
  try {
    if (colon == std::string::npos) {
      const double v = std::stod(text);
      return qmap::Range{v, v};
    }
    return qmap::Range{std::stod(text.substr(0, colon)), std::stod(text.substr(colon + 1))};
  } catch (const std::logic_error&) {
    throw qmap::ConfigError("--snr expects LO:HI, a single value or 'none', got '" + text + "'");
  }
}

void write_json(const std::string& path, const json& j) {
  if (path.empty() || path == "-") {
    std::cout << j.dump(2) << '\n';
    return;
  }
  std::ofstream f(path);
  if (!f) throw qmap::DataError("cannot write " + path);
  f << j.dump(2) << '\n';
}

void write_maps(const std::string& path, const qmap::Volume& v) {
  if (path.size() >= 4 && path.substr(path.size() - 4) == ".csv") {
    qmap::write_volume_csv(path, v);
  } else {
    qmap::write_volume(path, v);
  }
}

json scheme_stats(const qmap::GradientScheme& s) {
  json shells = json::array();
  for (const auto& sh : qmap::group_shells(s).shells) {
    shells.push_back({{"b", sh.b}, {"directions", sh.members.size()}});
  }
  const double cond = qmap::condition_number(s);
  return {{"entries", s.size()},
          {"n_b0", s.n_b0()},
          {"max_b", s.max_b()},
          {"shells", shells},
          {"condition_number", std::isfinite(cond) ? json(cond) : json("inf")}};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Scheme-independent diffusion parameter mapping"};
  app.require_subcommand(1);

  // scheme
  auto* scheme_cmd = app.add_subcommand("scheme", "Inspect gradient schemes or select subsets");
  scheme_cmd->require_subcommand(1);
  std::string scheme_in, scheme_out;
  std::size_t subset_k = 6, subset_candidates = 500;
  std::uint64_t subset_seed = 0;
  auto* stats_cmd = scheme_cmd->add_subcommand("stats", "Shell layout and condition number");
  stats_cmd->add_option("--in", scheme_in, "Scheme file or builtin name")->required();
  auto* subset_cmd = scheme_cmd->add_subcommand("subset", "Best-conditioned k-direction subset");
  subset_cmd->add_option("--in", scheme_in, "Scheme file or builtin name")->required();
  subset_cmd->add_option("--k", subset_k, "Directions per shell");
  subset_cmd->add_option("--candidates", subset_candidates, "Random candidates to score");
  subset_cmd->add_option("--seed", subset_seed, "Random seed");
  subset_cmd->add_option("--out", scheme_out, "Output scheme file (stdout if omitted)");

  // gen
  auto* gen_cmd = app.add_subcommand("gen", "Simulate a training dataset");
  std::string gen_model = "dti", gen_variant = "2d", gen_snr = "30:100", gen_out, gen_scheme;
  std::size_t gen_n = 0, gen_protons = 10000, threads = 0;
  int gen_qn = 20;
  std::uint64_t gen_seed = 0;
  bool gen_analytic = false, gen_mirror = true;
  gen_cmd->add_option("--model", gen_model, "dti or noddi")->check(CLI::IsMember({"dti", "noddi"}));
  gen_cmd->add_option("--n", gen_n, "Number of samples")->required();
  gen_cmd->add_option("--qn", gen_qn, "Qmatrix grid size");
  gen_cmd->add_option("--variant", gen_variant, "2d, 3d or vector")
      ->check(CLI::IsMember({"2d", "3d", "vector"}));
  gen_cmd->add_option("--snr", gen_snr, "SNR range LO:HI, or none");
  gen_cmd->add_option("--seed", gen_seed, "Random seed");
  gen_cmd->add_option("--out", gen_out, "Output dataset file")->required();
  gen_cmd->add_option("--scheme", gen_scheme, "Fixed scheme instead of random ones");
  gen_cmd->add_option("--protons", gen_protons, "Random-walk protons per sample");
  gen_cmd->add_flag("--analytic", gen_analytic, "Analytic signals instead of the random walk");
  gen_cmd->add_flag("--mirror,!--no-mirror", gen_mirror,
                   "Also bin each signal at the antipodal q-point (default on)");
  gen_cmd->add_option("--threads", threads, "Worker threads (0: all cores)");

  // train
  auto* train_cmd = app.add_subcommand("train", "Train a regressor on a dataset");
  std::string train_dataset, train_net = "resconv", train_out;
  std::size_t train_epochs = 10, train_batch = 100;
  double train_lr = 1e-3;
  std::uint64_t train_seed = 0;
  bool train_verbose = false;
  train_cmd->add_option("--dataset", train_dataset, "Dataset file")->required();
  train_cmd->add_option("--net", train_net, "resconv or mlp")
      ->check(CLI::IsMember({"resconv", "mlp"}));
  train_cmd->add_option("--epochs", train_epochs, "Training epochs");
  train_cmd->add_option("--batch", train_batch, "Minibatch size");
  train_cmd->add_option("--lr", train_lr, "Initial learning rate");
  train_cmd->add_option("--seed", train_seed, "Initialization and shuffling seed");
  train_cmd->add_option("--out", train_out, "Output weights file")->required();
  train_cmd->add_flag("--verbose", train_verbose, "Per-epoch losses on stderr");

  // infer
  auto* infer_cmd = app.add_subcommand("infer", "Parameter maps from a trained network");
  std::string infer_weights, vol_scheme, vol_signals, vol_out, vol_mask;
  infer_cmd->add_option("--weights", infer_weights, "Weights file")->required();
  infer_cmd->add_option("--scheme", vol_scheme, "Scheme of the signal volume")->required();
  infer_cmd->add_option("--signals", vol_signals, "Signal volume")->required();
  infer_cmd->add_option("--mask", vol_mask, "Mask volume");
  infer_cmd->add_option("--out", vol_out, "Output maps (.qvol or .csv)")->required();

  // fit
  auto* fit_cmd = app.add_subcommand("fit", "Conventional voxelwise model fit");
  std::string fit_model = "dti";
  fit_cmd->add_option("--model", fit_model, "dti or noddi")->check(CLI::IsMember({"dti", "noddi"}));
  fit_cmd->add_option("--scheme", vol_scheme, "Scheme of the signal volume")->required();
  fit_cmd->add_option("--signals", vol_signals, "Signal volume")->required();
  fit_cmd->add_option("--mask", vol_mask, "Mask volume");
  fit_cmd->add_option("--out", vol_out, "Output maps (.qvol or .csv)")->required();
  fit_cmd->add_option("--threads", threads, "Worker threads (0: all cores)");

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "NRMSE of predicted maps against reference maps");
  std::string eval_pred, eval_ref, eval_out = "-";
  eval_cmd->add_option("--pred", eval_pred, "Predicted maps")->required();
  eval_cmd->add_option("--ref", eval_ref, "Reference maps")->required();
  eval_cmd->add_option("--mask", vol_mask, "Mask volume");
  eval_cmd->add_option("--out", eval_out, "Report JSON (stdout if omitted)");

  // phantom
  auto* phantom_cmd = app.add_subcommand("phantom", "Synthetic test volume for a scheme");
  std::string ph_model = "dti", ph_dir;
  std::vector<std::size_t> ph_shape{16, 16, 4};
  double ph_snr = 50.0;
  std::uint64_t ph_seed = 0;
  phantom_cmd->add_option("--model", ph_model, "dti or noddi")
      ->check(CLI::IsMember({"dti", "noddi"}));
  phantom_cmd->add_option("--scheme", vol_scheme, "Scheme file or builtin name")->required();
  phantom_cmd->add_option("--shape", ph_shape, "Grid size X Y Z")->expected(3);
  phantom_cmd->add_option("--snr", ph_snr, "SNR (0: noise-free)");
  phantom_cmd->add_option("--seed", ph_seed, "Random seed");
  phantom_cmd->add_option("--out-dir", ph_dir, "Directory for the volumes")->required();
  phantom_cmd->add_option("--threads", threads, "Worker threads (0: all cores)");

  // experiment
  auto* exp_cmd = app.add_subcommand("experiment", "Run an experiment described by a JSON file");
  std::string exp_config;
  bool exp_verbose = false;
  exp_cmd->add_option("--config", exp_config, "Experiment JSON")->required();
  exp_cmd->add_flag("--verbose", exp_verbose, "Progress on stderr");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kUsage;
  }

  try {
    if (*stats_cmd) {
      write_json("-", scheme_stats(qmap::resolve_scheme(scheme_in)));
    } else if (*subset_cmd) {
      qmap::SubsetOptions opts;
      opts.n_candidates = subset_candidates;
      opts.seed = subset_seed;
      const auto sub = qmap::select_subset(qmap::resolve_scheme(scheme_in), subset_k, opts);
      const std::string text = qmap::format_scheme(sub);
      if (scheme_out.empty()) {
        std::cout << text;
      } else {
        std::ofstream f(scheme_out);
        if (!f) throw qmap::DataError("cannot write " + scheme_out);
        f << text;
      }
      std::cerr << "condition number " << qmap::condition_number(sub) << '\n';
    } else if (*gen_cmd) {
      const auto model = qmap::parse_model_kind(gen_model);
      auto cfg = qmap::DatasetConfig::for_model(model);
      cfg.n_samples = gen_n;
      cfg.seed = gen_seed;
      cfg.snr = parse_snr(gen_snr);
      cfg.analytic = gen_analytic;
      cfg.sim.n_protons = gen_protons;
      cfg.threads = threads;
      if (!gen_scheme.empty()) cfg.fixed_scheme = qmap::resolve_scheme(gen_scheme);
      const auto variant = qmap::parse_input_variant(gen_variant);
      auto enc = model == qmap::ModelKind::dti ? qmap::InputEncoding::dti(variant, gen_qn)
                                               : qmap::InputEncoding::noddi(variant, gen_qn);
      enc.qmatrix.mirror = gen_mirror;
      qmap::write_dataset(gen_out, qmap::generate_dataset(cfg, enc));
    } else if (*train_cmd) {
      const auto data = qmap::read_dataset(train_dataset);
      auto spec = qmap::parse_network_kind(train_net) == qmap::NetworkKind::mlp
                      ? qmap::NetworkSpec::mlp(data.model)
                      : qmap::NetworkSpec::resconv(data.model, data.encoding);
      if (spec.kind == qmap::NetworkKind::mlp) spec.encoding = data.encoding;
      spec.seed = train_seed;
      qmap::Network net(spec);
      qmap::TrainConfig tc;
      tc.epochs = train_epochs;
      tc.batch = train_batch;
      tc.lr0 = train_lr;
      tc.seed = train_seed;
      tc.verbose = train_verbose;
      const auto result = qmap::train(net, data, tc);
      qmap::save_network(train_out, net);
      json j = result;
      std::cout << j.dump(2) << '\n';
    } else if (*infer_cmd) {
      auto net = qmap::load_network(infer_weights);
      const auto signals = qmap::read_volume(vol_signals);
      std::optional<qmap::Volume> mask;
      if (!vol_mask.empty()) mask = qmap::read_volume(vol_mask);
      write_maps(vol_out, qmap::infer_volume(net, signals, qmap::resolve_scheme(vol_scheme),
                                             mask ? &*mask : nullptr));
    } else if (*fit_cmd) {
      const auto signals = qmap::read_volume(vol_signals);
      std::optional<qmap::Volume> mask;
      if (!vol_mask.empty()) mask = qmap::read_volume(vol_mask);
      write_maps(vol_out, qmap::fit_volume(qmap::parse_model_kind(fit_model), signals,
                                           qmap::resolve_scheme(vol_scheme),
                                           mask ? &*mask : nullptr, {}, threads));
    } else if (*eval_cmd) {
      const auto pred = qmap::read_volume(eval_pred);
      const auto ref = qmap::read_volume(eval_ref);
      if (pred.shape != ref.shape) throw qmap::ShapeError("prediction and reference shapes differ");
      std::optional<qmap::Volume> mask;
      if (!vol_mask.empty()) mask = qmap::read_volume(vol_mask);
      const auto inside = qmap::mask_from(mask ? &*mask : nullptr, ref.voxels());
      json per = json::object();
      double sum = 0.0;
      for (std::size_t c = 0; c < ref.channels(); ++c) {
        const auto& name = ref.names[c];
        const double e = qmap::nrmse(pred.channel(pred.channel_index(name)), ref.channel(c), inside);
        per[name] = e;
        sum += e;
      }
      write_json(eval_out, {{"pred", eval_pred},
                            {"ref", eval_ref},
                            {"mask", vol_mask.empty() ? json(nullptr) : json(vol_mask)},
                            {"nrmse_percent", per},
                            {"mean_nrmse_percent", sum / static_cast<double>(ref.channels())}});
    } else if (*phantom_cmd) {
      qmap::PhantomConfig pc;
      pc.model = qmap::parse_model_kind(ph_model);
      pc.shape = {ph_shape[0], ph_shape[1], ph_shape[2]};
      if (ph_snr > 0.0) {
        pc.snr = ph_snr;
      } else {
        pc.snr.reset();
      }
      pc.seed = ph_seed;
      pc.threads = threads;
      const auto ph = qmap::make_phantom(qmap::resolve_scheme(vol_scheme), pc);
      const std::filesystem::path dir(ph_dir);
      std::filesystem::create_directories(dir);
      qmap::write_volume(dir / "signals.qvol", ph.signals);
      qmap::write_volume(dir / "truth.qvol", ph.truth);
      qmap::write_volume(dir / "mask.qvol", ph.mask);
      qmap::write_volume(dir / "reference.qvol", ph.reference);
    } else if (*exp_cmd) {
      auto cfg = qmap::load_experiment_config(exp_config);
      if (exp_verbose) {
        cfg.verbose = true;
        for (auto& n : cfg.networks) n.train.verbose = true;
      }
      const auto report = qmap::run_experiment(cfg);
      json summary = json::array();
      for (const auto& r : report.rows) {
        summary.push_back({{"network", r.network},
                           {"scheme", r.scheme},
                           {"mean_nrmse_percent", r.overall.mean}});
      }
      std::cout << summary.dump(2) << '\n';
    }
  } catch (const qmap::DataError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kDataError;
  } catch (const json::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kDataError;
  } catch (const qmap::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kNumericalError;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kDataError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kDataError;
  }
  return 0;
}
