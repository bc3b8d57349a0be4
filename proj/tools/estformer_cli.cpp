// estformer: command-line front end for data generation, training,
// evaluation, baselines, FLOPs and downstream experiments.

#include <CLI11.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "estformer/attention.hpp"
#include "estformer/baselines.hpp"
#include "estformer/config.hpp"
#include "estformer/data.hpp"
#include "estformer/downstream.hpp"
#include "estformer/loss.hpp"
#include "estformer/model.hpp"
#include "estformer/ops.hpp"
#include "estformer/plot.hpp"
#include "estformer/training.hpp"

namespace fs = std::filesystem;
using namespace estformer;

namespace {

enum ExitCode { kOk = 0, kFailure = 1, kConfig = 2, kIo = 3, kNumeric = 4 };

struct Options {
  std::string config, data, out, ckpt, baseline, sr, log, kind = "psd", channel = "Cz", name;
  std::vector<std::string> overlay;
  int scale = 0, mask_case = 0;
  std::uint64_t seed = 0;
  std::size_t window = 0;
  bool summary = false;
  std::int64_t ds = 64, dt = 1600, c_in = 128, c_out = 128, k_s = 33, k_t = 1;
};

RunConfig config_or_default(const Options& o) { return o.config.empty() ? RunConfig{} : load_run_config(o.config); }

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write " + path.string());
  f << text;
  if (!f) throw IoError("failed writing " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_output(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
  } else {
    write_text(path, text);
  }
}

// Config snapshot stored next to an output file.
void save_resolved_config(const RunConfig& c, const fs::path& out) {
  save_run_config(c, fs::path(out.string() + ".config"));
}

struct ModelBundle {
  MaskSpec spec;
  ESTformerParams params;
};

ModelBundle load_model(const std::string& ckpt_path, const EEGDataset& ds) {
  const LoadedCheckpoint ck = load_checkpoint(ckpt_path);
  MaskSpec spec = mask_case(ds.montage, ck.scale_factor(), ck.mask_case());
  ESTformerParams p = restore_params(ck, spec);
  if (p.t != ds.n_samples()) throw ConfigError("checkpoint window length does not match the dataset");
  return {std::move(spec), std::move(p)};
}

int cmd_gen_data(const Options& o) {
  const RunConfig c = config_or_default(o);
  const ElectrodeMontage m = resolve_montage(c.montage);
  const EEGDataset ds = synth_generate(c.synth, m, c.sample_rate, c.window_seconds, c.n_windows);
  save_dataset(ds, o.out);
  save_resolved_config(c, o.out);
  std::cerr << "wrote " << ds.n_windows() << " windows of " << ds.n_channels() << " x " << ds.n_samples() << " to "
            << o.out << '\n';
  return kOk;
}

int cmd_train(const Options& o) {
  RunConfig c = config_or_default(o);
  const EEGDataset ds = load_dataset(o.data);
  const MaskSpec spec = mask_case(ds.montage, c.scale, c.mask_case);
  auto [train_set, test_set] = split(ds, c.train_frac, c.split_seed);
  Hyperparams hp = c.model;
  hp.dropout = c.train.dropout;
  Rng init_rng(c.init_seed, "init");
  ESTformerParams params = init_params(spec, ds.n_samples(), hp, init_rng);

  const fs::path dir(o.out);
  fs::create_directories(dir);
  save_run_config(c, dir / "config.txt");
  std::cout << train_log_csv_header() << '\n';
  const TrainResult r = train(params, spec, train_set, test_set, c.train,
                              [](const EpochLog& row) { std::cout << to_csv(row) << std::endl; });
  write_train_log(r.log, dir / "train_log.csv");
  save_checkpoint(dir / "best.ckpt", r.best, spec);
  save_checkpoint(dir / "last.ckpt", params, spec);
  std::cerr << "best epoch " << r.best_epoch << "; checkpoints in " << dir.string() << '\n';
  return kOk;
}

int cmd_eval(const Options& o) {
  const RunConfig c = config_or_default(o);
  const EEGDataset gt = load_dataset(o.data);
  MaskSpec spec;
  Reconstructor recon;
  std::optional<ModelBundle> model;
  std::optional<EEGDataset> sr;
  if (!o.ckpt.empty()) {
    model = load_model(o.ckpt, gt);
    spec = model->spec;
    if ((o.scale && o.scale != spec.scale_factor) || (o.mask_case && o.mask_case != spec.case_id)) {
      throw ConfigError("--scale/--case differ from the checkpoint's mask spec");
    }
    recon = model_reconstructor(model->params, spec);
  } else {
    spec = mask_case(gt.montage, o.scale ? o.scale : c.scale, o.mask_case ? o.mask_case : c.mask_case);
    if (!o.sr.empty()) {
      sr = load_dataset(o.sr);
      if (sr->n_windows() != gt.n_windows() || sr->n_channels() != gt.n_channels() ||
          sr->n_samples() != gt.n_samples()) {
        throw ConfigError("--sr dataset shape differs from --data");
      }
    } else if (o.baseline.empty()) {
      throw ConfigError("eval needs --ckpt, --sr or --baseline");
    } else if (o.baseline == "an") {
      recon = an_reconstructor(spec, c.an_k);
    } else if (o.baseline == "si") {
      recon = si_reconstructor(spec, c.spline);
    } else {
      throw ConfigError("unknown baseline '" + o.baseline + "' (expected an or si)");
    }
  }
  std::size_t cursor = 0;
  if (sr) {
    // The reconstructor is called once per window in order.
    recon = [&](const Tensor&) { return sr->window_rows(cursor++, spec.masked); };
  }
  const EvalSummary s = evaluate(recon, gt, spec);
  std::ostringstream os;
  os.precision(10);
  os << "case,scale,seed,nmse,snr_db,pcc\n";
  if (o.summary) {
    os << spec.case_id << ',' << spec.scale_factor << ',' << o.seed << ',' << s.nmse_mean << ',' << s.snr_mean
       << ',' << s.pcc_mean << '\n';
  } else {
    for (const auto& m : s.samples) {
      os << spec.case_id << ',' << spec.scale_factor << ',' << o.seed << ',' << m.nmse << ',' << m.snr_db << ','
         << m.pcc << '\n';
    }
  }
  write_output(o.out, os.str());
  std::cerr << "mean nmse " << s.nmse_mean << " (std " << s.nmse_std << "), snr " << s.snr_mean << " dB, pcc "
            << s.pcc_mean << " over " << gt.n_windows() << " windows\n";
  return kOk;
}

int cmd_interpolate(const Options& o) {
  const RunConfig c = config_or_default(o);
  const EEGDataset gt = load_dataset(o.data);
  std::optional<ModelBundle> model;
  MaskSpec spec;
  Reconstructor recon;
  if (!o.ckpt.empty()) {
    model = load_model(o.ckpt, gt);
    spec = model->spec;
    recon = model_reconstructor(model->params, spec);
  } else {
    spec = mask_case(gt.montage, o.scale ? o.scale : c.scale, o.mask_case ? o.mask_case : c.mask_case);
    if (o.baseline == "an") {
      recon = an_reconstructor(spec, c.an_k);
    } else if (o.baseline == "si") {
      recon = si_reconstructor(spec, c.spline);
    } else {
      throw ConfigError("interpolate needs --ckpt or --baseline an|si");
    }
  }
  const EEGDataset out = sr_dataset(gt, spec, recon);
  save_dataset(out, o.out);
  save_resolved_config(c, o.out);
  return kOk;
}

int cmd_flops(const Options& o) {
  std::cout << flops_csv_header() << '\n';
  std::cout << to_csv(flops_report(FlopsKind::SSA, o.ds, o.dt)) << '\n';
  std::cout << to_csv(flops_report(FlopsKind::TSA, o.ds, o.dt)) << '\n';
  std::cout << to_csv(flops_report(FlopsKind::Conv2D, o.ds, o.dt, o.c_in, o.c_out, o.k_s, o.k_t)) << '\n';
  return kOk;
}

int cmd_features(const Options& o) {
  const EEGDataset ds = load_dataset(o.data);
  const FeatureMatrix f = extract_features(parse_feature_kind(o.kind), ds, standard_bands());
  std::ostringstream os;
  os.precision(10);
  os << "window,channel,band,value\n";
  for (std::size_t i = 0; i < f.n(); ++i) {
    for (std::size_t ch = 0; ch < f.channels(); ++ch) {
      for (std::size_t b = 0; b < f.bands(); ++b) {
        os << i << ',' << ds.montage[ch].name << ',' << f.band_names[b] << ','
           << f.values[(i * f.channels() + ch) * f.bands() + b] << '\n';
      }
    }
  }
  write_output(o.out, os.str());
  return kOk;
}

int cmd_classify(const Options& o) {
  const RunConfig c = config_or_default(o);
  const EEGDataset ds = load_dataset(o.data);
  if (!ds.has_labels()) throw ConfigError("classify needs a labeled dataset");
  const std::string kind = o.config.empty() ? o.kind : c.feature;
  const FeatureMatrix f = extract_features(parse_feature_kind(kind), ds, standard_bands());
  std::ostringstream os;
  os << "band,accuracy\n";
  for (std::size_t b = 0; b <= f.bands(); ++b) {
    const double acc = mlp2_train_eval(b < f.bands() ? select_band(f, b) : f, ds.labels, c.classifier);
    os << (b < f.bands() ? f.band_names[b] : "all") << ',' << acc << '\n';
  }
  write_output(o.out, os.str());
  return kOk;
}

int cmd_compare_arms(const Options& o) {
  const RunConfig c = config_or_default(o);
  const EEGDataset gt = load_dataset(o.data);
  const ModelBundle model = load_model(o.ckpt, gt);
  const std::string kind = o.config.empty() ? o.kind : c.feature;
  const ArmsTable t = compare_arms(gt, model.spec, [&](const Tensor& x_lr) {
    return ops::gather_rows(estformer_forward(model.params, x_lr, model.spec, eval_context(model.params.hp)),
                            model.spec.masked);
  }, parse_feature_kind(kind), c.classifier);
  write_output(o.out, t.to_csv());
  return kOk;
}

int cmd_plot(const Options& o) {
  if (!o.log.empty() == !o.overlay.empty()) throw ConfigError("plot needs exactly one of --log or --overlay");
  LinePlot plot;
  if (!o.log.empty()) {
    plot = training_log_plot(read_text(o.log));
  } else {
    plot.title = "Channel " + o.channel + ", window " + std::to_string(o.window);
    plot.x_label = "time (s)";
    plot.y_label = "amplitude";
    for (const auto& path : o.overlay) {
      const EEGDataset ds = load_dataset(path);
      const std::size_t ch = ds.montage.index_of(o.channel);
      if (o.window >= ds.n_windows()) throw ConfigError("--window out of range for " + path);
      Series s{fs::path(path).stem().string(), {}, {}};
      const Tensor w = ds.window(o.window);
      for (std::size_t t = 0; t < ds.n_samples(); ++t) {
        s.x.push_back(static_cast<double>(t) / ds.sample_rate);
        s.y.push_back(w[ch * ds.n_samples() + t]);
      }
      plot.series.push_back(std::move(s));
    }
  }
  write_text(o.out, render_svg(plot));
  return kOk;
}

int cmd_montage(const Options& o) {
  write_output(o.out, format_montage(builtin_montage(o.name)));
  return kOk;
}

const char* category(int code) {
  switch (code) {
    case kConfig: return "config";
    case kIo: return "io";
    case kNumeric: return "numeric";
    default: return "internal";
  }
}

int report(int code, const std::string& message) {
  std::string flat = message;
  for (auto& ch : flat) {
    if (ch == '\n') ch = ' ';
    if (ch == '"') ch = '\'';
  }
  std::cerr << "error: code=" << code << " kind=" << category(code) << " message=\"" << flat << "\"\n";
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spatial super-resolution of EEG with an attention model, baselines and downstream tools"};
  app.require_subcommand(1);
  Options o;

  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic dataset (.esr1)");
  gen->add_option("--config", o.config, "Run config (key = value)");
  gen->add_option("--out", o.out, "Output dataset path")->required();

  auto* tr = app.add_subcommand("train", "Train a model; writes train_log.csv, best.ckpt, last.ckpt, config.txt");
  tr->add_option("--config", o.config, "Run config (key = value)");
  tr->add_option("--data", o.data, "Dataset (.esr1)")->required();
  tr->add_option("--out", o.out, "Output directory")->required();

  auto* ev = app.add_subcommand("eval", "Per-window masked-channel metrics as CSV");
  ev->add_option("--config", o.config, "Run config (key = value)");
  ev->add_option("--data", o.data, "Ground-truth dataset (.esr1)")->required();
  ev->add_option("--ckpt", o.ckpt, "Model checkpoint");
  ev->add_option("--baseline", o.baseline, "Evaluate a baseline instead: an | si");
  ev->add_option("--sr", o.sr, "Evaluate a precomputed full-montage dataset");
  ev->add_option("--scale", o.scale, "Scale factor (2, 4, 8)");
  ev->add_option("--case", o.mask_case, "Mask case (1-4)");
  ev->add_option("--seed", o.seed, "Value for the seed column");
  ev->add_flag("--summary", o.summary, "Print one mean row instead of one row per window");
  ev->add_option("--out", o.out, "Output CSV (default stdout)");

  auto* in = app.add_subcommand("interpolate", "Write a full-montage dataset reconstructed from the visible channels");
  in->add_option("--config", o.config, "Run config (key = value)");
  in->add_option("--data", o.data, "Ground-truth dataset (.esr1)")->required();
  in->add_option("--ckpt", o.ckpt, "Model checkpoint");
  in->add_option("--baseline", o.baseline, "Use a baseline instead: an | si");
  in->add_option("--scale", o.scale, "Scale factor (2, 4, 8)");
  in->add_option("--case", o.mask_case, "Mask case (1-4)");
  in->add_option("--out", o.out, "Output dataset path")->required();

  auto* fl = app.add_subcommand("flops", "Attention and convolution FLOPs as CSV");
  fl->add_option("--ds", o.ds, "Spatial size d_s");
  fl->add_option("--dt", o.dt, "Temporal size d_t");
  fl->add_option("--cin", o.c_in, "Conv2D input channels");
  fl->add_option("--cout", o.c_out, "Conv2D output channels");
  fl->add_option("--ks", o.k_s, "Conv2D spatial kernel");
  fl->add_option("--kt", o.k_t, "Conv2D temporal kernel");

  auto* fe = app.add_subcommand("features", "Band features as long-format CSV");
  fe->add_option("--data", o.data, "Dataset (.esr1)")->required();
  fe->add_option("--kind", o.kind, "psd | de");
  fe->add_option("--out", o.out, "Output CSV (default stdout)");

  auto* cl = app.add_subcommand("classify", "Classifier accuracy per band and for all bands");
  cl->add_option("--config", o.config, "Run config (key = value)");
  cl->add_option("--data", o.data, "Labeled dataset (.esr1)")->required();
  cl->add_option("--kind", o.kind, "psd | de (ignored when --config sets feature)");
  cl->add_option("--out", o.out, "Output CSV (default stdout)");

  auto* ca = app.add_subcommand("compare-arms", "Classifier accuracy on LR, SR and GT data");
  ca->add_option("--config", o.config, "Run config (key = value)");
  ca->add_option("--data", o.data, "Labeled ground-truth dataset (.esr1)")->required();
  ca->add_option("--ckpt", o.ckpt, "Model checkpoint")->required();
  ca->add_option("--kind", o.kind, "psd | de (ignored when --config sets feature)");
  ca->add_option("--out", o.out, "Output CSV (default stdout)");

  auto* pl = app.add_subcommand("plot", "SVG line plot of a training log or of channel traces");
  pl->add_option("--log", o.log, "Training log CSV");
  pl->add_option("--overlay", o.overlay, "Datasets to overlay (e.g. GT.esr1 SR.esr1)");
  pl->add_option("--channel", o.channel, "Channel name for --overlay");
  pl->add_option("--window", o.window, "Window index for --overlay");
  pl->add_option("--out", o.out, "Output SVG")->required();

  auto* mo = app.add_subcommand("montage", "Print a bundled montage as NAME x y z lines");
  mo->add_option("--name", o.name, "mi64 | seed62 | std32 | std16 | toy6")->required();
  mo->add_option("--out", o.out, "Output file (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return report(kConfig, e.what());
  }

  try {
    if (*gen) return cmd_gen_data(o);
    if (*tr) return cmd_train(o);
    if (*ev) return cmd_eval(o);
    if (*in) return cmd_interpolate(o);
    if (*fl) return cmd_flops(o);
    if (*fe) return cmd_features(o);
    if (*cl) return cmd_classify(o);
    if (*ca) return cmd_compare_arms(o);
    if (*pl) return cmd_plot(o);
    if (*mo) return cmd_montage(o);
  } catch (const IoError& e) {
    return report(kIo, e.what());
  } catch (const DatasetError& e) {
    return report(kIo, e.what());
  } catch (const CheckpointError& e) {
    return report(kIo, e.what());
  } catch (const NumericError& e) {
    return report(kNumeric, e.what());
  } catch (const MetricError& e) {
    return report(kNumeric, e.what());
  } catch (const SingularSystemError& e) {
    return report(kNumeric, e.what());
  } catch (const std::invalid_argument& e) {
    return report(kConfig, e.what());
  } catch (const MontageError& e) {
    return report(kConfig, e.what());
  } catch (const std::exception& e) {
    return report(kFailure, e.what());
  }
  return kFailure;
}
