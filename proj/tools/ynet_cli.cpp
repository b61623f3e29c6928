// ynet: command-line driver for the whole pipeline.
//   synth -> train-seg -> train-joint -> infer -> select-tau -> features
//         -> train-mlp -> diagnose, plus eval, gradcheck and params.
#include <CLI11.hpp>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <sstream>

#include "ynet/error.hpp"
#include "ynet/model/checkpoint.hpp"
#include "ynet/model/gradcheck_suite.hpp"
#include "ynet/pipeline/pipeline.hpp"

using namespace ynet;
using namespace ynet::pipeline;
using nlohmann::json;

namespace {

enum Exit { kOk = 0, kConfig = 1, kData = 2, kNumeric = 3 };

void log_line(const std::string& msg) {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char ts[32];
  std::strftime(ts, sizeof ts, "%H:%M:%S", std::localtime(&now));
  std::cerr << '[' << ts << "] " << msg << std::endl;
}

// String-typed config keys; everything else is numeric (tau also takes "auto").
bool is_string_key(const std::string& k) {
  return k == "encoder_block" || k == "decoder_block" || k == "feature_sharing" || k == "data_dir" || k == "out_dir";
}

// Config file plus one flag per config key. Flags win.
struct ConfigArgs {
  std::string file;
  std::map<std::string, std::string> overrides;
  bool show = false;

  void attach(CLI::App* app) {
    app->add_option("-c,--config", file, "JSON config file");
    for (const auto& k : RunConfig::keys()) app->add_option("--" + k, overrides[k], "override config key " + k);
    app->add_flag("--show-config", show, "print the effective config and exit");
  }

  RunConfig load() const {
    json j = json::object();
    if (!file.empty()) {
      std::ifstream f(file);
      if (!f) throw ConfigError("cannot read config file " + file);
      try {
        j = json::parse(f);
      } catch (const json::exception& e) {
        throw ConfigError(file + ": " + e.what());
      }
      if (!j.is_object()) throw ConfigError(file + ": expected a JSON object");
    }
    for (const auto& [k, v] : overrides) {
      if (v.empty()) continue;
      if (is_string_key(k) || (k == "tau" && v == "auto")) {
        j[k] = v;
        continue;
      }
      json parsed;
      try {
        parsed = json::parse(v);
      } catch (const json::exception&) {
        throw ConfigError("--" + k + ": not a number: " + v);
      }
      if (!parsed.is_number()) throw ConfigError("--" + k + ": not a number: " + v);
      j[k] = parsed;
    }
    return RunConfig::from_json(j);
  }
};

struct TrainArgs {
  TrainOptions opt;
  bool no_augment = false;
  void attach(CLI::App* app) {
    app->add_option("--momentum", opt.momentum, "SGD momentum (default 0)");
    app->add_flag("--no-augment", no_augment, "disable flips/crops");
    app->add_option("--stop-at-accuracy", opt.stop_at_train_accuracy,
                    "stop once eval-mode training pixel accuracy reaches this value");
  }
  TrainOptions get() const {
    TrainOptions o = opt;
    o.augment = !no_augment;
    return o;
  }
};

struct MlpArgs {
  MlpOptions opt;
  void attach(CLI::App* app) {
    app->add_option("--mlp-epochs", opt.epochs, "MLP epochs (default 500)");
    app->add_option("--mlp-lr", opt.lr, "MLP learning rate (default 1e-3)");
    app->add_option("--mlp-momentum", opt.momentum, "MLP momentum (default 0)");
  }
};

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

std::size_t parse_count(const std::string& s, const char* what) {
  try {
    std::size_t pos = 0;
    const auto v = std::stoul(s, &pos);
    if (pos == s.size()) return v;
  } catch (const std::exception&) {
  }
  throw ConfigError(std::string(what) + ": not a count: " + s);
}

int run(int argc, char** argv) {
  CLI::App app{"Y-Net breast biopsy segmentation and diagnosis pipeline"};
  app.require_subcommand(1);
  std::size_t nthreads = 0;
  app.add_option("--threads", nthreads, "cap on worker threads (0 = all cores)");

  ConfigArgs ca;
  TrainArgs ta;
  MlpArgs ma;

  auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic ROI dataset into data_dir");
  std::size_t n_train = 64, n_test = 32, roi_size = 712;
  ca.attach(synth_cmd);
  synth_cmd->add_option("--n-train", n_train, "training ROIs");
  synth_cmd->add_option("--n-test", n_test, "test ROIs");
  synth_cmd->add_option("--roi-size", roi_size, "ROI side in pixels (>= 384)");

  auto* seg_cmd = app.add_subcommand("train-seg", "segmentation-stage training");
  ca.attach(seg_cmd);
  ta.attach(seg_cmd);
  auto* joint_cmd = app.add_subcommand("train-joint", "joint segmentation + classification training");
  ca.attach(joint_cmd);
  ta.attach(joint_cmd);

  auto* infer_cmd = app.add_subcommand("infer", "tile, predict and stitch ROIs");
  ca.attach(infer_cmd);
  std::vector<std::string> splits;
  std::string image_path, output_path;
  infer_cmd->add_option("--split", splits, "dataset split(s) (default: train and test)");
  infer_cmd->add_option("--image", image_path, "infer a single ROI image (PPM) instead of a split");
  infer_cmd->add_option("--output", output_path, "mask output for --image (PGM)");

  auto* tau_cmd = app.add_subcommand("select-tau", "choose tau on validation ROIs");
  ca.attach(tau_cmd);
  ma.attach(tau_cmd);

  auto* feat_cmd = app.add_subcommand("features", "frequency + co-occurrence features per ROI");
  ca.attach(feat_cmd);
  feat_cmd->add_option("--split", splits, "dataset split(s) (default: train and test)");

  auto* mlp_cmd = app.add_subcommand("train-mlp", "train the diagnosis MLP");
  ca.attach(mlp_cmd);
  ma.attach(mlp_cmd);
  bool plain = false;
  std::string features_path, ckpt_path;
  mlp_cmd->add_flag("--plain", plain, "use plain-mask features instead of discriminative ones");
  mlp_cmd->add_option("--features", features_path, "features CSV (default: training split)");
  mlp_cmd->add_option("--output", ckpt_path, "MLP checkpoint path");

  auto* diag_cmd = app.add_subcommand("diagnose", "diagnose ROIs from features and report accuracy");
  ca.attach(diag_cmd);
  diag_cmd->add_flag("--plain", plain, "use plain-mask features and MLP");
  diag_cmd->add_option("--features", features_path, "features CSV (default: test split)");
  diag_cmd->add_option("--mlp", ckpt_path, "MLP checkpoint");

  auto* eval_cmd = app.add_subcommand("eval", "segmentation metrics between two mask directories");
  ca.attach(eval_cmd);
  std::string pred_dir, gt_dir, report_path;
  eval_cmd->add_option("--pred", pred_dir, "predicted masks (default: inferred test split)");
  eval_cmd->add_option("--gt", gt_dir, "ground-truth masks (default: data_dir/test)");
  eval_cmd->add_option("--report", report_path, "write the metrics JSON here as well");

  auto* grad_cmd = app.add_subcommand("gradcheck", "finite-difference gradient suite");
  bool corrupt = false;
  grad_cmd->add_flag("--corrupt-backward", corrupt, "negative control: include an op with a wrong backward");

  auto* params_cmd = app.add_subcommand("params", "parameter counts over a grid of network settings");
  ca.attach(params_cmd);
  std::string ws, ds, encs, decs, shares;
  bool check_ratio = false;
  params_cmd->add_option("--ws", ws, "comma-separated widths (default: config w)");
  params_cmd->add_option("--ds", ds, "comma-separated depths (default: config d)");
  params_cmd->add_option("--encoders", encs, "comma-separated encoder blocks");
  params_cmd->add_option("--decoders", decs, "comma-separated decoder blocks");
  params_cmd->add_option("--sharings", shares, "comma-separated sharing modes");
  params_cmd->add_flag("--check-ratio", check_ratio,
                       "require RCB-PSP / ESP-PSP joint counts within [2.2, 3.3] for every (w, d, sharing)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }
  set_threads(nthreads);

  if (grad_cmd->parsed()) {
    model::GradSuiteOptions go;
    go.corrupt_backward = corrupt;
    std::size_t failed = 0;
    const auto reports = model::run_gradcheck_suite(go, [&](const GradCheckReport& r) {
      std::printf("%-40s %s  max_rel %.3e  elements %zu\n", r.name.c_str(), r.passed ? "ok  " : "FAIL",
                  r.max_rel_error, r.elements_checked);
      failed += !r.passed;
    });
    std::printf("gradcheck: %zu checks, %zu failed (tolerance %.0e)\n", reports.size(), failed, go.tolerance);
    return failed ? kNumeric : kOk;
  }

  const RunConfig cfg = ca.load();
  if (ca.show) {
    std::cout << cfg.to_json().dump(2) << '\n';
    return kOk;
  }
  if (splits.empty()) splits = {"train", "test"};

  if (synth_cmd->parsed()) {
    synth::SynthConfig sc;
    sc.roi_size = roi_size;
    const auto recs = synth::generate_dataset(sc, cfg.data_dir, n_train, n_test, cfg.seed);
    std::cout << "synth: " << recs.size() << " ROIs (" << n_train << " train / " << n_test << " test, " << roi_size
              << " px) -> " << cfg.data_dir.string() << '\n';
  } else if (seg_cmd->parsed()) {
    const auto r = train_seg_stage(cfg, ta.get(), log_line);
    std::cout << "train-seg: " << r.history.size() << " epochs, best epoch " << r.best_epoch << " loss "
              << r.best_loss << " -> " << seg_files(cfg).checkpoint.string() << '\n';
  } else if (joint_cmd->parsed()) {
    const auto r = train_joint_stage(cfg, ta.get(), log_line);
    std::cout << "train-joint: " << r.history.size() << " epochs, best epoch " << r.best_epoch << " loss "
              << r.best_loss << " -> " << joint_files(cfg).checkpoint.string() << '\n';
  } else if (infer_cmd->parsed()) {
    if (!image_path.empty()) {
      const auto ck = joint_files(cfg).checkpoint;
      auto net = load_network(fs::exists(ck) ? ck : seg_files(cfg).checkpoint);
      const auto img = io::read_ppm(image_path);
      const auto p = infer_roi(*net, img, cfg.instance_size, cfg.overlap);
      log_line("infer: " + image_path + " " + std::to_string(p.grid.count()) + " instance(s)");
      const fs::path out = output_path.empty() ? fs::path(image_path).replace_extension(".pred.pgm") : fs::path(output_path);
      io::write_pgm(out, p.mask);
      std::cout << "infer: " << p.grid.count() << " instance(s) -> " << out.string() << '\n';
    } else {
      for (const auto& s : splits) infer_stage(cfg, s, log_line);
      std::cout << "infer: done -> " << (cfg.out_dir / "infer").string() << '\n';
    }
  } else if (tau_cmd->parsed()) {
    const auto c = select_tau_stage(cfg, ma.opt, log_line);
    std::cout << "select-tau: tau " << c.tau << " validation accuracy " << c.accuracy << " -> "
              << tau_file(cfg).string() << '\n';
  } else if (feat_cmd->parsed()) {
    for (const auto& s : splits) features_stage(cfg, s, log_line);
    std::cout << "features: done -> " << (cfg.out_dir / "features").string() << '\n';
  } else if (mlp_cmd->parsed()) {
    const fs::path f = features_path.empty() ? features_file(cfg, "train", !plain) : fs::path(features_path);
    const fs::path out = ckpt_path.empty() ? cfg.out_dir / (plain ? "mlp_plain.ckpt" : "mlp_disc.ckpt") : fs::path(ckpt_path);
    const auto h = train_mlp_stage(cfg, f, out, ma.opt, log_line);
    std::cout << "train-mlp: final train accuracy " << (h.accuracy.empty() ? 0.0 : h.accuracy.back()) << " -> "
              << out.string() << '\n';
  } else if (diag_cmd->parsed()) {
    const fs::path f = features_path.empty() ? features_file(cfg, "test", !plain) : fs::path(features_path);
    const fs::path m = ckpt_path.empty() ? cfg.out_dir / (plain ? "mlp_plain.ckpt" : "mlp_disc.ckpt") : fs::path(ckpt_path);
    const std::string tag = plain ? "plain" : "disc";
    fs::create_directories(cfg.out_dir);
    const auto rep = diagnose_stage(m, f, cfg.out_dir / ("predictions_" + tag + ".csv"));
    write_json(cfg.out_dir / ("diagnosis_" + tag + ".json"), rep.to_json());
    std::cout << "diagnose: accuracy " << rep.accuracy << " (" << tag << " features, " << f.string() << ")\n";
  } else if (eval_cmd->parsed()) {
    const fs::path p = pred_dir.empty() ? infer_dir(cfg, "test") : fs::path(pred_dir);
    const fs::path g = gt_dir.empty() ? cfg.data_dir / "test" : fs::path(gt_dir);
    const auto rep = eval_masks(p, g, cfg.net.tissue_classes);
    if (!report_path.empty()) write_json(report_path, rep.to_json());
    std::cout << rep.to_json().dump() << '\n';
    log_line("eval: " + std::to_string(rep.masks) + " masks, miou " + std::to_string(rep.miou));
  } else if (params_cmd->parsed()) {
    // A given flag uses its list (possibly empty); otherwise the config value.
    auto pick = [&](const char* flag, const std::string& value, const std::string& fallback) {
      return params_cmd->count(flag) ? split_list(value) : std::vector<std::string>{fallback};
    };
    std::vector<std::size_t> wv, dv;
    for (const auto& s : pick("--ws", ws, std::to_string(cfg.net.w))) wv.push_back(parse_count(s, "--ws"));
    for (const auto& s : pick("--ds", ds, std::to_string(cfg.net.d))) dv.push_back(parse_count(s, "--ds"));
    const auto ev = pick("--encoders", encs, std::string(nn::block_kind_name(cfg.net.encoder)));
    const auto dcv = pick("--decoders", decs, std::string(nn::block_kind_name(cfg.net.decoder)));
    const auto sv = pick("--sharings", shares, std::string(model::sharing_name(cfg.net.sharing)));
    std::printf("%6s %3s %-4s %-4s %-7s %12s %12s\n", "w", "d", "enc", "dec", "sharing", "seg", "joint");
    std::map<std::tuple<std::size_t, std::size_t, std::string, std::string, std::string>, std::size_t> joint;
    for (std::size_t w : wv)
      for (std::size_t d : dv)
        for (const auto& e : ev)
          for (const auto& dc : dcv)
            for (const auto& s : sv) {
              model::NetworkConfig nc = cfg.net;
              nc.w = w;
              nc.d = d;
              nc.encoder = nn::parse_block_kind(e);
              nc.decoder = nn::parse_block_kind(dc);
              nc.sharing = model::parse_sharing(s);
              nc.validate();
              Rng rng(0);
              model::YNet<float> net(nc, rng);
              const std::size_t seg = net.seg_param_count();
              net.attach_classification_head(rng);
              const std::size_t total = net.param_count();
              joint[{w, d, e, dc, s}] = total;
              std::printf("%6zu %3zu %-4s %-4s %-7s %12zu %12zu\n", w, d, e.c_str(), dc.c_str(), s.c_str(), seg, total);
            }
    if (check_ratio) {
      bool ok = true;
      std::size_t checked = 0;
      for (std::size_t w : wv)
        for (std::size_t d : dv)
          for (const auto& s : sv) {
            const auto a = joint.find({w, d, "rcb", "psp", s}), b = joint.find({w, d, "esp", "psp", s});
            if (a == joint.end() || b == joint.end()) continue;
            const double ratio = double(a->second) / double(b->second);
            const bool in = ratio >= 2.2 && ratio <= 3.3;
            ok = ok && in;
            ++checked;
            std::printf("ratio rcb-psp/esp-psp w=%zu d=%zu %s: %.3f %s\n", w, d, s.c_str(), ratio,
                        in ? "within [2.2, 3.3]" : "OUTSIDE [2.2, 3.3]");
          }
      if (!checked) std::printf("ratio: no (rcb, psp) and (esp, psp) pair in the grid\n");
      if (!ok) return kNumeric;
    }
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return kNumeric;
  } catch (const Error& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kData;
  }
}
