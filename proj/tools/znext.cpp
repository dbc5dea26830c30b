#include <CLI11.hpp>

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <iomanip>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include "znext/znext.hpp"

using namespace znext;
namespace fs = std::filesystem;

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kNumerical = 3 };

/// Configuration problems raised while resolving flags.
struct UsageError : Error {
  using Error::Error;
};

std::size_t worker_count(std::size_t jobs) {
  std::size_t n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("ZNEXT_THREADS")) {
    try {
      n = std::max<std::size_t>(1, std::stoul(env));
    } catch (const std::exception&) {
      throw UsageError(std::string("ZNEXT_THREADS must be a positive integer, got '") + env + "'");
    }
  }
  return std::max<std::size_t>(1, std::min(n, jobs));
}

/// Runs fn(i) for i in [0, n) on up to ZNEXT_THREADS workers. The first
/// exception is rethrown after all workers stop.
template <typename F>
void parallel_for(std::size_t n, F fn) {
  const std::size_t workers = worker_count(n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first;
  std::mutex mu;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (std::size_t i; (i = next.fetch_add(1)) < n;) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(mu);
          if (!first) first = std::current_exception();
          next = n;
        }
      }
    });
  for (auto& t : pool) t.join();
  if (first) std::rethrow_exception(first);
}

// ---- synth -----------------------------------------------------------------

struct SynthArgs {
  std::string out;
  SyntheticSpec spec;
};

int run_synth(const SynthArgs& a) {
  a.spec.validate();
  std::cout << "synth: count=" << a.spec.count << " side=" << a.spec.side << " contrast=" << a.spec.contrast
            << " clip_len=" << a.spec.clip_len << " drift=" << a.spec.drift << " seed=" << a.spec.seed << "\n";
  auto path = write_dataset(a.out, generate_synthetic(a.spec));
  std::cout << "wrote " << path.string() << "\n";
  return kOk;
}

// ---- train -----------------------------------------------------------------

struct TrainArgs {
  std::string data, config, out, log;
  std::vector<std::string> sets;
  std::map<std::string, std::string> flags;  // flag name -> config key value
};

RunConfig resolve_config(const std::string& file, const std::map<std::string, std::string>& flags,
                         const std::vector<std::string>& sets) {
  RunConfig rc;
  try {
    if (!file.empty()) rc.load_file(file);
    for (const auto& kv : sets) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw Error("--set expects key=value, got '" + kv + "'");
      rc.set(detail::trim(kv.substr(0, eq)), kv.substr(eq + 1));
    }
    for (const auto& [k, v] : flags) rc.set(k, v);
    rc.validate();
  } catch (const DataError&) {
    throw;
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  return rc;
}

Dataset load_for_model(const std::string& manifest, const ModelConfig& mc) {
  auto m = read_manifest(manifest);
  if (mc.clip_len > 1 && !m.clips)
    throw DataError(manifest + ": clip length " + std::to_string(mc.clip_len) + " needs a clip manifest");
  return load_dataset(m);
}

int run_train(const TrainArgs& a) {
  RunConfig rc = resolve_config(a.config, a.flags, a.sets);
  std::cout << "# resolved config\n" << rc.to_text() << std::flush;
  Dataset ds = load_for_model(a.data, rc.model);
  std::cout << "data: " << ds.size() << " samples from " << a.data << "\n";
  Model<float> model(rc.model);
  std::cout << "model: " << model.param_count() << " parameters, digest " << std::hex << rc.model.digest()
            << std::dec << "\n";
  TrainLog log = train(model, ds, rc.train, &std::cout);
  save_checkpoint(a.out, model.tensors(), rc.model.digest());
  write_file(a.out + ".cfg", rc.to_text());
  const std::string log_path = a.log.empty() ? a.out + ".csv" : a.log;
  std::ostringstream csv;
  write_train_log(csv, log);
  write_file(log_path, csv.str());
  std::cout << "wrote " << a.out << ", " << a.out << ".cfg, " << log_path << "\n";
  return kOk;
}

// ---- predict ---------------------------------------------------------------

struct PredictArgs {
  std::string ckpt, data, out, config;
  bool force = false;
};

int run_predict(const PredictArgs& a) {
  const std::string cfg_path = a.config.empty() ? a.ckpt + ".cfg" : a.config;
  if (!fs::exists(cfg_path)) throw DataError("missing file: " + cfg_path + " (pass --config)");
  RunConfig rc = resolve_config(cfg_path, {}, {});
  std::cout << "# resolved config\n" << rc.model_text() << std::flush;
  Model<float> model(rc.model);
  load_checkpoint(a.ckpt, model.tensors(), rc.model.digest(), a.force);
  auto manifest = read_manifest(a.data);
  Dataset ds = load_dataset(manifest);
  const bool clip_mode = manifest.clips;
  auto preds = predict_dataset(model, ds, rc.train.input_side, clip_mode);
  std::error_code ec;
  fs::create_directories(a.out, ec);
  if (!fs::is_directory(a.out)) throw DataError("cannot create output directory " + a.out);
  std::size_t written = 0;
  for (std::size_t i = 0; i < ds.size(); ++i)
    for (std::size_t t = 0; t < preds[i].size(); ++t) {
      std::string stem = ds[i].name;
      if (clip_mode) {
        char buf[16];
        std::snprintf(buf, sizeof buf, "_f%03zu", t);
        stem += buf;
      }
      write_image(fs::path(a.out) / (stem + ".pgm"), preds[i][t]);
      ++written;
    }
  std::cout << "wrote " << written << " predictions to " << a.out << "\n";
  return kOk;
}

// ---- eval ------------------------------------------------------------------

struct EvalArgs {
  std::string pred, gt, out, curves;
};

std::map<std::string, fs::path> pgm_files(const std::string& dir) {
  if (!fs::is_directory(dir)) throw DataError("not a directory: " + dir);
  std::map<std::string, fs::path> out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".pgm") out[e.path().stem().string()] = e.path();
  return out;
}

int run_eval(const EvalArgs& a) {
  auto preds = pgm_files(a.pred), gts = pgm_files(a.gt);
  for (const auto& [name, path] : preds)
    if (!gts.count(name)) throw DataError("missing mask for prediction " + path.string() + ": expected " +
                                          (fs::path(a.gt) / (name + ".pgm")).string());
  for (const auto& [name, path] : gts)
    if (!preds.count(name)) throw DataError("missing prediction for mask " + path.string());
  if (preds.empty()) throw DataError("no .pgm predictions in " + a.pred);
  std::vector<std::string> names;
  for (const auto& kv : preds) names.push_back(kv.first);
  std::vector<MetricsReport> reports(names.size());
  parallel_for(names.size(), [&](std::size_t i) {
    Image p = read_image(preds[names[i]]);
    Image g = read_mask(gts[names[i]]);
    if (p.channels != 1) throw DataError(preds[names[i]].string() + ": prediction must be grayscale");
    if (p.height != g.height || p.width != g.width)
      throw DataError(names[i] + ": prediction " + std::to_string(p.height) + "x" + std::to_string(p.width) +
                      " does not match mask " + std::to_string(g.height) + "x" + std::to_string(g.width));
    reports[i] = evaluate(p, g);
  });
  std::ostringstream csv;
  write_report_header(csv);
  std::size_t empty = 0;
  for (std::size_t i = 0; i < names.size(); ++i) {
    write_report_row(csv, names[i], reports[i]);
    empty += reports[i].empty_gt;
  }
  const MetricsReport summary = aggregate(reports);
  write_report_row(csv, "mean", summary);
  write_file(a.out, csv.str());
  if (!a.curves.empty()) {
    fs::create_directories(a.curves);
    for (std::size_t i = 0; i < names.size(); ++i) {
      std::ostringstream os;
      write_curves(os, reports[i]);
      write_file(fs::path(a.curves) / (names[i] + ".csv"), os.str());
    }
    std::ostringstream os;
    write_curves(os, summary);
    write_file(fs::path(a.curves) / "mean.csv", os.str());
  }
  if (empty) std::cerr << "warning: " << empty << " masks are empty; their weighted F is reported as 0\n";
  std::cout.precision(4);
  std::cout << std::fixed << "Sm " << summary.s_measure << "  wF " << summary.weighted_f << "  MAE " << summary.mae
            << "  maxF " << summary.max_f << "  meanE " << summary.mean_e << "  mDice " << summary.m_dice
            << "  mIoU " << summary.m_iou << "  (" << names.size() << " images)\n";
  return kOk;
}

// ---- gradcheck -------------------------------------------------------------

struct GradcheckArgs {
  std::string module = "all";
  std::uint64_t seed = 0;
  std::string corrupt;
};

int run_gradcheck(const GradcheckArgs& a) {
  std::cout << "gradcheck: module=" << a.module << " seed=" << a.seed << "\n";
  std::vector<double> tols;
  auto reports = run_gradchecks(a.module, a.seed, a.corrupt, &tols);
  if (!a.corrupt.empty()) {
    bool found = false;
    for (const auto& r : reports) found |= r.name == a.corrupt;
    if (!found) throw UsageError("--corrupt-op: no case named '" + a.corrupt + "' in module " + a.module);
  }
  bool ok = true;
  std::size_t width = 0;
  for (const auto& r : reports) width = std::max(width, r.name.size());
  for (std::size_t i = 0; i < reports.size(); ++i) {
    const auto& r = reports[i];
    ok = ok && r.passed;
    std::cout << std::left << std::setw(int(width) + 2) << r.name << std::scientific << std::setprecision(3)
              << r.worst << "  (tol " << tols[i] << ")  " << (r.passed ? "ok" : "FAIL");
    if (r.kinks) std::cout << "  (" << r.kinks << " at kinks)";
    if (!r.failure.empty()) std::cout << "  " << r.failure;
    std::cout << "\n";
  }
  std::cout << reports.size() << " cases, " << (ok ? "all passed" : "FAILED") << "\n";
  return ok ? kOk : kNumerical;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Camouflaged object detection with zoom-in/zoom-out features."};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  SynthArgs sa;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic camouflage dataset");
  synth->add_option("--out", sa.out, "Output directory")->required();
  synth->add_option("--count", sa.spec.count, "Number of images or clips")->capture_default_str();
  synth->add_option("--side", sa.spec.side, "Image side in pixels")->capture_default_str();
  synth->add_option("--contrast", sa.spec.contrast, "Object/background mean gap")->capture_default_str();
  synth->add_option("--clip-len", sa.spec.clip_len, "Frames per clip (1 = images)")->capture_default_str();
  synth->add_option("--drift", sa.spec.drift, "Max object motion per frame in pixels")->capture_default_str();
  synth->add_option("--min-objects", sa.spec.min_objects)->capture_default_str();
  synth->add_option("--max-objects", sa.spec.max_objects)->capture_default_str();
  synth->add_option("--seed", sa.spec.seed)->capture_default_str();

  TrainArgs ta;
  auto* tr = app.add_subcommand("train", "Train a model and write a checkpoint");
  tr->add_option("--data", ta.data, "Manifest file")->required();
  tr->add_option("--config", ta.config, "key = value config file");
  tr->add_option("--out", ta.out, "Checkpoint path")->required();
  tr->add_option("--log", ta.log, "CSV log path (default: <out>.csv)");
  tr->add_option("--set", ta.sets, "Override any config key: key=value");
  const std::vector<std::pair<std::string, std::string>> train_flags{
      {"--ual", "ual"},         {"--schedule", "schedule"},     {"--heads", "heads"},
      {"--groups", "groups"},   {"--scales", "scales"},         {"--downsample", "downsample"},
      {"--clip-len", "clip_len"}, {"--seed", "seed"},           {"--epochs", "epochs"},
      {"--batch-size", "batch_size"}, {"--lr", "lr"},           {"--channels", "channels"},
      {"--levels", "levels"},   {"--input-side", "input_side"}, {"--fusion", "fusion"},
      {"--augment", "augment"}};
  std::map<std::string, std::string> flag_values;
  for (const auto& [flag, key] : train_flags) tr->add_option(flag, flag_values[key], "Sets config key " + key);

  PredictArgs pa;
  auto* pr = app.add_subcommand("predict", "Write one PGM prediction per input frame");
  pr->add_option("--ckpt", pa.ckpt, "Checkpoint path")->required();
  pr->add_option("--data", pa.data, "Manifest file")->required();
  pr->add_option("--out", pa.out, "Output directory")->required();
  pr->add_option("--config", pa.config, "Model config (default: <ckpt>.cfg)");
  pr->add_flag("--force", pa.force, "Load even if the config digest differs");

  EvalArgs ea;
  auto* ev = app.add_subcommand("eval", "Score predictions against masks");
  ev->add_option("--pred", ea.pred, "Directory of predicted .pgm maps")->required();
  ev->add_option("--gt", ea.gt, "Directory of ground-truth .pgm masks")->required();
  ev->add_option("--out", ea.out, "Report CSV")->required();
  ev->add_option("--curves", ea.curves, "Directory for 256-point curve CSVs");

  GradcheckArgs ga;
  auto* gc = app.add_subcommand("gradcheck", "Compare analytic and numerical gradients");
  gc->add_option("--module", ga.module, "Case group")
      ->check(CLI::IsMember({"all", "tensor", "mhsiu", "rgpu", "model"}))
      ->capture_default_str();
  gc->add_option("--seed", ga.seed)->capture_default_str();
  gc->add_option("--corrupt-op", ga.corrupt)->group("");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*synth) return run_synth(sa);
    if (*tr) {
      for (const auto& [key, value] : flag_values)
        if (!value.empty()) ta.flags[key] = value;
      return run_train(ta);
    }
    if (*pr) return run_predict(pa);
    if (*ev) return run_eval(ea);
    if (*gc) return run_gradcheck(ga);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return kNumerical;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const ShapeError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kData;
  }
  return kUsage;
}
