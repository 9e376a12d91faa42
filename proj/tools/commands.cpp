#include "commands.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>

#include "metagnn/baselines.hpp"
#include "metagnn/checkpoint.hpp"
#include "metagnn/clip_cache.hpp"
#include "metagnn/edf.hpp"
#include "metagnn/errors.hpp"
#include "metagnn/gradcheck_suite.hpp"
#include "metagnn/random.hpp"
#include "metagnn/report.hpp"

namespace fs = std::filesystem;

namespace metagnn::cli {

namespace {

constexpr std::uint64_t kInitStream = 0x1417;
constexpr std::uint64_t kTestSplitStream = 0x7e57;
constexpr std::uint64_t kGlobalStream = 0x6106;
constexpr std::uint64_t kPpatStream = 0x99a7;

std::vector<std::uint8_t> read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::ofstream open_out(const fs::path& path, bool binary = false) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, binary ? std::ios::binary : std::ios::out);
  if (!out) throw ConfigError("cannot write " + path.string());
  return out;
}

std::string fixed3(double v) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(4) << v;
  return s.str();
}

void write_resolved(const RunConfig& config, const std::string& command) {
  nlohmann::json j = config;
  write_json(fs::path(config.out_dir) / (command + ".config.json"), j);
}

std::uint64_t montage_key(const RunConfig& config) {
  if (config.montage.empty() || config.montage == "builtin") return fnv1a("builtin");
  return fnv1a(read_bytes(config.montage));
}

std::string annotation_text(const std::vector<SeizureInterval>& events) {
  std::ostringstream s;
  s << std::setprecision(17);
  for (const auto& e : events) {
    s << e.start_s << ',' << e.end_s << ',' << to_string(e.type) << ';';
  }
  return s.str();
}

struct Loaded {
  std::string name;
  std::vector<std::uint8_t> bytes;
  Recording recording;
};

struct Data {
  Montage montage;
  ElectrodeGraph graph;
  PatientSplit split;
};

Data load_data(const RunConfig& config, std::ostream& log) {
  Data d;
  d.montage = config.load_montage();
  d.graph = build_distance_graph(d.montage, config.graph);
  auto summary = cmd_preprocess(config, log);
  d.split = split_patients(summary.patients, config.split);
  log << "split: " << d.split.train.size() << " train / " << d.split.test.size()
      << " test patients\n";
  return d;
}

std::vector<PatientTask> make_test_tasks(const RunConfig& config, const Data& d) {
  if (d.split.test.empty()) throw ConfigError("no test patients in the split");
  return test_tasks(d.split.test, config.task,
                    derive_seed(config.meta.seed, kTestSplitStream));
}

ModelParams initial_model(const RunConfig& config) {
  return ModelParams::init(config.arch, derive_seed(config.meta.seed, kInitStream));
}

MetaTrainResult meta_train(const RunConfig& config, const Data& d, std::ostream& log) {
  if (d.split.train.empty()) throw ConfigError("no training patients in the split");
  const auto every = std::max<std::size_t>(1, config.meta.meta_iterations / 10);
  const auto start = std::chrono::steady_clock::now();
  return train_meta(initial_model(config), d.split.train, config.task, d.graph,
                    config.meta, [&](const CurveRow& row) {
                      if ((row.iteration + 1) % every != 0) return;
                      const std::chrono::duration<double> dt =
                          std::chrono::steady_clock::now() - start;
                      log << "meta " << row.iteration + 1 << '/'
                          << config.meta.meta_iterations
                          << " support_acc " << fixed3(row.support_acc)
                          << " query_acc " << fixed3(row.query_acc) << " ("
                          << std::setprecision(3) << dt.count() << " s)\n";
                    });
}

void log_rows(std::span<const ModelEvaluation> rows, std::ostream& log) {
  for (const auto& r : rows) {
    log << r.model << ' ' << to_string(r.task) << " @" << r.iterations
        << ": accuracy " << fixed3(r.mean.accuracy) << " macro_f1 "
        << fixed3(r.mean.macro_f1) << '\n';
  }
}

}  // namespace

SynthSummary cmd_synth(const SynthConfig& spec, const fs::path& out_dir,
                       std::ostream& log) {
  spec.validate();
  const auto montage = Montage::standard_1020();
  fs::create_directories(out_dir);
  SynthSummary summary;
  std::vector<Recording> all;
  for (std::size_t i = 0; i < spec.patients; ++i) {
    auto recs = synth_patient(spec, montage, i);
    for (auto& r : recs) {
      auto out = open_out(out_dir / (r.recording_id + ".edf"), true);
      const auto bytes = write_edf(r, montage);
      out.write(reinterpret_cast<const char*>(bytes.data()),
                static_cast<std::streamsize>(bytes.size()));
      if (!out) throw ConfigError("cannot write " + r.recording_id + ".edf");
      summary.seizures += r.annotations.size();
      summary.hours += r.duration_s() / 3600.0;
      // Only the annotations are kept; the signals are on disk now.
      r.signals.clear();
      all.push_back(std::move(r));
    }
  }
  {
    auto out = open_out(out_dir / "annotations.csv");
    write_annotations_csv(out, all);
  }
  write_json(out_dir / "synth.json", nlohmann::json(spec));
  summary.patients = spec.patients;
  summary.recordings = all.size();
  log << "synth: " << summary.patients << " patients, " << summary.recordings
      << " recordings, " << summary.seizures << " seizures, "
      << std::setprecision(3) << summary.hours << " h -> " << out_dir.string()
      << '\n';
  return summary;
}

PreprocessSummary cmd_preprocess(const RunConfig& config, std::ostream& log) {
  if (config.data_dir.empty()) throw ConfigError("data_dir is not set");
  const fs::path data_dir = config.data_dir;
  if (!fs::is_directory(data_dir)) {
    throw ConfigError("data_dir " + data_dir.string() + " is not a directory");
  }
  const auto montage = config.load_montage();

  std::map<std::string, std::vector<SeizureInterval>> annotations;
  if (const auto csv = data_dir / "annotations.csv"; fs::exists(csv)) {
    std::ifstream in(csv);
    annotations = read_annotations_csv(in);
  }

  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(data_dir)) {
    auto ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    if (entry.is_regular_file() && ext == ".edf") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());

  PreprocessSummary summary;
  summary.files = files.size();
  std::map<std::string, std::vector<Loaded>> by_patient;
  for (const auto& path : files) {
    const auto name = path.stem().string();
    try {
      Loaded l{name, read_bytes(path), {}};
      l.recording = parse_edf(l.bytes, montage, name);
      if (auto it = annotations.find(name); it != annotations.end()) {
        l.recording.annotations = it->second;
      }
      l.recording.validate();
      by_patient[l.recording.patient_id].push_back(std::move(l));
    } catch (const std::exception& e) {
      ++summary.failed_files;
      log << "skip " << path.filename().string() << ": " << e.what() << '\n';
    }
  }
  if (by_patient.empty()) {
    throw FormatError("no usable recordings in " + data_dir.string() + " (" +
                      std::to_string(summary.failed_files) + " of " +
                      std::to_string(summary.files) + " failed)");
  }

  const auto cache_dir = config.resolved_cache_dir();
  const std::uint64_t base =
      fnv1a(nlohmann::json(config.pipeline).dump(), montage_key(config));
  for (auto& [patient, loaded] : by_patient) {
    std::uint64_t key = base;
    for (const auto& l : loaded) {
      key = fnv1a(l.name, key);
      key = fnv1a(l.bytes, key);
      key = fnv1a(annotation_text(l.recording.annotations), key);
    }
    if (auto cached = load_patient_cache(cache_dir, patient, key)) {
      ++summary.patients_cached;
      summary.patients.push_back(std::move(*cached));
      continue;
    }
    std::vector<Recording> recs;
    for (auto& l : loaded) recs.push_back(std::move(l.recording));
    auto built = build_patients(recs, config.pipeline);
    for (auto& p : built) {
      save_patient_cache(cache_dir, p, key);
      ++summary.patients_built;
      summary.patients.push_back(std::move(p));
    }
  }
  std::sort(summary.patients.begin(), summary.patients.end(),
            [](const PatientData& a, const PatientData& b) {
              return a.patient_id < b.patient_id;
            });
  log << "preprocess: " << summary.files - summary.failed_files << '/'
      << summary.files << " files, " << summary.patients_built << " patients built, "
      << summary.patients_cached << " from cache (" << cache_dir.string() << ")\n";
  return summary;
}

void cmd_train(const RunConfig& config, std::ostream& log) {
  write_resolved(config, "train");
  const auto d = load_data(config, log);
  const auto result = meta_train(config, d, log);
  const fs::path out = config.out_dir;
  fs::create_directories(out);
  save_checkpoint(out / "model.ckpt", result.model);
  auto curves = open_out(out / "curves.csv");
  write_curves_csv(curves, result.curves);
  log << "train: wrote " << (out / "model.ckpt").string() << '\n';
}

void cmd_finetune(const RunConfig& config, const std::optional<fs::path>& checkpoint,
                  std::ostream& log) {
  write_resolved(config, "finetune");
  const fs::path out = config.out_dir;
  const auto start = load_checkpoint(checkpoint.value_or(out / "model.ckpt"));
  const auto d = load_data(config, log);
  fs::create_directories(out / "finetuned");
  for (const auto& task : make_test_tasks(config, d)) {
    const auto result = fine_tune(start, task, d.graph, config.meta.finetune_iterations,
                                  config.meta.finetune_lr, class_count(config.task));
    save_checkpoint(out / "finetuned" / (task.patient_id + ".ckpt"), result.model);
    auto trace = open_out(out / "traces" / (task.patient_id + ".csv"));
    write_trace_csv(trace, result.trace);
    log << "finetune " << task.patient_id << ": accuracy "
        << fixed3(result.trace.front().query.accuracy) << " -> "
        << fixed3(result.trace.back().query.accuracy) << '\n';
  }
}

void cmd_eval(const RunConfig& config, const std::optional<fs::path>& checkpoint,
              std::ostream& log) {
  write_resolved(config, "eval");
  const fs::path out = config.out_dir;
  const auto d = load_data(config, log);
  const auto tasks = make_test_tasks(config, d);
  ModelEvaluation row;
  if (checkpoint) {
    row = evaluate_fixed(checkpoint->stem().string(), load_checkpoint(*checkpoint),
                         tasks, config.task, d.graph);
  } else {
    row.model = model_label(config.arch.arch, "ML");
    row.task = config.task;
    row.iterations = config.meta.finetune_iterations;
    for (const auto& t : tasks) {
      const auto model = load_checkpoint(out / "finetuned" / (t.patient_id + ".ckpt"));
      PatientReport r;
      r.patient_id = t.patient_id;
      r.metrics = metrics_of(
          evaluate_clips(model, t.query, d.graph, class_count(config.task)));
      r.trace.push_back({row.iterations, 0.0, r.metrics});
      row.patients.push_back(std::move(r));
    }
    row.mean = patient_average(row.patients);
  }
  const std::vector<ModelEvaluation> rows{row};
  write_report_dir(out, rows);
  log_rows(rows, log);
}

void cmd_baselines(const RunConfig& config, std::ostream& log) {
  write_resolved(config, "baselines");
  const fs::path out = fs::path(config.out_dir) / "baselines";
  const auto d = load_data(config, log);
  const auto tasks = make_test_tasks(config, d);
  const auto arch = config.arch.arch;
  fs::create_directories(out);

  const auto global = train_global(initial_model(config), d.split.train, config.task,
                                   d.graph, config.global,
                                   derive_seed(config.meta.seed, kGlobalStream));
  save_checkpoint(out / "glob.ckpt", global);
  const auto meta = meta_train(config, d, log);
  save_checkpoint(out / "meta.ckpt", meta.model);

  std::vector<ModelEvaluation> rows;
  rows.push_back(evaluate_fixed(model_label(arch, "Glob"), global, tasks,
                                config.task, d.graph));
  rows.push_back(evaluate_ppat(model_label(arch, "PPAT"), config.arch, tasks,
                               config.task, d.graph, config.ppat_iterations,
                               config.meta.finetune_lr,
                               derive_seed(config.meta.seed, kPpatStream)));
  rows.push_back(evaluate_finetuned(model_label(arch, "ML"), meta.model, tasks,
                                    config.task, d.graph,
                                    config.meta.finetune_iterations,
                                    config.meta.finetune_lr));
  write_report_dir(out, rows);
  log_rows(rows, log);
}

bool cmd_gradcheck(std::size_t seeds, const std::string& filter, std::ostream& out) {
  GradcheckOptions options;
  options.seeds = seeds;
  options.filter = filter;
  const auto start = std::chrono::steady_clock::now();
  const auto results = run_gradcheck_suite(options);
  const std::chrono::duration<double> dt = std::chrono::steady_clock::now() - start;
  bool ok = !results.empty();
  out << std::left << std::setw(30) << "check" << std::setw(11) << "group"
      << std::setw(14) << "max_rel_err" << std::setw(10) << "tol" << "status\n";
  for (const auto& r : results) {
    char err[32], tol[32];
    std::snprintf(err, sizeof err, "%.3e", r.max_rel_error);
    std::snprintf(tol, sizeof tol, "%.0e", r.tolerance);
    out << std::setw(30) << r.name << std::setw(11) << r.group << std::setw(14)
        << err << std::setw(10) << tol << (r.passed() ? "ok" : "FAIL") << '\n';
    ok = ok && r.passed();
  }
  out << results.size() << " checks, " << seeds << " seeds each, "
      << std::setprecision(3) << dt.count() << " s: " << (ok ? "pass" : "FAIL")
      << '\n';
  return ok;
}

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"Few-shot personalised EEG seizure detection with graph networks"};
  app.require_subcommand(1);
  std::size_t threads = 0;
  app.add_option("--threads", threads, "Worker cap (0 = all cores)");

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string data_dir, out_dir, cache_dir;
  std::string checkpoint;
  auto add_run_options = [&](CLI::App* sub) {
    sub->add_option("-c,--config", config_path, "Run configuration (JSON)")
        ->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "Overrides meta.seed");
    sub->add_option("--data", data_dir, "Overrides data_dir");
    sub->add_option("--out", out_dir, "Overrides out_dir");
    sub->add_option("--cache", cache_dir, "Overrides cache_dir");
  };

  auto* synth = app.add_subcommand("synth", "Generate a synthetic EDF cohort");
  std::string preset = "train", spec_path, synth_out;
  std::optional<std::size_t> synth_patients;
  std::optional<std::uint64_t> synth_seed;
  synth->add_option("--preset", preset, "Cohort preset")
      ->check(CLI::IsMember({"train", "test", "default"}));
  synth->add_option("--spec", spec_path, "Generator spec (JSON); overrides --preset")
      ->check(CLI::ExistingFile);
  synth->add_option("--patients", synth_patients, "Number of patients");
  synth->add_option("--seed", synth_seed, "Generator seed");
  synth->add_option("--out", synth_out, "Output directory")->required();

  auto* preprocess = app.add_subcommand("preprocess", "Build clip caches");
  add_run_options(preprocess);
  auto* train = app.add_subcommand("train", "Meta-train the classifier");
  add_run_options(train);
  auto* finetune = app.add_subcommand("finetune", "Fine-tune per test patient");
  add_run_options(finetune);
  finetune->add_option("--checkpoint", checkpoint,
                       "Start model (default <out>/model.ckpt)");
  auto* eval = app.add_subcommand("eval", "Score models on test patients");
  add_run_options(eval);
  auto* eval_ckpt = eval->add_option("--checkpoint", checkpoint, "Score a fixed model");
  eval->add_flag("--finetuned", "Score <out>/finetuned/*.ckpt (default)")
      ->excludes(eval_ckpt);
  auto* baselines = app.add_subcommand("baselines", "Glob, PPAT and ML comparison");
  add_run_options(baselines);

  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference gradient checks");
  std::size_t gc_seeds = 20;
  std::string gc_filter;
  gradcheck->add_option("--seeds", gc_seeds, "Random seeds per check");
  gradcheck->add_option("--filter", gc_filter, "Substring filter on check names");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kUserError;
  }

  try {
    set_thread_count(threads);
    if (synth->parsed()) {
      SynthConfig spec;
      if (!spec_path.empty()) {
        std::ifstream in(spec_path);
        spec = nlohmann::json::parse(in).get<SynthConfig>();
      } else if (preset != "default") {
        const std::size_t n = synth_patients.value_or(preset == "train" ? 40 : 10);
        spec = preset == "train" ? train_cohort(n, synth_seed.value_or(1))
                                 : test_cohort(n, synth_seed.value_or(1));
      }
      if (synth_patients) spec.patients = *synth_patients;
      if (synth_seed) spec.seed = *synth_seed;
      cmd_synth(spec, synth_out, std::cerr);
      return kOk;
    }
    if (gradcheck->parsed()) {
      return cmd_gradcheck(gc_seeds, gc_filter, std::cout) ? kOk : kNumericalError;
    }

    RunConfig config;
    if (!config_path.empty()) config = load_run_config(config_path);
    if (seed) config.meta.seed = *seed;
    if (!data_dir.empty()) config.data_dir = data_dir;
    if (!out_dir.empty()) config.out_dir = out_dir;
    if (!cache_dir.empty()) config.cache_dir = cache_dir;
    config.finalize();

    std::optional<fs::path> ckpt;
    if (!checkpoint.empty()) ckpt = checkpoint;
    if (preprocess->parsed()) {
      write_resolved(config, "preprocess");
      cmd_preprocess(config, std::cerr);
    } else if (train->parsed()) {
      cmd_train(config, std::cerr);
    } else if (finetune->parsed()) {
      cmd_finetune(config, ckpt, std::cerr);
    } else if (eval->parsed()) {
      cmd_eval(config, ckpt, std::cerr);
    } else if (baselines->parsed()) {
      cmd_baselines(config, std::cerr);
    }
    return kOk;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return kNumericalError;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kUserError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUserError;
  }
}

int run_cli(const std::vector<std::string>& args) {
  std::vector<const char*> argv{"metagnn"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return run_cli(static_cast<int>(argv.size()), argv.data());
}

}  // namespace metagnn::cli
