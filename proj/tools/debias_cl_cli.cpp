// debias_cl command-line tool.
//
// Exit codes: 0 success, 1 other failure, 2 configuration error,
// 3 I/O or file-format error, 4 numeric failure.

#include <charconv>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "debias_cl/debias_cl.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace debias_cl;

namespace {

constexpr int kExitOther = 1;
constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;
constexpr int kExitNumeric = 4;

struct GlobalOptions {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::string preset;
};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os || !(os << text)) throw IoError("cannot write " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

std::size_t threads_from_env() {
  const char* v = std::getenv("DEBIAS_CL_THREADS");
  if (!v || !*v) return 0;
  std::size_t out = 0;
  auto [ptr, err] = std::from_chars(v, v + std::strlen(v), out);
  if (err != std::errc() || *ptr != '\0') throw ConfigError(std::string("DEBIAS_CL_THREADS: not an integer: ") + v);
  return out;
}

RunSpec resolve(const GlobalOptions& g) {
  IniDocument doc;
  if (!g.config.empty()) doc = parse_ini_file(g.config);
  std::optional<Preset> preset;
  if (g.preset == "desk") preset = Preset::Desk;
  else if (g.preset == "paper") preset = Preset::Paper;
  else if (!g.preset.empty()) throw ConfigError("--preset must be desk or paper, got '" + g.preset + "'");
  RunSpec spec = resolve_run_spec(doc, preset, g.seed);
  spec.retrieval.threads = threads_from_env();
  return spec;
}

SessionRange parse_range(const std::string& text) {
  const auto dash = text.find('-');
  try {
    if (dash == std::string::npos) throw std::invalid_argument(text);
    const SessionRange r{static_cast<std::uint32_t>(std::stoul(text.substr(0, dash))),
                         static_cast<std::uint32_t>(std::stoul(text.substr(dash + 1)))};
    if (r.first == 0 || r.last < r.first) throw std::invalid_argument(text);
    return r;
  } catch (const std::logic_error&) {
    throw ConfigError("range must look like FIRST-LAST with 1 <= FIRST <= LAST, got '" + text + "'");
  }
}

Dataset load_or_generate(const RunSpec& spec) {
  if (!spec.dataset_path) return generate(spec.data);
  return read_dataset(*spec.dataset_path, DatasetExpectation{spec.data.fmri_dim, spec.data.embed_dim, spec.data.sessions});
}

void print_report(const std::vector<ReportRow>& rows) {
  for (const ReportRow& r : rows) {
    std::cout << "  step " << r.step << "  sessions " << r.range.label() << "  " << to_string(r.direction)
              << "  top1 " << fixed6(r.top1) << "  (" << r.n_queries << " queries, " << r.n_way << "-way, "
              << r.trials << " trials)\n";
  }
}

// ---- gen-data -------------------------------------------------------------

int cmd_gen_data(const GlobalOptions& g) {
  const RunSpec spec = resolve(g);
  const fs::path out = g.out.empty() ? fs::path(".") : fs::path(g.out);
  ensure_dir(out);
  const Dataset ds = generate(spec.data);
  write_dataset(ds, out / "dataset.vbcl");
  write_text(out / "dataset.json", dataset_summary_json(ds).dump(2) + "\n");

  std::cout << "wrote " << (out / "dataset.vbcl").string() << ": " << ds.header.sessions << " sessions x "
            << ds.header.samples_per_session << " samples, n=" << ds.header.fmri_dim << ", d=" << ds.header.embed_dim
            << "\n  session  response_acc  consistency  activation\n";
  for (const SessionStatRow& s : session_stats(ds)) {
    char line[96];
    std::snprintf(line, sizeof line, "  %7u  %12.4f  %11.4f  %10.4f\n", s.session, s.response_accuracy, s.consistency,
                  s.activation_fraction);
    std::cout << line;
  }
  return 0;
}

// ---- train ----------------------------------------------------------------

int cmd_train(const GlobalOptions& g) {
  const RunSpec spec = resolve(g);
  const fs::path out = g.out.empty() ? fs::path("runs") / spec.name : fs::path(g.out);
  ensure_dir(out);

  fs::path dataset_path;
  Dataset ds;
  if (spec.dataset_path) {
    ds = load_or_generate(spec);
    dataset_path = fs::absolute(*spec.dataset_path);
  } else {
    ds = generate(spec.data);
    dataset_path = fs::absolute(out / "dataset.vbcl");
    write_dataset(ds, dataset_path);
  }
  write_text(out / "config.ini", echo_run_spec(spec));

  std::cout << "training " << spec.name << " (" << to_string(spec.experiment) << ", " << to_string(spec.preset)
            << " preset, protocol " << spec.protocol.label() << ")\n";
  const ProtocolResult result = run_protocol(ds, spec.protocol, spec.encoder, spec.train, spec.retrieval);

  json checkpoints = json::array();
  for (const StepOutcome& s : result.steps) {
    const fs::path ck = out / ("step_" + std::to_string(s.plan.index) + ".brnc");
    write_checkpoint(s.exit.params(), static_cast<std::uint32_t>(s.plan.index), ck);
    checkpoints.push_back(ck.filename().string());
  }
  const std::vector<ReportRow> rows = result.report_rows();
  write_text(out / "report.csv", report_csv(rows));
  write_text(out / "report.json", report_json(rows).dump(2) + "\n");
  write_text(out / "losses.csv", losses_csv(result));

  const json manifest = {
      {"name", spec.name},
      {"experiment", to_string(spec.experiment)},
      {"preset", to_string(spec.preset)},
      {"protocol", spec.protocol.label()},
      {"seeds",
       {{"run", spec.seed},
        {"train", spec.train.run_seed},
        {"init", spec.encoder.init_seed},
        {"retrieval", spec.retrieval.seed},
        {"data", spec.data.seed}}},
      {"config", "config.ini"},
      {"config_echo", echo_run_spec(spec)},
      {"dataset", dataset_path.string()},
      {"checkpoints", checkpoints},
      {"report", "report.csv"},
      {"report_json", "report.json"},
      {"losses", "losses.csv"},
      {"status", "complete"},
  };
  write_text(out / "manifest.json", manifest.dump(2) + "\n");
  print_report(rows);
  std::cout << "run directory: " << out.string() << "\n";
  return 0;
}

// ---- eval -----------------------------------------------------------------

int cmd_eval(const GlobalOptions& g, const std::string& checkpoint, const std::string& dataset,
             const std::string& range_text, std::optional<std::size_t> n_way, std::optional<std::size_t> trials) {
  RunSpec spec = resolve(g);
  if (n_way) spec.retrieval.n_way = *n_way;
  if (trials) spec.retrieval.trials = *trials;
  const Checkpoint ck = read_checkpoint(checkpoint);
  const EncoderConfig& ec = ck.params.config();
  const Dataset ds = read_dataset(dataset, DatasetExpectation{static_cast<std::uint32_t>(ec.input_dim),
                                                              static_cast<std::uint32_t>(ec.output_dim), std::nullopt});
  const SessionRange range = range_text.empty() ? SessionRange{1, ds.header.sessions} : parse_range(range_text);
  if (range.last > ds.header.sessions) {
    throw ConfigError("range " + range.label() + " exceeds the dataset's " + std::to_string(ds.header.sessions) +
                      " sessions");
  }
  const std::vector<ReportRow> rows = evaluate_step(ck.params, ds, range, ck.step, spec.retrieval);
  for (const ReportRow& r : rows) std::cout << to_string(r.direction) << " top1 " << fixed6(r.top1) << "\n";
  if (!g.out.empty()) {
    ensure_dir(g.out);
    write_text(fs::path(g.out) / "eval.csv", report_csv(rows));
  }
  return 0;
}

// ---- analyze --------------------------------------------------------------

void emit_decline(const fs::path& dir, const std::string& stem, const DeclineReport& report, const std::string& title) {
  write_text(dir / (stem + ".csv"), decline_csv(report));
  write_text(dir / (stem + ".json"), decline_json(report).dump(2) + "\n");
  write_text(dir / (stem + ".svg"), decline_svg(report, title));
  for (const MetricTrend& t : report.trends) {
    std::cout << "  " << t.metric << ": slope " << fixed6(t.slope) << ", spearman "
              << (t.spearman_undefined ? std::string("undefined (constant series)") : fixed6(t.spearman)) << "\n";
  }
}

int cmd_analyze(const GlobalOptions& g, const std::string& input, std::uint32_t window, bool skip_windows) {
  const RunSpec spec = resolve(g);
  fs::path dataset_path = input;
  fs::path default_out = fs::path(input).parent_path() / "analysis";
  if (fs::is_directory(input)) {
    const fs::path manifest_path = fs::path(input) / "manifest.json";
    const json manifest = json::parse(read_text(manifest_path), nullptr, false);
    if (manifest.is_discarded() || !manifest.contains("dataset")) {
      throw FormatError(manifest_path.string() + ": not a run manifest");
    }
    dataset_path = manifest["dataset"].get<std::string>();
    default_out = fs::path(input) / "analysis";
  }
  const fs::path out = g.out.empty() ? default_out : fs::path(g.out);
  ensure_dir(out);
  const Dataset ds = read_dataset(dataset_path);

  std::cout << "behavioral curves (" << ds.header.sessions << " sessions)\n";
  emit_decline(out, "behavioral", behavioral_curves(ds.sessions), "Behavioral decay across sessions");

  if (!skip_windows) {
    EncoderConfig ec = spec.encoder;
    ec.input_dim = ds.header.fmri_dim;
    ec.output_dim = ds.header.embed_dim;
    std::cout << "per-window models (window " << window << ")\n";
    emit_decline(out, "windows", per_window_models(ds, window, ec, spec.train, spec.retrieval),
                 "Retrieval accuracy of per-window models");
  }
  std::cout << "analysis written to " << out.string() << "\n";
  return 0;
}

// ---- grad-check -----------------------------------------------------------

int cmd_grad_check(std::size_t instances) {
  constexpr double kTolerance = 1e-5;
  double worst = 0.0;
  for (const GradSuiteCase& c : run_grad_suite(instances)) {
    std::cout << "  " << c.name << ": " << c.instances << " instances, " << c.coordinates_checked
              << " coordinates, max rel. err " << std::scientific << c.max_relative_error << std::defaultfloat << "\n";
    worst = std::max(worst, c.max_relative_error);
  }
  std::cout << "max relative error " << std::scientific << worst << std::defaultfloat << "\n";
  if (!(worst < kTolerance)) {
    std::cerr << "gradient check failed: " << worst << " >= " << kTolerance << "\n";
    return kExitNumeric;
  }
  return 0;
}

// ---- report ---------------------------------------------------------------

int cmd_report(const GlobalOptions& g, const std::vector<std::string>& run_dirs, const std::string& direction_text) {
  Direction direction = Direction::BrainToImage;
  if (direction_text == "image_to_brain") direction = Direction::ImageToBrain;
  else if (direction_text != "brain_to_image") throw ConfigError("--direction must be brain_to_image or image_to_brain");

  std::vector<MethodRun> runs;
  for (const std::string& dir : run_dirs) {
    const fs::path manifest_path = fs::path(dir) / "manifest.json";
    if (!fs::exists(manifest_path)) throw IoError(dir + ": incomplete run (no manifest.json)");
    const json manifest = json::parse(read_text(manifest_path), nullptr, false);
    if (manifest.is_discarded() || manifest.value("status", "") != "complete") {
      throw FormatError(dir + ": incomplete run (manifest status is not complete)");
    }
    runs.push_back(MethodRun{manifest.value("name", fs::path(dir).filename().string()),
                             parse_report_csv(read_text(fs::path(dir) / manifest.value("report", "report.csv")))});
  }
  const std::string table = comparison_csv(runs, direction);
  std::cout << table;
  if (!g.out.empty()) {
    ensure_dir(g.out);
    write_text(fs::path(g.out) / "comparison.csv", table);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Session-incremental brain-to-image retrieval with de-biased contrastive learning"};
  app.require_subcommand(1);
  app.fallthrough();

  GlobalOptions g;
  app.add_option("--config", g.config, "INI run configuration");
  app.add_option("--out", g.out, "output directory");
  app.add_option("--seed", g.seed, "run seed (training, initialization, retrieval)");
  app.add_option("--preset", g.preset, "desk or paper");

  auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");

  auto* train = app.add_subcommand("train", "run the session-incremental protocol");

  std::string checkpoint, dataset, range;
  std::optional<std::size_t> n_way, trials;
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
  eval->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  eval->add_option("--dataset", dataset, "dataset file")->required();
  eval->add_option("--range", range, "session range FIRST-LAST (default: all sessions)");
  eval->add_option("--n-way", n_way, "candidates per query");
  eval->add_option("--trials", trials, "evaluation trials");

  std::string analyze_input;
  std::uint32_t window = 5;
  bool skip_windows = false;
  auto* analyze = app.add_subcommand("analyze", "decline analyses of a dataset or run directory");
  analyze->add_option("input", analyze_input, "dataset file or run directory")->required();
  analyze->add_option("--window", window, "sessions per window model");
  analyze->add_flag("--skip-windows", skip_windows, "only the behavioral curves");

  std::size_t instances = 20;
  auto* grad = app.add_subcommand("grad-check", "finite-difference gradient suite");
  grad->add_option("--instances", instances, "random instances per case");

  std::vector<std::string> run_dirs;
  std::string direction = "brain_to_image";
  auto* report = app.add_subcommand("report", "merge runs into a method x step comparison table");
  report->add_option("runs", run_dirs, "run directories")->required();
  report->add_option("--direction", direction, "brain_to_image or image_to_brain");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*gen) return cmd_gen_data(g);
    if (*train) return cmd_train(g);
    if (*eval) return cmd_eval(g, checkpoint, dataset, range, n_way, trials);
    if (*analyze) return cmd_analyze(g, analyze_input, window, skip_windows);
    if (*grad) return cmd_grad_check(instances);
    if (*report) return cmd_report(g, run_dirs, direction);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return kExitIo;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const DegenerateVectorError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitOther;
  }
  return kExitOther;
}
