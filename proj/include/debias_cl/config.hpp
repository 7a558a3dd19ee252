#pragma once

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "debias_cl/cl_engine.hpp"
#include "debias_cl/synth_data.hpp"

namespace debias_cl {

// Sectioned key=value text. '#' and ';' start comments; blank lines are
// ignored; keys outside any section are rejected.
struct IniEntry {
  std::string value;
  int line = 0;
};

using IniDocument = std::map<std::string, std::map<std::string, IniEntry>>;

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace detail

inline IniDocument parse_ini(std::istream& in, const std::string& source = "config") {
  IniDocument doc;
  std::string section;
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const auto hash = raw.find_first_of("#;");
    const std::string text = detail::trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (text.empty()) continue;
    const std::string where = source + ":" + std::to_string(line);
    if (text.front() == '[') {
      if (text.back() != ']' || text.size() < 3) throw ConfigError(where + ": malformed section header '" + text + "'");
      section = detail::trim(text.substr(1, text.size() - 2));
      doc[section];
      continue;
    }
    const auto eq = text.find('=');
    if (eq == std::string::npos) throw ConfigError(where + ": expected key = value, got '" + text + "'");
    const std::string key = detail::trim(text.substr(0, eq));
    if (key.empty()) throw ConfigError(where + ": empty key");
    if (section.empty()) throw ConfigError(where + ": key '" + key + "' appears before any [section]");
    auto& slot = doc[section];
    if (slot.count(key)) throw ConfigError(where + ": duplicate key '" + section + "." + key + "'");
    slot[key] = IniEntry{detail::trim(text.substr(eq + 1)), line};
  }
  return doc;
}

inline IniDocument parse_ini_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  return parse_ini(in, path.string());
}

// Named experiment variants plus the no-continual-learning reference.
enum class Experiment {
  Custom,
  WithoutCL,        // contrastive only, no bias weights, no distillation
  Exp1NonCL,        // all sessions in one step
  Exp2Baseline,     // contrastive + l2
  Exp3DclL2,        // DCL (response accuracy) + l2
  Exp4DclBaAfm,     // DCL (brain activation) + AFM
  Exp5Rehearsal,    // DCL (response accuracy) + 10% rehearsal, no distillation
  Exp6Ours,         // DCL (response accuracy) + AFM
};

inline const std::vector<std::pair<std::string, Experiment>>& experiment_names() {
  static const std::vector<std::pair<std::string, Experiment>> names = {
      {"custom", Experiment::Custom},          {"wo_cl", Experiment::WithoutCL},
      {"exp1_noncl", Experiment::Exp1NonCL},   {"exp2_baseline", Experiment::Exp2Baseline},
      {"exp3_dcl_l2", Experiment::Exp3DclL2},  {"exp4_dcl_ba_afm", Experiment::Exp4DclBaAfm},
      {"exp5_rehearsal", Experiment::Exp5Rehearsal}, {"exp6_ours", Experiment::Exp6Ours},
  };
  return names;
}

inline std::string to_string(Experiment e) {
  for (const auto& [name, value] : experiment_names())
    if (value == e) return name;
  return "custom";
}

enum class Preset { Desk, Paper };

inline std::string to_string(Preset p) { return p == Preset::Desk ? "desk" : "paper"; }

// Everything one run needs, fully resolved.
struct RunSpec {
  std::string name = "run";
  Preset preset = Preset::Desk;
  Experiment experiment = Experiment::Exp6Ours;
  std::uint64_t seed = 1;
  std::optional<std::filesystem::path> dataset_path;
  GenConfig data;
  EncoderConfig encoder;
  Protocol protocol;
  TrainConfig train;
  RetrievalConfig retrieval;
};

inline void apply_preset(RunSpec& spec, Preset preset) {
  spec.preset = preset;
  spec.train.epochs = preset == Preset::Desk ? 15 : 50;
  spec.retrieval.n_way = preset == Preset::Desk ? 50 : 200;
  spec.retrieval.trials = 30;
}

inline void apply_experiment(RunSpec& spec, Experiment e) {
  spec.experiment = e;
  LossConfig& loss = spec.train.loss;
  spec.train.rehearsal_fraction = 0.0;
  switch (e) {
    case Experiment::Custom: return;
    case Experiment::WithoutCL:
    case Experiment::Exp1NonCL:
      loss.bias = BiasModel::None;
      loss.distill = DistillKind::None;
      break;
    case Experiment::Exp2Baseline:
      loss.bias = BiasModel::None;
      loss.distill = DistillKind::L2;
      break;
    case Experiment::Exp3DclL2:
      loss.bias = BiasModel::ResponseAccuracy;
      loss.distill = DistillKind::L2;
      break;
    case Experiment::Exp4DclBaAfm:
      loss.bias = BiasModel::BrainActivation;
      loss.distill = DistillKind::AFM;
      break;
    case Experiment::Exp5Rehearsal:
      loss.bias = BiasModel::ResponseAccuracy;
      loss.distill = DistillKind::AFM;  // disabled by the rehearsal path
      spec.train.rehearsal_fraction = 0.1;
      break;
    case Experiment::Exp6Ours:
      loss.bias = BiasModel::ResponseAccuracy;
      loss.distill = DistillKind::AFM;
      break;
  }
}

// Per-run seeds follow the run seed unless a config pins them.
inline void apply_seed(RunSpec& spec, std::uint64_t seed) {
  spec.seed = seed;
  spec.train.run_seed = seed;
  spec.encoder.init_seed = seed;
  spec.retrieval.seed = seed;
}

inline RunSpec default_run_spec(Preset preset = Preset::Desk) {
  RunSpec spec;
  apply_preset(spec, preset);
  apply_experiment(spec, Experiment::Exp6Ours);
  apply_seed(spec, 1);
  return spec;
}

namespace detail {

class IniBinder {
 public:
  explicit IniBinder(const IniDocument& doc) : doc_(doc) {}

  const IniEntry* find(const std::string& section, const std::string& key) {
    known_[section].push_back(key);
    auto s = doc_.find(section);
    if (s == doc_.end()) return nullptr;
    auto k = s->second.find(key);
    return k == s->second.end() ? nullptr : &k->second;
  }

  template <class T>
  void bind(const std::string& section, const std::string& key, T& target) {
    const IniEntry* e = find(section, key);
    if (!e) return;
    target = parse<T>(section, key, *e);
  }

  // Every key in the document must have been bound.
  void reject_unknown() const {
    for (const auto& [section, keys] : doc_) {
      auto known = known_.find(section);
      if (known == known_.end()) {
        const int line = keys.empty() ? 0 : keys.begin()->second.line;
        throw ConfigError("line " + std::to_string(line) + ": unknown section [" + section + "]");
      }
      for (const auto& [key, entry] : keys) {
        if (std::find(known->second.begin(), known->second.end(), key) == known->second.end()) {
          throw ConfigError("line " + std::to_string(entry.line) + ": unknown key '" + section + "." + key + "'");
        }
      }
    }
  }

  template <class T>
  static T parse(const std::string& section, const std::string& key, const IniEntry& e) {
    const std::string& v = e.value;
    auto fail = [&](const char* expected) {
      return ConfigError("line " + std::to_string(e.line) + ": key '" + section + "." + key + "' expects " + expected +
                         ", got '" + v + "'");
    };
    if constexpr (std::is_same_v<T, bool>) {
      if (v == "true" || v == "1" || v == "yes") return true;
      if (v == "false" || v == "0" || v == "no") return false;
      throw fail("a boolean");
    } else if constexpr (std::is_same_v<T, std::string>) {
      return v;
    } else if constexpr (std::is_integral_v<T>) {
      T out{};
      auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
      if (ec != std::errc() || ptr != v.data() + v.size()) throw fail("an unsigned integer");
      return out;
    } else if constexpr (std::is_floating_point_v<T>) {
      try {
        std::size_t used = 0;
        const double out = std::stod(v, &used);
        if (used != v.size()) throw fail("a number");
        return out;
      } catch (const std::logic_error&) {
        throw fail("a number");
      }
    } else {
      static_assert(sizeof(T) == 0, "unsupported config type");
    }
  }

 private:
  const IniDocument& doc_;
  std::map<std::string, std::vector<std::string>> known_;
};

template <class E>
E parse_enum(const std::string& section, const std::string& key, const IniEntry& e,
             std::initializer_list<std::pair<const char*, E>> options) {
  std::string allowed;
  for (const auto& [name, value] : options) {
    if (e.value == name) return value;
    allowed += (allowed.empty() ? "" : "|") + std::string(name);
  }
  throw ConfigError("line " + std::to_string(e.line) + ": key '" + section + "." + key + "' expects one of " + allowed +
                    ", got '" + e.value + "'");
}

}  // namespace detail

// Layers a config document over defaults: preset first, then experiment,
// then the run seed, then individual keys.
inline RunSpec resolve_run_spec(const IniDocument& doc, std::optional<Preset> preset_override = std::nullopt,
                                std::optional<std::uint64_t> seed_override = std::nullopt) {
  detail::IniBinder b(doc);
  RunSpec spec;

  Preset preset = Preset::Desk;
  if (const IniEntry* e = b.find("run", "preset"))
    preset = detail::parse_enum<Preset>("run", "preset", *e, {{"desk", Preset::Desk}, {"paper", Preset::Paper}});
  if (preset_override) preset = *preset_override;
  apply_preset(spec, preset);

  Experiment experiment = Experiment::Exp6Ours;
  if (const IniEntry* e = b.find("run", "experiment")) {
    bool found = false;
    for (const auto& [name, value] : experiment_names()) {
      if (e->value == name) {
        experiment = value;
        found = true;
      }
    }
    if (!found) {
      throw ConfigError("line " + std::to_string(e->line) + ": key 'run.experiment' has unknown value '" + e->value + "'");
    }
  }
  apply_experiment(spec, experiment);

  std::uint64_t seed = 1;
  b.bind("run", "seed", seed);
  if (seed_override) seed = *seed_override;
  apply_seed(spec, seed);
  b.bind("run", "name", spec.name);
  if (const IniEntry* e = b.find("data", "path")) spec.dataset_path = e->value;

  GenConfig& g = spec.data;
  b.bind("data", "sessions", g.sessions);
  b.bind("data", "samples_per_session", g.samples_per_session);
  b.bind("data", "fmri_dim", g.fmri_dim);
  b.bind("data", "embed_dim", g.embed_dim);
  b.bind("data", "r_max", g.r_max);
  b.bind("data", "r_min", g.r_min);
  b.bind("data", "gain_floor", g.gain_floor);
  b.bind("data", "noise_base", g.noise_base);
  b.bind("data", "noise_growth", g.noise_growth);
  b.bind("data", "baseline_shift", g.baseline_shift);
  b.bind("data", "test_fraction", g.test_fraction);
  b.bind("data", "seed", g.seed);

  EncoderConfig& ec = spec.encoder;
  b.bind("encoder", "hidden_dim", ec.hidden_dim);
  b.bind("encoder", "tap_count", ec.tap_count);
  if (const IniEntry* e = b.find("encoder", "activation"))
    ec.activation = detail::parse_enum<Activation>("encoder", "activation", *e,
                                                   {{"tanh", Activation::Tanh}, {"relu", Activation::Relu}});
  b.bind("encoder", "init_seed", ec.init_seed);

  spec.protocol.n_sessions = g.sessions;
  if (experiment == Experiment::Exp1NonCL) {
    spec.protocol.n_init = g.sessions;
    spec.protocol.n_step = 1;
  }
  b.bind("protocol", "n_init", spec.protocol.n_init);
  b.bind("protocol", "n_step", spec.protocol.n_step);

  TrainConfig& t = spec.train;
  b.bind("train", "lr", t.lr);
  b.bind("train", "epochs", t.epochs);
  b.bind("train", "batch_size", t.batch_size);
  b.bind("train", "rehearsal_fraction", t.rehearsal_fraction);
  b.bind("train", "run_seed", t.run_seed);
  b.bind("train", "beta1", t.adamw.beta1);
  b.bind("train", "beta2", t.adamw.beta2);
  b.bind("train", "adam_epsilon", t.adamw.epsilon);
  b.bind("train", "weight_decay", t.adamw.weight_decay);

  LossConfig& l = t.loss;
  b.bind("loss", "temperature", l.temperature);
  b.bind("loss", "lambda_cl", l.lambda_cl);
  b.bind("loss", "symmetric", l.symmetric_contrastive);
  if (const IniEntry* e = b.find("loss", "distill"))
    l.distill = detail::parse_enum<DistillKind>(
        "loss", "distill", *e, {{"none", DistillKind::None}, {"l2", DistillKind::L2}, {"afm", DistillKind::AFM}});
  if (const IniEntry* e = b.find("loss", "bias"))
    l.bias = detail::parse_enum<BiasModel>("loss", "bias", *e,
                                           {{"none", BiasModel::None},
                                            {"response_accuracy", BiasModel::ResponseAccuracy},
                                            {"brain_activation", BiasModel::BrainActivation}});

  b.bind("retrieval", "n_way", spec.retrieval.n_way);
  b.bind("retrieval", "trials", spec.retrieval.trials);
  b.bind("retrieval", "seed", spec.retrieval.seed);

  b.reject_unknown();

  ec.input_dim = g.fmri_dim;
  ec.output_dim = g.embed_dim;
  g.validate();
  ec.validate();
  spec.protocol.validate();
  t.validate();
  return spec;
}

// Writes a resolved RunSpec back out as a config that reproduces the run.
inline std::string echo_run_spec(const RunSpec& s) {
  std::ostringstream os;
  os.precision(17);
  os << "[run]\nname = " << s.name << "\npreset = " << to_string(s.preset) << "\nexperiment = " << to_string(s.experiment)
     << "\nseed = " << s.seed << "\n\n";
  os << "[data]\n";
  if (s.dataset_path) os << "path = " << s.dataset_path->string() << "\n";
  const GenConfig& g = s.data;
  os << "sessions = " << g.sessions << "\nsamples_per_session = " << g.samples_per_session << "\nfmri_dim = " << g.fmri_dim
     << "\nembed_dim = " << g.embed_dim << "\nr_max = " << g.r_max << "\nr_min = " << g.r_min
     << "\ngain_floor = " << g.gain_floor << "\nnoise_base = " << g.noise_base << "\nnoise_growth = " << g.noise_growth
     << "\nbaseline_shift = " << g.baseline_shift << "\ntest_fraction = " << g.test_fraction << "\nseed = " << g.seed
     << "\n\n";
  const EncoderConfig& e = s.encoder;
  os << "[encoder]\nhidden_dim = " << e.hidden_dim << "\ntap_count = " << e.tap_count
     << "\nactivation = " << to_string(e.activation) << "\ninit_seed = " << e.init_seed << "\n\n";
  os << "[protocol]\nn_init = " << s.protocol.n_init << "\nn_step = " << s.protocol.n_step << "\n\n";
  const TrainConfig& t = s.train;
  os << "[train]\nlr = " << t.lr << "\nepochs = " << t.epochs << "\nbatch_size = " << t.batch_size
     << "\nrehearsal_fraction = " << t.rehearsal_fraction << "\nrun_seed = " << t.run_seed << "\nbeta1 = " << t.adamw.beta1
     << "\nbeta2 = " << t.adamw.beta2 << "\nadam_epsilon = " << t.adamw.epsilon
     << "\nweight_decay = " << t.adamw.weight_decay << "\n\n";
  os << "[loss]\ntemperature = " << t.loss.temperature << "\nlambda_cl = " << t.loss.lambda_cl
     << "\nsymmetric = " << (t.loss.symmetric_contrastive ? "true" : "false") << "\ndistill = " << to_string(t.loss.distill)
     << "\nbias = " << to_string(t.loss.bias) << "\n\n";
  os << "[retrieval]\nn_way = " << s.retrieval.n_way << "\ntrials = " << s.retrieval.trials
     << "\nseed = " << s.retrieval.seed << "\n";
  return os.str();
}

}  // namespace debias_cl
