// src/config.cpp

// Copyright 2026  The spkv Authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#include "spkv/config.hpp"

#include "spkv/corpus_io.hpp"
#include "spkv/error.hpp"

#include <charconv>
#include <functional>
#include <sstream>

namespace spkv::cli {

namespace {

struct BadValue {
  std::string what;
};

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= v.size()) {
    const auto comma = v.find(',', start);
    const std::string item = trim(std::string_view(v).substr(start, comma == std::string::npos ? std::string::npos
                                                                                               : comma - start));
    if (!item.empty()) out.push_back(item);
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

long long to_integer(const std::string& v) {
  long long x = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (ec != std::errc() || p != v.data() + v.size()) throw BadValue{"expected an integer, got '" + v + "'"};
  return x;
}

int to_int(const std::string& v, long long lo, long long hi = 1LL << 30) {
  const long long x = to_integer(v);
  if (x < lo || x > hi)
    throw BadValue{"value " + v + " out of range [" + std::to_string(lo) + ", " + std::to_string(hi) + "]"};
  return static_cast<int>(x);
}

double to_double(const std::string& v) {
  try {
    return io::parse_real(v, "value");
  } catch (const Error&) {
    throw BadValue{"expected a number, got '" + v + "'"};
  }
}

double positive(const std::string& v) {
  const double x = to_double(v);
  if (!(x > 0.0)) throw BadValue{"value " + v + " must be positive"};
  return x;
}

double nonnegative(const std::string& v) {
  const double x = to_double(v);
  if (!(x >= 0.0)) throw BadValue{"value " + v + " must be >= 0"};
  return x;
}

double unit_interval(const std::string& v, bool open_low) {
  const double x = to_double(v);
  if (!(x <= 1.0) || !(open_low ? x > 0.0 : x >= 0.0))
    throw BadValue{"value " + v + (open_low ? " must lie in (0, 1]" : " must lie in [0, 1]")};
  return x;
}

bool to_bool(const std::string& v) {
  if (v == "true" || v == "yes" || v == "1") return true;
  if (v == "false" || v == "no" || v == "0") return false;
  throw BadValue{"expected true or false, got '" + v + "'"};
}

std::string from_bool(bool b) { return b ? "true" : "false"; }

template <typename E>
E to_enum(const std::string& v, std::initializer_list<std::pair<const char*, E>> options) {
  std::string names;
  for (const auto& [name, e] : options) {
    if (v == name) return e;
    names += names.empty() ? name : std::string("|") + name;
  }
  throw BadValue{"expected one of " + names + ", got '" + v + "'"};
}

template <typename E>
std::string from_enum(E e, std::initializer_list<std::pair<const char*, E>> options) {
  for (const auto& [name, x] : options)
    if (x == e) return name;
  return "?";
}

const std::initializer_list<std::pair<const char*, CalibrationMode>> kCalibration = {
    {"auto", CalibrationMode::kAuto},
    {"duration", CalibrationMode::kDuration},
    {"affine", CalibrationMode::kAffine},
    {"none", CalibrationMode::kNone}};
const std::initializer_list<std::pair<const char*, FusionMode>> kFusion = {{"learned", FusionMode::kLearned},
                                                                          {"equal", FusionMode::kEqual}};
const std::initializer_list<std::pair<const char*, JointChoice>> kJoint = {
    {"none", JointChoice::kNone}, {"apl", JointChoice::kApl}, {"tcl", JointChoice::kTcl}, {"ocl", JointChoice::kOcl}};
const std::initializer_list<std::pair<const char*, CohortSource>> kCohort = {{"speakers", CohortSource::kSpeakers},
                                                                            {"pseudo", CohortSource::kPseudo}};
const std::initializer_list<std::pair<const char*, nn::MarginType>> kMargin = {
    {"aam", nn::MarginType::kAdditiveAngle}, {"am", nn::MarginType::kAdditiveCosine}};

std::string join_reals(const std::vector<double>& v) {
  std::string s;
  for (double x : v) s += (s.empty() ? "" : ",") + io::format_real(x);
  return s;
}

std::string join_paths(const std::vector<std::filesystem::path>& v) {
  std::string s;
  for (const auto& p : v) s += (s.empty() ? "" : ",") + p.string();
  return s;
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& v) {
  if (v.empty()) return {};
  const std::filesystem::path p(v);
  return p.is_absolute() || base.empty() ? p : base / p;
}

struct Key {
  const char* section;  // "" for global keys
  const char* name;
  const char* doc;
  std::function<std::string(const PipelineConfig&)> get;
  std::function<void(PipelineConfig&, const std::string&, const std::filesystem::path&)> set;
};

using P = std::filesystem::path;

const std::vector<Key>& keys() {
  static const std::vector<Key> table = {
      {"", "seed", "global RNG seed",
       [](const PipelineConfig& c) { return std::to_string(c.seed); },
       [](PipelineConfig& c, const std::string& v, const P&) {
         const long long x = to_integer(v);
         if (x < 0) throw BadValue{"seed must be >= 0"};
         c.seed = static_cast<std::uint64_t>(x);
       }},
      {"", "jobs", "worker threads; results do not depend on it",
       [](const PipelineConfig& c) { return std::to_string(c.jobs); },
       [](PipelineConfig& c, const std::string& v, const P&) { c.jobs = to_int(v, 1, 1024); }},
      {"", "pipeline", "track1-score|track3-adapt",
       [](const PipelineConfig& c) { return std::string(to_string(c.pipeline)); },
       [](PipelineConfig& c, const std::string& v, const P&) {
         try {
           c.pipeline = parse_pipeline_kind(v);
         } catch (const ConfigError& e) {
           throw BadValue{e.what()};
         }
       }},

      {"features", "speed-ratios", "speed perturbation ratios, comma separated",
       [](const PipelineConfig& c) { return join_reals(c.features.speed_ratios); },
       [](PipelineConfig& c, const std::string& v, const P&) {
         std::vector<double> r;
         for (const auto& s : split_list(v)) r.push_back(positive(s));
         if (r.empty()) throw BadValue{"at least one ratio is required"};
         c.features.speed_ratios = r;
       }},
      {"features", "noise-probability", "probability of online noise augmentation",
       [](const PipelineConfig& c) { return io::format_real(c.features.noise_probability); },
       [](PipelineConfig& c, const std::string& v, const P&) { c.features.noise_probability = unit_interval(v, false); }},
      {"features", "noise-types", "babble,noise,music,reverb subset",
       [](const PipelineConfig& c) {
         std::string s;
         for (auto t : c.features.noise_types) s += (s.empty() ? "" : ",") + std::string(feat::to_string(t));
         return s;
       },
       [](PipelineConfig& c, const std::string& v, const P&) {
         std::vector<feat::NoiseType> t;
         try {
           for (const auto& s : split_list(v)) t.push_back(feat::parse_noise_type(s));
         } catch (const Error& e) {
           throw BadValue{e.what()};
         }
         c.features.noise_types = t;
       }},
      {"features", "segment-seconds", "training crop length",
       [](const PipelineConfig& c) { return io::format_real(c.features.segment_seconds); },
       [](PipelineConfig& c, const std::string& v, const P&) { c.features.segment_seconds = positive(v); }},
      {"features", "cmn-window", "sliding mean-normalization window in frames",
       [](const PipelineConfig& c) { return std::to_string(c.features.cmn_window); },
       [](PipelineConfig& c, const std::string& v, const P&) { c.features.cmn_window = to_int(v, 1); }},
      {"features", "num-mel-bins", "filterbank channels",
       [](const PipelineConfig& c) { return std::to_string(c.features.fbank.num_mel_bins); },
       [](PipelineConfig& c, const std::string& v, const P&) { c.features.fbank.num_mel_bins = to_int(v, 1, 512); }},
      {"features", "sample-rate", "audio sample rate in Hz",
       [](const PipelineConfig& c) { return std::to_string(c.features.fbank.sample_rate); },
       [](PipelineConfig& c, const std::string& v, const P&) { c.features.fbank.sample_rate = to_int(v, 1000, 192000); }},

      {"loss", "margin-type", "aam|am",
       [](const PipelineConfig& c) { return from_enum(c.loss.margin_type, kMargin); },
       [](PipelineConfig& c, const std::string& v, const P&) { c.loss.margin_type = to_enum(v, kMargin); }},
      {"loss", "scale", "logit scale s",
       [](const PipelineConfig& c) { return io::format_real(c.loss.scale); },
       [](PipelineConfig& c, const std::string& v, const P&) { c.loss.scale = positive(v); }},
      {"loss", "margin", "margin m",
       [](const PipelineConfig& c) { return io::format_real(c.loss.margin); },
       [](PipelineConfig& c, const std::string& v, const P&) { c.loss.margin = nonnegative(v); }},
      {"loss", "subcenters", "subcenters per class K",
       [](const PipelineConfig& c) { return std::to_string(c.loss.subcenters); },
       [](PipelineConfig& c, const std::string& v, const P&) { c.loss.subcenters = to_int(v, 1, 64); }},
      {"loss", "intertopk-penalty", "penalty added to the top-k non-target cosines",
       [](const PipelineConfig& c) { return io::format_real(c.loss.intertopk_penalty); },
       [](PipelineConfig& c, const std::string& v, const P&) { c.loss.intertopk_penalty = nonnegative(v); }},
      {"loss", "intertopk-k", "penalized classes, 0 disables",
       [](const PipelineConfig& c) { return std::to_string(c.loss.intertopk_k); },
       [](PipelineConfig& c, const std::string& v, const P&) { c.loss.intertopk_k = to_int(v, 0); }},

      {"scoring", "cohort-top-n", "as-norm top-n per side",
       [](const PipelineConfig& c) { return std::to_string(c.scoring.cohort_top_n); },
       [](PipelineConfig& c, const std::string& v, const P&) { c.scoring.cohort_top_n = to_int(v, 1); }},
      {"scoring", "calibration", "auto|duration|affine|none; auto uses durations when a manifest is given",
       [](const PipelineConfig& c) { return from_enum(c.scoring.calibration, kCalibration); },
       [](PipelineConfig& c, const std::string& v, const P&) { c.scoring.calibration = to_enum(v, kCalibration); }},
      {"scoring", "fusion", "learned|equal; learned needs dev trials",
       [](const PipelineConfig& c) { return from_enum(c.scoring.fusion, kFusion); },
       [](PipelineConfig& c, const std::string& v, const P&) { c.scoring.fusion = to_enum(v, kFusion); }},
      {"scoring", "p-target", "minDCF target prior",
       [](const PipelineConfig& c) { return io::format_real(c.scoring.dcf.p_target); },
       [](PipelineConfig& c, const std::string& v, const P&) {
         const double p = to_double(v);
         if (!(p > 0.0 && p < 1.0)) throw BadValue{"value " + v + " must lie in (0, 1)"};
         c.scoring.dcf.p_target = p;
       }},
      {"scoring", "c-miss", "minDCF miss cost",
       [](const PipelineConfig& c) { return io::format_real(c.scoring.dcf.c_miss); },
       [](PipelineConfig& c, const std::string& v, const P&) { c.scoring.dcf.c_miss = positive(v); }},
      {"scoring", "c-fa", "minDCF false-alarm cost",
       [](const PipelineConfig& c) { return io::format_real(c.scoring.dcf.c_fa); },
       [](PipelineConfig& c, const std::string& v, const P&) { c.scoring.dcf.c_fa = positive(v); }},

      {"adaptation", "enabled", "statistic adaptation with target-domain means",
       [](const PipelineConfig& c) { return from_bool(c.adaptation.enabled); },
       [](PipelineConfig& c, const std::string& v, const P&) { c.adaptation.enabled = to_bool(v); }},
      {"adaptation", "kmeans", "cluster the adapted target set into pseudo speakers",
       [](const PipelineConfig& c) { return from_bool(c.adaptation.kmeans); },
       [](PipelineConfig& c, const std::string& v, const P&) { c.adaptation.kmeans = to_bool(v); }},
      {"adaptation", "clusters", "k-means clusters, required with kmeans=true",
       [](const PipelineConfig& c) { return std::to_string(c.adaptation.clusters); },
       [](PipelineConfig& c, const std::string& v, const P&) { c.adaptation.clusters = to_int(v, 0); }},
      {"adaptation", "kmeans-max-iter", "k-means iteration cap",
       [](const PipelineConfig& c) { return std::to_string(c.adaptation.kmeans_max_iter); },
       [](PipelineConfig& c, const std::string& v, const P&) { c.adaptation.kmeans_max_iter = to_int(v, 1); }},
      {"adaptation", "joint", "none|apl|tcl|ocl joint training after clustering",
       [](const PipelineConfig& c) { return from_enum(c.adaptation.joint, kJoint); },
       [](PipelineConfig& c, const std::string& v, const P&) { c.adaptation.joint = to_enum(v, kJoint); }},
      {"adaptation", "cohort", "speakers|pseudo: as-norm cohort from the cohort file or from k-means clusters",
       [](const PipelineConfig& c) { return from_enum(c.adaptation.cohort, kCohort); },
       [](PipelineConfig& c, const std::string& v, const P&) { c.adaptation.cohort = to_enum(v, kCohort); }},

      {"dlglc", "enabled", "loss-gated label correction during tcl/ocl training",
       [](const PipelineConfig& c) { return from_bool(c.dlglc.enabled); },
       [](PipelineConfig& c, const std::string& v, const P&) { c.dlglc.enabled = to_bool(v); }},
      {"dlglc", "confidence", "minimum corrected-label probability rho",
       [](const PipelineConfig& c) { return io::format_real(c.dlglc.correction.confidence); },
       [](PipelineConfig& c, const std::string& v, const P&) { c.dlglc.correction.confidence = unit_interval(v, true); }},
      {"dlglc", "temperature", "softmax temperature T",
       [](const PipelineConfig& c) { return io::format_real(c.dlglc.correction.temperature); },
       [](PipelineConfig& c, const std::string& v, const P&) { c.dlglc.correction.temperature = positive(v); }},
      {"dlglc", "ema-decay", "per-sample loss smoothing alpha",
       [](const PipelineConfig& c) { return io::format_real(c.dlglc.correction.ema_decay); },
       [](PipelineConfig& c, const std::string& v, const P&) {
         const double a = to_double(v);
         if (!(a >= 0.0 && a < 1.0)) throw BadValue{"value " + v + " must lie in [0, 1)"};
         c.dlglc.correction.ema_decay = a;
       }},
      {"dlglc", "warmup-epochs", "epochs before the first gate fit",
       [](const PipelineConfig& c) { return std::to_string(c.dlglc.warmup_epochs); },
       [](PipelineConfig& c, const std::string& v, const P&) { c.dlglc.warmup_epochs = to_int(v, 0); }},

      {"train", "lr-initial", "learning rate of the first epoch",
       [](const PipelineConfig& c) { return io::format_real(c.train.train.lr_initial); },
       [](PipelineConfig& c, const std::string& v, const P&) { c.train.train.lr_initial = positive(v); }},
      {"train", "lr-final", "learning rate of the last epoch",
       [](const PipelineConfig& c) { return io::format_real(c.train.train.lr_final); },
       [](PipelineConfig& c, const std::string& v, const P&) { c.train.train.lr_final = positive(v); }},
      {"train", "weight-decay", "L2 weight decay",
       [](const PipelineConfig& c) { return io::format_real(c.train.train.weight_decay); },
       [](PipelineConfig& c, const std::string& v, const P&) { c.train.train.weight_decay = nonnegative(v); }},
      {"train", "epochs", "training epochs",
       [](const PipelineConfig& c) { return std::to_string(c.train.train.epochs); },
       [](PipelineConfig& c, const std::string& v, const P&) { c.train.train.epochs = to_int(v, 1); }},
      {"train", "batch-size", "samples per domain and batch",
       [](const PipelineConfig& c) { return std::to_string(c.train.train.batch_size); },
       [](PipelineConfig& c, const std::string& v, const P&) { c.train.train.batch_size = to_int(v, 1); }},
      {"train", "segment-seconds", "training segment length",
       [](const PipelineConfig& c) { return io::format_real(c.train.train.segment_seconds); },
       [](PipelineConfig& c, const std::string& v, const P&) { c.train.train.segment_seconds = positive(v); }},
      {"train", "segment-noise", "isotropic segment-noise sd when no noise archive is given",
       [](const PipelineConfig& c) { return io::format_real(c.train.segment_noise); },
       [](PipelineConfig& c, const std::string& v, const P&) { c.train.segment_noise = nonnegative(v); }},
      {"train", "apl-w", "initial prototypical-loss scale",
       [](const PipelineConfig& c) { return io::format_real(c.train.apl_w); },
       [](PipelineConfig& c, const std::string& v, const P&) { c.train.apl_w = positive(v); }},
      {"train", "apl-b", "initial prototypical-loss bias",
       [](const PipelineConfig& c) { return io::format_real(c.train.apl_b); },
       [](PipelineConfig& c, const std::string& v, const P&) { c.train.apl_b = to_double(v); }},

      {"paths", "embeddings", "embedding file per system, comma separated",
       [](const PipelineConfig& c) { return join_paths(c.paths.embeddings); },
       [](PipelineConfig& c, const std::string& v, const P& base) {
         c.paths.embeddings.clear();
         for (const auto& s : split_list(v)) c.paths.embeddings.push_back(resolve(base, s));
       }},
      {"paths", "trials", "evaluation trials",
       [](const PipelineConfig& c) { return c.paths.trials.string(); },
       [](PipelineConfig& c, const std::string& v, const P& base) { c.paths.trials = resolve(base, v); }},
      {"paths", "dev-trials", "labeled trials for calibration and fusion weights",
       [](const PipelineConfig& c) { return c.paths.dev_trials.string(); },
       [](PipelineConfig& c, const std::string& v, const P& base) { c.paths.dev_trials = resolve(base, v); }},
      {"paths", "cohort", "utt2spk of the as-norm cohort",
       [](const PipelineConfig& c) { return c.paths.cohort.string(); },
       [](PipelineConfig& c, const std::string& v, const P& base) { c.paths.cohort = resolve(base, v); }},
      {"paths", "manifest", "utterance manifest with durations",
       [](const PipelineConfig& c) { return c.paths.manifest.string(); },
       [](PipelineConfig& c, const std::string& v, const P& base) { c.paths.manifest = resolve(base, v); }},
      {"paths", "target", "unlabeled target-domain utterance ids",
       [](const PipelineConfig& c) { return c.paths.target.string(); },
       [](PipelineConfig& c, const std::string& v, const P& base) { c.paths.target = resolve(base, v); }},
      {"paths", "checkpoint", "pre-trained extractor for joint training",
       [](const PipelineConfig& c) { return c.paths.checkpoint.string(); },
       [](PipelineConfig& c, const std::string& v, const P& base) { c.paths.checkpoint = resolve(base, v); }},
      {"paths", "features", "extractor inputs of every utterance",
       [](const PipelineConfig& c) { return c.paths.features.string(); },
       [](PipelineConfig& c, const std::string& v, const P& base) { c.paths.features = resolve(base, v); }},
      {"paths", "noise", "segment-noise factors (source, target)",
       [](const PipelineConfig& c) { return c.paths.noise.string(); },
       [](PipelineConfig& c, const std::string& v, const P& base) { c.paths.noise = resolve(base, v); }},
  };
  return table;
}

const Key* find_key(const std::string& section, const std::string& name) {
  for (const auto& k : keys())
    if (section == k.section && name == k.name) return &k;
  return nullptr;
}

bool known_section(const std::string& s) {
  for (const auto& k : keys())
    if (s == k.section) return true;
  return false;
}

}  // namespace

std::string_view to_string(PipelineKind k) {
  return k == PipelineKind::kTrack1Score ? "track1-score" : "track3-adapt";
}

PipelineKind parse_pipeline_kind(std::string_view s) {
  if (s == "track1-score") return PipelineKind::kTrack1Score;
  if (s == "track3-adapt") return PipelineKind::kTrack3Adapt;
  throw ConfigError("unknown pipeline '" + std::string(s) + "' (track1-score|track3-adapt)");
}

void PipelineConfig::validate() const {
  features.validate();
  loss.validate();
  train.train.validate();
  dlglc.correction.validate();
  if (adaptation.kmeans && adaptation.clusters < 2)
    throw ConfigError("[adaptation] clusters: must be >= 2 when kmeans=true");
  if (adaptation.cohort == CohortSource::kPseudo && !adaptation.kmeans)
    throw ConfigError("[adaptation] cohort: pseudo needs kmeans=true");
  if (adaptation.joint != JointChoice::kNone && !adaptation.kmeans)
    throw ConfigError("[adaptation] joint: joint training needs kmeans=true");
  if (adaptation.joint == JointChoice::kApl && dlglc.enabled)
    throw ConfigError("[dlglc] enabled: label correction needs joint=tcl or joint=ocl");
  if (scoring.calibration == CalibrationMode::kDuration && paths.manifest.empty())
    throw ConfigError("[scoring] calibration: duration needs [paths] manifest");
}

PipelineConfig parse_config(std::string_view text, const std::string& source, const std::filesystem::path& base_dir) {
  PipelineConfig cfg;
  std::string section;
  std::istringstream in{std::string(text)};
  std::string raw;
  int line_no = 0;
  auto fail = [&](const std::string& what) { throw ConfigError(source + ":" + std::to_string(line_no) + ": " + what); };
  while (std::getline(in, raw)) {
    ++line_no;
    std::string line = raw.substr(0, raw.find('#'));
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      const auto close = line.find(']');
      if (close == std::string::npos) fail("unterminated section header");
      section = trim(std::string_view(line).substr(1, close - 1));
      if (section == "global") section.clear();  // reopens the top-level keys
      if (!section.empty() && !known_section(section)) fail("unknown section [" + section + "]");
      line = trim(std::string_view(line).substr(close + 1));
      if (line.empty()) continue;
    }
    // One or more key=value pairs separated by blanks; `key = value` and
    // `key=` (empty value) are accepted too.
    std::vector<std::string> tokens;
    {
      std::istringstream words(line);
      for (std::string w; words >> w;) tokens.push_back(w);
    }
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      std::string key = tokens[i], value;
      auto eq = key.find('=');
      if (eq == std::string::npos) {
        if (i + 1 >= tokens.size() || tokens[i + 1].front() != '=') fail("expected key=value, got '" + key + "'");
        key += tokens[++i];
        eq = key.find('=');
      }
      value = key.substr(eq + 1);
      key = key.substr(0, eq);
      if (key.empty()) fail("missing key before '='");
      if (value.empty() && i + 1 < tokens.size() && tokens[i + 1].find('=') == std::string::npos) value = tokens[++i];
      const std::string where = (section.empty() ? std::string() : "[" + section + "] ") + key;
      const Key* k = find_key(section, key);
      if (!k) fail("unknown key " + where);
      try {
        k->set(cfg, value, base_dir);
      } catch (const BadValue& e) {
        fail(where + ": " + e.what);
      }
    }
  }
  try {
    cfg.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(source + ": " + e.what());
  }
  return cfg;
}

PipelineConfig load_config(const std::filesystem::path& path) {
  std::string text;
  try {
    text = io::read_text_file(path);
  } catch (const DataError& e) {
    throw ConfigError(e.what());
  }
  return parse_config(text, path.string(), path.parent_path());
}

std::string dump_config(const PipelineConfig& cfg, bool with_jobs) {
  std::string out;
  std::string section;
  for (const auto& k : keys()) {
    if (!with_jobs && std::string_view(k.name) == "jobs") continue;
    if (section != k.section) {
      section = k.section;
      out += "\n[" + section + "]\n";
    }
    out += "# " + std::string(k.doc) + "\n" + k.name + " = " + k.get(cfg) + "\n";
  }
  return out;
}

std::string dump_defaults() { return dump_config(PipelineConfig{}); }

train::AdaptConfig adapt_config(const PipelineConfig& cfg) {
  train::AdaptConfig a;
  a.train = cfg.train.train;
  a.train.seed = cfg.seed;
  a.source_loss = cfg.loss;
  a.target_loss = cfg.loss;
  switch (cfg.adaptation.joint) {
    case JointChoice::kTcl: a.mode = nn::JointMode::kTcl; break;
    case JointChoice::kOcl: a.mode = nn::JointMode::kOcl; break;
    default: a.mode = nn::JointMode::kApl; break;
  }
  a.dlglc = cfg.dlglc.enabled;
  a.correction = cfg.dlglc.correction;
  a.warmup_epochs = cfg.dlglc.warmup_epochs;
  a.apl_w = cfg.train.apl_w;
  a.apl_b = cfg.train.apl_b;
  return a;
}

}  // namespace spkv::cli
