// src/pipeline.cpp

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

#include "spkv/pipeline.hpp"

#include "spkv/benchmark.hpp"
#include "spkv/error.hpp"

#include <algorithm>
#include <cstdio>
#include <functional>
#include <optional>
#include <set>
#include <sstream>

namespace spkv::cli {

namespace fs = std::filesystem;

std::string format_plan(const std::vector<Stage>& plan) {
  std::string out;
  for (std::size_t i = 0; i < plan.size(); ++i) {
    out += std::to_string(i + 1) + ". " + plan[i].name;
    if (!plan[i].detail.empty()) out += " (" + plan[i].detail + ")";
    out += '\n';
    for (const auto& o : plan[i].outputs) out += "     -> " + o + '\n';
  }
  return out;
}

std::string file_hash(const fs::path& path) {
  const std::string bytes = io::read_text_file(path);
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(fnv1a(bytes.data(), bytes.size())));
  return hex;
}

std::vector<std::string> read_name_list(const fs::path& path) {
  std::istringstream in(io::read_text_file(path));
  std::vector<std::string> names;
  std::set<std::string> seen;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream fields(line);
    std::string name, extra;
    if (!(fields >> name)) continue;
    if (fields >> extra) throw ParseError(path.string(), line_no, "expected one utterance id");
    if (!seen.insert(name).second) throw ParseError(path.string(), line_no, "duplicate id " + name);
    names.push_back(name);
  }
  return names;
}

void write_name_list(const std::vector<std::string>& names, const fs::path& path) {
  std::string out;
  for (const auto& n : names) out += n + '\n';
  io::write_text_file(path, out);
}

io::EmbeddingSet subset(const io::EmbeddingSet& emb, const std::vector<std::string>& names) {
  io::EmbeddingSet out(emb.dim());
  for (const auto& n : names) out.add(n, Eigen::VectorXf(emb.vector(emb.index_of(n))));
  return out;
}

std::map<std::string, std::string> read_utt2spk(const fs::path& path) {
  std::map<std::string, std::string> out;
  for (auto& [utt, spk] : io::read_pairs(path))
    if (!out.emplace(utt, spk).second) throw DataError(path.string() + ": duplicate utterance " + utt);
  return out;
}

std::unordered_map<std::string, double> durations_of(const io::Manifest& m) {
  std::unordered_map<std::string, double> out;
  for (const auto& e : m.entries()) out[e.utt] = e.duration;
  return out;
}

scoring::Cohort speaker_cohort(const io::EmbeddingSet& emb, const std::map<std::string, std::string>& speaker_of) {
  std::vector<std::string> names;
  for (const auto& [utt, spk] : speaker_of) names.push_back(utt);
  return scoring::build_cohort(subset(emb, names), speaker_of);
}

JointData load_joint_data(const PipelineConfig& cfg, const io::EmbeddingSet& features, const io::Manifest& manifest,
                          const std::vector<std::string>& target, const adapt::PseudoLabels* pseudo) {
  const int d = features.dim();
  MatrixXd source_noise = cfg.train.segment_noise * MatrixXd::Identity(d, d);
  MatrixXd target_noise = source_noise;
  if (!cfg.paths.noise.empty()) {
    for (const auto& [name, m] : io::read_matrix_archive(cfg.paths.noise)) {
      if (name == "source") source_noise = m;
      if (name == "target") target_noise = m;
    }
  }
  auto gather = [&](const std::vector<std::string>& names, const MatrixXd& noise) {
    train::Dataset ds;
    ds.names = names;
    ds.features.resize(static_cast<Eigen::Index>(names.size()), d);
    for (std::size_t i = 0; i < names.size(); ++i) {
      ds.features.row(static_cast<Eigen::Index>(i)) = features.vector(features.index_of(names[i])).cast<double>().transpose();
      const auto* e = manifest.find(names[i]);
      if (!e) throw DataError("utterance " + names[i] + " is missing from the manifest");
      ds.durations.push_back(e->duration);
    }
    ds.noise_factor = noise;
    return ds;
  };

  JointData out;
  std::vector<std::string> source_names, domain_names;
  std::map<std::string, int> speaker_index;
  for (const auto& e : manifest.entries()) {
    if (!features.find(e.utt)) continue;
    if (e.domain == io::Domain::kSource && e.speaker) {
      source_names.push_back(e.utt);
      speaker_index.emplace(*e.speaker, 0);
    } else if (e.domain == io::Domain::kTarget) {
      domain_names.push_back(e.utt);
    }
  }
  if (source_names.empty()) throw DataError("no labeled source utterances with features");
  int next = 0;
  for (auto& [spk, idx] : speaker_index) idx = next++;
  out.source = gather(source_names, source_noise);
  out.source.classes = next;
  for (const auto& n : source_names) out.source.labels.push_back(speaker_index.at(*manifest.find(n)->speaker));

  out.target = gather(target, target_noise);
  if (pseudo) {
    std::unordered_map<std::string, int> label;
    for (std::size_t i = 0; i < pseudo->size(); ++i) label[pseudo->names[i]] = pseudo->assignment[i];
    for (const auto& n : target) {
      auto it = label.find(n);
      if (it == label.end()) throw DataError("no pseudo label for target utterance " + n);
      out.target.labels.push_back(it->second);
    }
    out.target.classes = pseudo->k;
  }
  out.all = gather(domain_names, target_noise);
  return out;
}

// ---------------------------------------------------------------- pipeline

namespace {

// Rethrows `e` with the stage name in front, keeping the exit-code class.
[[noreturn]] void rethrow_in_stage(const std::string& stage) {
  try {
    throw;
  } catch (const ConfigError& e) {
    throw ConfigError("stage " + stage + ": " + e.what());
  } catch (const NumericalError& e) {
    throw NumericalError("stage " + stage + ": " + e.what());
  } catch (const DataError& e) {
    throw DataError("stage " + stage + ": " + e.what());
  } catch (const std::exception& e) {
    throw DataError("stage " + stage + ": " + e.what());
  }
}

class Runner {
 public:
  Runner(const fs::path& out, bool dry) : out_(out), dry_(dry) {}

  bool dry() const { return dry_; }
  fs::path path(const std::string& name) const { return out_ / name; }
  const std::vector<Stage>& plan() const { return plan_; }
  const std::vector<std::string>& artifacts() const { return artifacts_; }

  void stage(const std::string& name, const std::string& detail, std::vector<std::string> outputs,
             const std::function<void()>& fn) {
    for (const auto& o : outputs) artifacts_.push_back(o);
    plan_.push_back({name, detail, std::move(outputs)});
    if (dry_) return;
    try {
      fn();
    } catch (...) {
      rethrow_in_stage(name);
    }
  }

 private:
  fs::path out_;
  bool dry_;
  std::vector<Stage> plan_;
  std::vector<std::string> artifacts_;
};

struct Inputs {
  std::vector<io::EmbeddingSet> systems;
  io::TrialList trials;
  std::optional<io::TrialList> dev_trials;
  std::optional<std::map<std::string, std::string>> cohort;
  std::optional<io::Manifest> manifest;
  std::vector<std::string> target;
  std::vector<std::pair<std::string, fs::path>> files;  // for the run manifest
};

void require_file(const std::string& key, const fs::path& p) {
  if (!fs::is_regular_file(p)) throw DataError("missing input [paths] " + key + ": " + p.string());
}

Inputs load_inputs(const PipelineConfig& cfg, bool joint) {
  Inputs in;
  const auto& p = cfg.paths;
  try {
    if (p.embeddings.empty()) throw ConfigError("[paths] embeddings: at least one system is required");
    if (p.trials.empty()) throw ConfigError("[paths] trials: required");
    for (std::size_t i = 0; i < p.embeddings.size(); ++i) {
      require_file("embeddings", p.embeddings[i]);
      in.files.emplace_back("embeddings." + std::to_string(i), p.embeddings[i]);
      in.systems.push_back(io::read_embedding_set(p.embeddings[i]));
    }
    require_file("trials", p.trials);
    in.files.emplace_back("trials", p.trials);
    in.trials = io::read_trial_list(p.trials);
    if (!p.dev_trials.empty()) {
      require_file("dev-trials", p.dev_trials);
      in.files.emplace_back("dev-trials", p.dev_trials);
      in.dev_trials = io::read_trial_list(p.dev_trials);
      if (!in.dev_trials->labeled()) throw DataError("dev trials must be labeled");
    }
    if (!p.cohort.empty()) {
      require_file("cohort", p.cohort);
      in.files.emplace_back("cohort", p.cohort);
      in.cohort = read_utt2spk(p.cohort);
    }
    if (!p.manifest.empty()) {
      require_file("manifest", p.manifest);
      in.files.emplace_back("manifest", p.manifest);
      in.manifest = io::read_manifest(p.manifest);
    }
    if (cfg.pipeline == PipelineKind::kTrack3Adapt && (cfg.adaptation.enabled || cfg.adaptation.kmeans)) {
      if (p.target.empty()) throw ConfigError("[paths] target: required for adaptation");
      require_file("target", p.target);
      in.files.emplace_back("target", p.target);
      in.target = read_name_list(p.target);
    }
    if (joint) {
      if (in.systems.size() != 1) throw ConfigError("[adaptation] joint: needs exactly one system");
      if (!in.manifest) throw ConfigError("[adaptation] joint: needs [paths] manifest");
      for (auto [key, path] : {std::pair{"checkpoint", p.checkpoint}, std::pair{"features", p.features}}) {
        if (path.empty()) throw ConfigError(std::string("[adaptation] joint: needs [paths] ") + key);
        require_file(key, path);
        in.files.emplace_back(key, path);
      }
      if (!p.noise.empty()) {
        require_file("noise", p.noise);
        in.files.emplace_back("noise", p.noise);
      }
    }
  } catch (...) {
    rethrow_in_stage("inputs");
  }
  return in;
}

struct SystemState {
  std::string tag;
  io::EmbeddingSet emb;
  std::optional<scoring::Cohort> cohort;
  io::ScoreSet eval, dev;
};

// score -> asnorm -> calibrate for one system.
void score_chain(Runner& r, const PipelineConfig& cfg, const Inputs& in, SystemState& s) {
  const std::string& t = s.tag;
  const bool has_dev = in.dev_trials.has_value();
  auto outs = [&](const std::string& stage, std::vector<std::string> extra = {}) {
    std::vector<std::string> o = std::move(extra);
    o.push_back(stage + "." + t + ".scores");
    if (has_dev) o.push_back(stage + "." + t + ".dev.scores");
    return o;
  };
  auto write_scores = [&](const std::string& stage) {
    io::write_score_file(s.eval, r.path(stage + "." + t + ".scores"));
    if (has_dev) io::write_score_file(s.dev, r.path(stage + "." + t + ".dev.scores"));
  };

  r.stage("score", t + ": cosine", outs("score"), [&] {
    s.eval = scoring::score_trials(s.emb, in.trials, cfg.jobs);
    if (has_dev) s.dev = scoring::score_trials(s.emb, *in.dev_trials, cfg.jobs);
    write_scores("score");
  });

  const bool pseudo = cfg.pipeline == PipelineKind::kTrack3Adapt && cfg.adaptation.cohort == CohortSource::kPseudo;
  if (pseudo || in.cohort) {
    r.stage("asnorm", t + ": top-n " + std::to_string(cfg.scoring.cohort_top_n) + (pseudo ? ", pseudo-speaker cohort" : ""),
            outs("asnorm", {"asnorm." + t + ".cohort.emb"}), [&] {
              if (!s.cohort) s.cohort = speaker_cohort(s.emb, *in.cohort);
              io::write_embedding_set(s.cohort->embeddings, r.path("asnorm." + t + ".cohort.emb"));
              s.eval = scoring::as_norm(s.eval, s.emb, *s.cohort, cfg.scoring.cohort_top_n, cfg.jobs);
              if (has_dev) s.dev = scoring::as_norm(s.dev, s.emb, *s.cohort, cfg.scoring.cohort_top_n, cfg.jobs);
              write_scores("asnorm");
            });
  }

  CalibrationMode mode = cfg.scoring.calibration;
  if (mode == CalibrationMode::kAuto) mode = in.manifest ? CalibrationMode::kDuration : CalibrationMode::kAffine;
  if (has_dev && mode != CalibrationMode::kNone) {
    const bool dur = mode == CalibrationMode::kDuration;
    r.stage("calibrate", t + (dur ? ": duration quality" : ": affine"), outs("calibrate", {"calibrate." + t + ".model"}),
            [&] {
              std::optional<MatrixXd> q_eval, q_dev;
              if (dur) {
                const auto dmap = durations_of(*in.manifest);
                q_eval = scoring::duration_quality(in.trials, dmap);
                q_dev = scoring::duration_quality(*in.dev_trials, dmap);
              }
              const auto model = scoring::train_calibration(s.dev, q_dev ? &*q_dev : nullptr);
              scoring::write_calibration(model, r.path("calibrate." + t + ".model"));
              s.eval = scoring::apply_calibration(model, s.eval, q_eval ? &*q_eval : nullptr);
              s.dev = scoring::apply_calibration(model, s.dev, q_dev ? &*q_dev : nullptr);
              write_scores("calibrate");
            });
  }
}

void finish_chain(Runner& r, const PipelineConfig& cfg, const Inputs& in, std::vector<SystemState>& systems) {
  std::optional<io::ScoreSet> fused;
  const bool has_dev = in.dev_trials.has_value();
  if (systems.size() > 1) {
    const bool learned = cfg.scoring.fusion == FusionMode::kLearned && has_dev;
    std::vector<std::string> outs = {"fuse.weights", "fuse.scores"};
    if (has_dev) outs.push_back("fuse.dev.scores");
    r.stage("fuse", std::to_string(systems.size()) + " systems, " + (learned ? "learned" : "equal") + " weights", outs,
            [&] {
              std::vector<io::ScoreSet> eval, dev;
              for (const auto& s : systems) {
                eval.push_back(s.eval);
                if (has_dev) dev.push_back(s.dev);
              }
              const std::vector<double> w =
                  learned ? scoring::learn_fusion_weights(dev) : std::vector<double>(systems.size(), 1.0);
              std::string text;
              for (std::size_t i = 0; i < w.size(); ++i) text += systems[i].tag + ' ' + io::format_real(w[i]) + '\n';
              io::write_text_file(r.path("fuse.weights"), text);
              fused = scoring::fuse_scores(eval, w);
              io::write_score_file(*fused, r.path("fuse.scores"));
              if (has_dev) io::write_score_file(scoring::fuse_scores(dev, w), r.path("fuse.dev.scores"));
            });
  }
  if (!in.trials.labeled()) return;
  r.stage("metrics", "EER and minDCF", {"metrics.txt", "metrics.kv"}, [&] {
    std::string line, kv;
    auto add = [&](const std::string& name, const io::ScoreSet& s) {
      const auto m = scoring::compute_metrics(s, cfg.scoring.dcf);
      line += "system=" + name + ' ' + scoring::format_metrics_line(m) + '\n';
      std::istringstream lines(scoring::format_metrics_keyvalue(m));
      for (std::string l; std::getline(lines, l);) kv += name + '.' + l + '\n';
    };
    for (const auto& s : systems) add(s.tag, s.eval);
    if (fused) add("fused", *fused);
    io::write_text_file(r.path("metrics.txt"), line);
    io::write_text_file(r.path("metrics.kv"), kv);
  });
}

// stats -> adapt [-> kmeans] for one system; returns the pseudo labels.
std::optional<adapt::PseudoLabels> adaptation_chain(Runner& r, const PipelineConfig& cfg, const Inputs& in,
                                                    SystemState& s) {
  const std::string& t = s.tag;
  if (cfg.adaptation.enabled) {
    r.stage("stats", t + ": target-domain mean of " + std::to_string(in.target.size()) + " utterances",
            {"stats." + t + ".txt"}, [&] {
              const auto stats = adapt::compute_domain_stats(subset(s.emb, in.target));
              adapt::write_domain_stats(stats, r.path("stats." + t + ".txt"));
              s.emb = adapt::apply_statistic_adaptation(s.emb, stats);
            });
    r.stage("adapt", t + ": subtract target mean", {"adapt." + t + ".emb"},
            [&] { io::write_embedding_set(s.emb, r.path("adapt." + t + ".emb")); });
  }
  std::optional<adapt::PseudoLabels> labels;
  if (cfg.adaptation.kmeans) {
    r.stage("kmeans", t + ": k=" + std::to_string(cfg.adaptation.clusters), {"kmeans." + t + ".labels"}, [&] {
      adapt::KMeansOptions km;
      km.k = cfg.adaptation.clusters;
      km.seed = cfg.seed;
      km.max_iter = cfg.adaptation.kmeans_max_iter;
      km.jobs = cfg.jobs;
      labels = adapt::spherical_kmeans(subset(s.emb, in.target), km);
      adapt::write_pseudo_labels(*labels, r.path("kmeans." + t + ".labels"));
    });
  }
  return labels;
}

}  // namespace

std::vector<Stage> run_pipeline(const PipelineConfig& cfg, const fs::path& out_dir, bool dry_run) {
  cfg.validate();
  const bool track3 = cfg.pipeline == PipelineKind::kTrack3Adapt;
  const bool joint = track3 && cfg.adaptation.joint != JointChoice::kNone;
  const Inputs in = load_inputs(cfg, joint);
  if (!dry_run) fs::create_directories(out_dir);
  Runner r(out_dir, dry_run);

  std::vector<SystemState> systems;
  for (std::size_t i = 0; i < in.systems.size(); ++i) systems.push_back({"sys" + std::to_string(i), in.systems[i], {}, {}, {}});

  if (track3) {
    std::vector<std::optional<adapt::PseudoLabels>> labels;
    for (auto& s : systems) labels.push_back(adaptation_chain(r, cfg, in, s));
    if (joint) {
      SystemState js{"joint", io::EmbeddingSet{}, {}, {}, {}};
      const std::string mode(cfg.adaptation.joint == JointChoice::kApl   ? "apl"
                             : cfg.adaptation.joint == JointChoice::kTcl ? "tcl"
                                                                         : "ocl");
      r.stage("joint", mode + (cfg.dlglc.enabled ? " + label correction" : "") + ", " +
                           std::to_string(cfg.train.train.epochs) + " epochs",
              {"joint.ckpt", "joint.log", "joint.emb"}, [&] {
                const auto features = io::read_embedding_set(cfg.paths.features);
                const bool labeled = cfg.adaptation.joint != JointChoice::kApl;
                const JointData data =
                    load_joint_data(cfg, features, *in.manifest, in.target, labeled ? &*labels[0] : nullptr);
                const train::Checkpoint ckpt = train::read_checkpoint(cfg.paths.checkpoint);
                if (!ckpt.head) throw DataError("checkpoint has no classifier head");
                train::TrainResult pre;
                pre.extractor = ckpt.extractor;
                pre.head = *ckpt.head;
                const auto result = train::adapt_joint(pre, data.source, data.target, adapt_config(cfg));
                train::write_checkpoint({result.extractor, result.head}, r.path("joint.ckpt"));
                std::string log;
                for (const auto& e : result.log) log += train::format_epoch_log(e) + '\n';
                io::write_text_file(r.path("joint.log"), log);
                js.emb = train::embed_dataset(result.extractor, data.all, cfg.seed);
                io::write_embedding_set(js.emb, r.path("joint.emb"));
              });
      labels = {adaptation_chain(r, cfg, in, js)};
      systems = {std::move(js)};
    }
    if (cfg.adaptation.cohort == CohortSource::kPseudo && !r.dry())
      for (std::size_t i = 0; i < systems.size(); ++i)
        systems[i].cohort = adapt::build_pseudo_cohort(subset(systems[i].emb, labels[i]->names), *labels[i]);
  }

  for (auto& s : systems) score_chain(r, cfg, in, s);
  finish_chain(r, cfg, in, systems);

  if (!dry_run) {
    const std::string config_text = dump_config(cfg, false);
    io::write_text_file(r.path("config.txt"), config_text);
    std::string m = "pipeline " + std::string(to_string(cfg.pipeline)) + "\nseed " + std::to_string(cfg.seed) + '\n';
    m += "config " + file_hash(r.path("config.txt")) + '\n';
    for (const auto& [key, path] : in.files) m += "input " + key + ' ' + path.string() + ' ' + file_hash(path) + '\n';
    for (const auto& a : r.artifacts()) m += "artifact " + a + ' ' + file_hash(r.path(a)) + '\n';
    io::write_text_file(r.path("manifest.txt"), m);
  }
  return r.plan();
}

// --------------------------------------------------------------- synthetic

void write_synthetic_inputs(const fs::path& dir, const SynthOptions& opts) {
  if (opts.systems < 1) throw ConfigError("synthetic data needs at least one system");
  fs::create_directories(dir);
  const train::DeskProtocol proto = train::DeskProtocol::defaults();
  const train::Benchmark bench = train::make_benchmark(proto.bench, opts.seed);
  const train::TrainResult pre = train::pretrain(proto, bench, opts.seed);
  train::write_checkpoint({pre.extractor, pre.head}, dir / "checkpoint.ckpt");

  io::EmbeddingSet features(proto.bench.input_dim);
  io::Manifest manifest;
  auto add = [&](const train::Dataset& d, const std::vector<int>* truth, const char* prefix, io::Domain domain) {
    for (std::size_t i = 0; i < d.size(); ++i) {
      features.add(d.names[i], VectorXd(d.features.row(static_cast<Eigen::Index>(i)).transpose()));
      io::ManifestEntry e;
      e.utt = d.names[i];
      if (truth) {
        char spk[32];
        std::snprintf(spk, sizeof spk, "%s%03d", prefix, (*truth)[i]);
        e.speaker = spk;
      }
      e.domain = domain;
      e.duration = d.durations[i];
      manifest.add(e);
    }
  };
  add(bench.source, &bench.source.labels, "s", io::Domain::kSource);
  add(bench.target, nullptr, "t", io::Domain::kTarget);
  add(bench.eval, &bench.eval_truth, "e", io::Domain::kTarget);
  add(bench.dev, &bench.dev_truth, "d", io::Domain::kTarget);
  io::write_embedding_set(features, dir / "features.emb");
  io::write_manifest(manifest, dir / "manifest.txt");
  io::write_matrix_archive({{"source", bench.source.noise_factor}, {"target", bench.target.noise_factor}},
                           dir / "noise.mat");
  write_name_list(bench.target.names, dir / "target.list");
  io::write_trial_list(bench.trials, dir / "trials.txt");
  io::write_trial_list(bench.dev_trials, dir / "dev-trials.txt");

  std::vector<std::pair<std::string, std::string>> cohort;
  for (std::size_t i = 0; i < bench.target.size(); ++i) {
    char spk[32];
    std::snprintf(spk, sizeof spk, "t%03d", bench.target_truth[i]);
    cohort.emplace_back(bench.target.names[i], spk);
  }
  io::write_pairs(cohort, dir / "cohort.utt2spk");

  // Every system embeds the target-domain utterances with its own noise draws.
  train::Dataset domain = bench.target;
  for (const train::Dataset* d : {&bench.eval, &bench.dev}) {
    domain.names.insert(domain.names.end(), d->names.begin(), d->names.end());
    domain.durations.insert(domain.durations.end(), d->durations.begin(), d->durations.end());
    MatrixXd stacked(domain.features.rows() + d->features.rows(), domain.features.cols());
    stacked << domain.features, d->features;
    domain.features = stacked;
  }
  std::string systems;
  for (int i = 0; i < opts.systems; ++i) {
    const std::string name = "sys" + std::to_string(i) + ".emb";
    io::write_embedding_set(train::embed_dataset(pre.extractor, domain, derive_seed(opts.seed, "system/" + std::to_string(i))),
                            dir / name);
    systems += (systems.empty() ? "" : ",") + name;
  }

  const auto& a = proto.adapt.train;
  std::string cfg = "seed = " + std::to_string(opts.seed) + "\npipeline = track1-score\n";
  cfg += "\n[scoring]\ncohort-top-n = " + std::to_string(proto.cohort_top_n) + "\n";
  cfg += "\n[adaptation]\nclusters = " + std::to_string(proto.bench.target_speakers) + "\n";
  cfg += "\n[train]\nepochs = " + std::to_string(a.epochs) + "\nlr-initial = " + io::format_real(a.lr_initial) +
         "\nlr-final = " + io::format_real(a.lr_final) + "\n";
  cfg += "\n[paths]\nembeddings = " + systems +
         "\ntrials = trials.txt\ndev-trials = dev-trials.txt\ncohort = cohort.utt2spk\nmanifest = manifest.txt\n"
         "target = target.list\ncheckpoint = checkpoint.ckpt\nfeatures = features.emb\nnoise = noise.mat\n";
  io::write_text_file(dir / "config.ini", cfg);
}

}  // namespace spkv::cli
