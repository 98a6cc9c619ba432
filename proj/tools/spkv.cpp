// tools/spkv.cpp

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

// spkv: command-line front end of the toolkit.

#include "spkv/adaptation.hpp"
#include "spkv/benchmark.hpp"
#include "spkv/config.hpp"
#include "spkv/corpus_io.hpp"
#include "spkv/dlglc.hpp"
#include "spkv/error.hpp"
#include "spkv/featpipe.hpp"
#include "spkv/pipeline.hpp"
#include "spkv/scoring.hpp"
#include "spkv/trainer.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <cstdlib>
#include <iostream>
#include <optional>
#include <sstream>

namespace fs = std::filesystem;
using namespace spkv;

namespace {

// Config from --config, else $SPKV_CONFIG, else defaults.
cli::PipelineConfig resolve_config(const std::string& path) {
  if (!path.empty()) return cli::load_config(path);
  if (const char* env = std::getenv(cli::kConfigEnv); env && *env) return cli::load_config(env);
  return cli::PipelineConfig{};
}

void write_or_print(const std::string& out, const std::string& text) {
  if (out.empty() || out == "-")
    std::cout << text;
  else
    io::write_text_file(out, text);
}

// ------------------------------------------------------------------- emb

void add_emb(CLI::App& app) {
  auto* emb = app.add_subcommand("emb", "Embedding archives")->require_subcommand(1);

  static std::string in, out;
  auto* pack = emb->add_subcommand("pack", "Text `name v1 ... vD` lines to the binary archive");
  pack->add_option("--in", in, "text input")->required();
  pack->add_option("--out", out, "archive output")->required();
  pack->callback([] {
    std::istringstream lines(io::read_text_file(in));
    std::optional<io::EmbeddingSet> set;
    std::string line;
    int line_no = 0;
    while (std::getline(lines, line)) {
      ++line_no;
      std::istringstream f(line);
      std::string name, tok;
      if (!(f >> name)) continue;
      std::vector<double> v;
      while (f >> tok) v.push_back(io::parse_real(tok, "embedding value"));
      if (v.empty()) throw ParseError(in, line_no, "no values for " + name);
      if (!set) set.emplace(static_cast<int>(v.size()));
      if (static_cast<int>(v.size()) != set->dim())
        throw ParseError(in, line_no, "expected " + std::to_string(set->dim()) + " values");
      set->add(name, Eigen::Map<const VectorXd>(v.data(), static_cast<Eigen::Index>(v.size())));
    }
    io::write_embedding_set(set ? *set : io::EmbeddingSet(0), out);
  });

  auto* unpack = emb->add_subcommand("unpack", "Binary archive to text lines");
  unpack->add_option("--in", in, "archive input")->required();
  unpack->add_option("--out", out, "text output, stdout when omitted");
  unpack->callback([] {
    const auto set = io::read_embedding_set(in);
    std::string text;
    for (std::size_t i = 0; i < set.size(); ++i) {
      text += set.name(i);
      for (int d = 0; d < set.dim(); ++d) text += ' ' + io::format_real(set.vector(i)[d]);
      text += '\n';
    }
    write_or_print(out, text);
  });
}

// ---------------------------------------------------------------- trials

void add_trials(CLI::App& app) {
  auto* trials = app.add_subcommand("trials", "Trial lists")->require_subcommand(1);
  static std::string path, emb;
  auto* validate = trials->add_subcommand("validate", "Parse a trial list and check its names");
  validate->add_option("--trials", path, "trial list")->required();
  validate->add_option("--embeddings", emb, "archive that must contain every name");
  validate->callback([] {
    const auto t = io::read_trial_list(path);
    if (!emb.empty()) {
      const auto set = io::read_embedding_set(emb);
      for (const auto& p : t.pairs()) {
        if (!set.find(p.enroll)) throw ParseError(path, p.line, "no embedding for " + p.enroll);
        if (!set.find(p.test)) throw ParseError(path, p.line, "no embedding for " + p.test);
      }
    }
    std::size_t targets = 0;
    if (t.labeled())
      for (int y : t.labels()) targets += static_cast<std::size_t>(y);
    std::cout << "pairs=" << t.size() << " labeled=" << (t.labeled() ? "true" : "false");
    if (t.labeled()) std::cout << " targets=" << targets << " nontargets=" << t.size() - targets;
    std::cout << '\n';
  });
}

// ------------------------------------------------------------------ feat

feat::Waveform synthetic_waveform(const std::string& utt, double seconds, int rate, std::uint64_t seed) {
  Rng rng(derive_seed(seed, utt));
  std::uniform_real_distribution<double> f0(90.0, 250.0);
  std::normal_distribution<double> noise(0.0, 0.05);
  const double pitch = f0(rng);
  feat::Waveform w;
  w.sample_rate = rate;
  w.samples.resize(static_cast<Eigen::Index>(std::max(1.0, std::round(seconds * rate))));
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    const double t = static_cast<double>(i) / rate;
    double s = 0.0;
    for (int h = 1; h <= 8; ++h) s += std::sin(2 * M_PI * pitch * h * t) / h;
    w.samples[i] = 0.3 * s * (0.6 + 0.4 * std::sin(2 * M_PI * 3.0 * t)) + noise(rng);
  }
  return w;
}

void add_feat(CLI::App& app) {
  auto* featc = app.add_subcommand("feat", "Feature extraction")->require_subcommand(1);
  static std::string config, manifest, out, audio;
  static std::uint64_t seed = 0;
  auto* augment = featc->add_subcommand("augment", "Offline augmentation plan and filterbank features");
  augment->add_option("--config", config, "key=value [features] settings")->required();
  augment->add_option("--manifest", manifest, "input manifest")->required();
  augment->add_option("--out", out, "output directory")->required();
  augment->add_option("--audio", audio, "MAT1 archive of waveforms (one column per utterance); synthesized when omitted");
  augment->add_option("--seed", seed, "RNG seed");
  augment->callback([] {
    std::string text = io::read_text_file(config);
    if (text.find('[') == std::string::npos) text = "[features]\n" + text;
    const auto cfg = cli::parse_config(text, config).features;
    const auto m = io::read_manifest(manifest);
    const auto plan = feat::offline_plan(m, cfg);
    std::map<std::string, feat::Waveform> waves;
    if (!audio.empty())
      for (auto& [name, mat] : io::read_matrix_archive(audio)) waves[name] = {mat.col(0), cfg.fbank.sample_rate};
    const auto bank = feat::NoiseBank::synthetic(seed, cfg.fbank.sample_rate);

    const std::size_t per_utt = cfg.speed_ratios.size() * (1 + cfg.noise_types.size());
    io::MatrixArchive feats;
    for (std::size_t j = 0; j < plan.size(); ++j) {
      const auto& base = m.entries()[j / per_utt];
      const double ratio = cfg.speed_ratios[(j % per_utt) / (1 + cfg.noise_types.size())];
      const std::size_t type = j % (1 + cfg.noise_types.size());
      feat::Waveform w;
      if (audio.empty()) {
        w = synthetic_waveform(base.utt, base.duration, cfg.fbank.sample_rate, seed);
      } else {
        auto it = waves.find(base.utt);
        if (it == waves.end()) throw DataError("no waveform for " + base.utt);
        w = it->second;
      }
      w = feat::speed_perturb(w, ratio);
      const auto& entry = plan.entries()[j];
      if (type > 0) {
        const auto kind = cfg.noise_types[type - 1];
        Rng rng(derive_seed(seed, entry.utt));
        const auto& assets = bank.assets.at(kind);
        const auto& asset = assets[std::uniform_int_distribution<std::size_t>(0, assets.size() - 1)(rng)];
        double snr = feat::kInfiniteSnrDb;
        if (auto it = cfg.snr.find(kind); it != cfg.snr.end())
          snr = std::uniform_real_distribution<double>(it->second.low_db, it->second.high_db)(rng);
        w = feat::apply_noise(w, kind, asset, snr, rng);
      }
      feats.emplace_back(entry.utt, feat::sliding_cmn(feat::fbank(w, cfg.fbank), cfg.cmn_window).frames);
    }
    fs::create_directories(out);
    io::write_manifest(plan, fs::path(out) / "plan.manifest");
    io::write_matrix_archive(feats, fs::path(out) / "feats.mat");
    std::cout << "utterances=" << m.size() << " entries=" << plan.size() << " speakers=" << plan.num_speakers() << '\n';
  });
}

// ----------------------------------------------------------------- score

void add_score(CLI::App& app) {
  auto* score = app.add_subcommand("score", "Scoring back-end")->require_subcommand(1);
  static std::string emb, trials, out, scores, cohort, train_scores, train_trials, manifest, model, model_out,
      weights_out;
  static std::vector<std::string> inputs, learn;
  static std::vector<double> weights;
  static int jobs = 1, top_n = 600;
  static scoring::DcfParams dcf;

  auto* cosine = score->add_subcommand("cosine", "Cosine scores of every trial");
  cosine->add_option("--embeddings", emb)->required();
  cosine->add_option("--trials", trials)->required();
  cosine->add_option("--out", out)->required();
  cosine->add_option("--jobs", jobs)->check(CLI::PositiveNumber);
  cosine->callback([] {
    io::write_score_file(scoring::score_trials(io::read_embedding_set(emb), io::read_trial_list(trials), jobs), out);
  });

  auto* asnorm = score->add_subcommand("asnorm", "Adaptive s-norm against a cohort archive");
  asnorm->add_option("--scores", scores)->required();
  asnorm->add_option("--embeddings", emb)->required();
  asnorm->add_option("--cohort", cohort, "cohort archive (adapt cohort)")->required();
  asnorm->add_option("--top-n", top_n)->check(CLI::PositiveNumber);
  asnorm->add_option("--out", out)->required();
  asnorm->add_option("--jobs", jobs)->check(CLI::PositiveNumber);
  asnorm->callback([] {
    const scoring::Cohort c{io::read_embedding_set(cohort)};
    io::write_score_file(scoring::as_norm(io::read_score_file(scores), io::read_embedding_set(emb), c, top_n, jobs), out);
  });

  auto* calibrate = score->add_subcommand("calibrate", "Logistic calibration, duration-aware with --manifest");
  calibrate->add_option("--scores", scores, "scores to calibrate")->required();
  calibrate->add_option("--train", train_scores, "training scores");
  calibrate->add_option("--train-trials", train_trials, "labels of the training scores");
  calibrate->add_option("--model", model, "apply an existing model instead of training");
  calibrate->add_option("--model-out", model_out, "write the trained model");
  calibrate->add_option("--manifest", manifest, "durations for the quality measures");
  calibrate->add_option("--out", out)->required();
  calibrate->callback([] {
    std::optional<std::unordered_map<std::string, double>> dur;
    if (!manifest.empty()) dur = cli::durations_of(io::read_manifest(manifest));
    scoring::CalibrationModel m;
    if (!model.empty()) {
      m = scoring::read_calibration(model);
    } else {
      if (train_scores.empty() || train_trials.empty())
        throw ConfigError("calibrate needs --model or --train with --train-trials");
      const auto train = io::attach_labels(io::read_score_file(train_scores), io::read_trial_list(train_trials));
      std::optional<MatrixXd> q;
      if (dur) q = scoring::duration_quality(train.trials, *dur);
      m = scoring::train_calibration(train, q ? &*q : nullptr);
    }
    if (!model_out.empty()) scoring::write_calibration(m, model_out);
    const auto raw = io::read_score_file(scores);
    std::optional<MatrixXd> q;
    if (dur) q = scoring::duration_quality(raw.trials, *dur);
    io::write_score_file(scoring::apply_calibration(m, raw, q ? &*q : nullptr), out);
  });

  auto* fuse = score->add_subcommand("fuse", "Weighted mean of several score files");
  fuse->add_option("--scores", inputs, "score files, same trials in the same order")->required();
  fuse->add_option("--weights", weights, "one nonnegative weight per file (default equal)");
  fuse->add_option("--learn", learn, "labeled validation score files to learn weights from");
  fuse->add_option("--learn-trials", train_trials, "labels of the validation scores");
  fuse->add_option("--weights-out", weights_out);
  fuse->add_option("--out", out)->required();
  fuse->callback([] {
    std::vector<io::ScoreSet> sets;
    for (const auto& f : inputs) sets.push_back(io::read_score_file(f));
    std::vector<double> w = weights;
    if (!learn.empty()) {
      if (!w.empty()) throw ConfigError("--weights and --learn are exclusive");
      if (train_trials.empty()) throw ConfigError("--learn needs --learn-trials");
      const auto labeled = io::read_trial_list(train_trials);
      std::vector<io::ScoreSet> dev;
      for (const auto& f : learn) dev.push_back(io::attach_labels(io::read_score_file(f), labeled));
      w = scoring::learn_fusion_weights(dev);
    }
    if (w.empty()) w.assign(sets.size(), 1.0);
    if (!weights_out.empty()) {
      std::string text;
      for (std::size_t i = 0; i < w.size(); ++i) text += "sys" + std::to_string(i) + ' ' + io::format_real(w[i]) + '\n';
      io::write_text_file(weights_out, text);
    }
    io::write_score_file(scoring::fuse_scores(sets, w), out);
  });

  auto* metrics = score->add_subcommand("metrics", "EER and minDCF");
  metrics->add_option("--scores", scores)->required();
  metrics->add_option("--trials", trials, "labeled trials in score order")->required();
  metrics->add_option("--out", out, "key=value output file");
  metrics->add_option("--p-target", dcf.p_target)->check(CLI::Range(1e-9, 1.0 - 1e-9));
  metrics->add_option("--c-miss", dcf.c_miss)->check(CLI::PositiveNumber);
  metrics->add_option("--c-fa", dcf.c_fa)->check(CLI::PositiveNumber);
  metrics->callback([] {
    const auto s = io::attach_labels(io::read_score_file(scores), io::read_trial_list(trials));
    const auto m = scoring::compute_metrics(s, dcf);
    std::cout << scoring::format_metrics_line(m) << '\n';
    if (!out.empty()) io::write_text_file(out, scoring::format_metrics_keyvalue(m));
  });
}

// ----------------------------------------------------------------- adapt

void add_adapt(CLI::App& app) {
  auto* ad = app.add_subcommand("adapt", "Domain adaptation")->require_subcommand(1);
  static std::string emb, utts, out, stats, utt2spk, labels, domain = "target";
  static int k = 2, max_iter = 100, jobs = 1;
  static std::uint64_t seed = 0;

  auto* st = ad->add_subcommand("stats", "Domain mean of the listed utterances");
  st->add_option("--embeddings", emb)->required();
  st->add_option("--utts", utts, "utterance ids, one per line (all when omitted)");
  st->add_option("--domain", domain);
  st->add_option("--out", out)->required();
  st->callback([] {
    auto set = io::read_embedding_set(emb);
    if (!utts.empty()) set = cli::subset(set, cli::read_name_list(utts));
    adapt::write_domain_stats(adapt::compute_domain_stats(set, domain), out);
  });

  auto* apply = ad->add_subcommand("apply", "Subtract domain statistics");
  apply->add_option("--embeddings", emb)->required();
  apply->add_option("--stats", stats)->required();
  apply->add_option("--out", out)->required();
  apply->callback([] {
    io::write_embedding_set(
        adapt::apply_statistic_adaptation(io::read_embedding_set(emb), adapt::read_domain_stats(stats)), out);
  });

  auto* km = ad->add_subcommand("kmeans", "Spherical k-means pseudo labels");
  km->add_option("--embeddings", emb)->required();
  km->add_option("--utts", utts, "utterance ids to cluster (all when omitted)");
  km->add_option("--k", k)->required();
  km->add_option("--seed", seed);
  km->add_option("--max-iter", max_iter)->check(CLI::PositiveNumber);
  km->add_option("--jobs", jobs)->check(CLI::PositiveNumber);
  km->add_option("--out", out)->required();
  km->callback([] {
    auto set = io::read_embedding_set(emb);
    if (!utts.empty()) set = cli::subset(set, cli::read_name_list(utts));
    adapt::KMeansOptions opts;
    opts.k = k;
    opts.seed = seed;
    opts.max_iter = max_iter;
    opts.jobs = jobs;
    const auto pl = adapt::spherical_kmeans(set, opts);
    adapt::write_pseudo_labels(pl, out);
    std::cout << "k=" << pl.k << " iterations=" << pl.iterations << " inertia=" << io::format_real(pl.inertia) << '\n';
  });

  auto* co = ad->add_subcommand("cohort", "Cohort archive from speakers or pseudo labels");
  co->add_option("--embeddings", emb)->required();
  auto* by_spk = co->add_option("--utt2spk", utt2spk, "cohort utterances and speakers");
  co->add_option("--labels", labels, "pseudo labels (adapt kmeans)")->excludes(by_spk);
  co->add_option("--out", out)->required();
  co->callback([] {
    const auto set = io::read_embedding_set(emb);
    scoring::Cohort c;
    if (!utt2spk.empty()) {
      c = cli::speaker_cohort(set, cli::read_utt2spk(utt2spk));
    } else if (!labels.empty()) {
      const auto pl = adapt::read_pseudo_labels(labels);
      c = adapt::build_pseudo_cohort(cli::subset(set, pl.names), pl);
    } else {
      throw ConfigError("cohort needs --utt2spk or --labels");
    }
    io::write_embedding_set(c.embeddings, out);
  });
}

// ------------------------------------------------------------------- dlg

void add_dlg(CLI::App& app) {
  auto* d = app.add_subcommand("dlg", "Loss-gated label correction")->require_subcommand(1);
  static std::string losses, logits, labels, out;
  static std::uint64_t seed = 0;
  static dlg::CorrectionConfig corr;

  auto read_losses = [] {
    std::vector<std::string> names;
    std::vector<double> values;
    for (const auto& [n, v] : io::read_pairs(losses)) {
      names.push_back(n);
      values.push_back(io::parse_real(v, "loss"));
    }
    return std::pair{names, values};
  };

  auto* gate = d->add_subcommand("gate", "Fit the two-component loss gate");
  gate->add_option("--losses", losses, "`name loss` lines")->required();
  gate->add_option("--seed", seed);
  gate->callback([read_losses] {
    const auto [names, values] = read_losses();
    const auto g = dlg::fit_loss_gmm(values, seed);
    std::size_t reliable = 0;
    for (double v : values) reliable += v <= g.threshold;
    std::cout << "mu1=" << io::format_real(g.mu1) << " mu2=" << io::format_real(g.mu2)
              << " tau=" << io::format_real(g.threshold)
              << " reliable-fraction=" << io::format_real(static_cast<double>(reliable) / values.size()) << '\n';
  });

  auto* correct = d->add_subcommand("correct", "Select reliable samples and correct the rest");
  correct->add_option("--losses", losses, "`name loss` lines")->required();
  correct->add_option("--logits", logits, "MAT1 archive with an N x C `logits` entry, rows in loss order")->required();
  correct->add_option("--labels", labels, "pseudo labels")->required();
  correct->add_option("--confidence", corr.confidence);
  correct->add_option("--temperature", corr.temperature);
  correct->add_option("--seed", seed);
  correct->add_option("--out", out, "corrected labels, `-` marks excluded samples")->required();
  correct->callback([read_losses] {
    const auto [names, values] = read_losses();
    const auto pl = adapt::read_pseudo_labels(labels);
    std::unordered_map<std::string, int> label;
    for (std::size_t i = 0; i < pl.size(); ++i) label[pl.names[i]] = pl.assignment[i];
    std::vector<int> pseudo;
    for (const auto& n : names) {
      auto it = label.find(n);
      if (it == label.end()) throw DataError("no pseudo label for " + n);
      pseudo.push_back(it->second);
    }
    std::optional<MatrixXd> z;
    for (auto& [n, m] : io::read_matrix_archive(logits))
      if (n == "logits") z = m;
    if (!z) throw DataError(logits + ": no `logits` entry");
    if (z->rows() != static_cast<Eigen::Index>(names.size())) throw DataError("logits rows do not match the losses");
    const auto g = dlg::fit_loss_gmm(values, seed);
    const auto c = dlg::select_and_correct(values, g, *z, pseudo, corr);
    std::vector<std::pair<std::string, std::string>> rows;
    for (std::size_t i = 0; i < names.size(); ++i)
      rows.emplace_back(names[i], c.labels[i] < 0 ? "-" : std::to_string(c.labels[i]));
    io::write_pairs(rows, out);
    std::cout << dlg::gate_diagnostics(g, c) << '\n';
  });
}

// ----------------------------------------------------------------- train

train::Dataset labeled_dataset(const std::string& features, const std::string& utt2spk, double noise) {
  const auto set = io::read_embedding_set(features);
  const auto spk = cli::read_utt2spk(utt2spk);
  std::map<std::string, int> index;
  for (const auto& [u, s] : spk) index.emplace(s, 0);
  int next = 0;
  for (auto& [s, i] : index) i = next++;
  train::Dataset d;
  d.features.resize(static_cast<Eigen::Index>(spk.size()), set.dim());
  for (const auto& [u, s] : spk) {
    d.features.row(static_cast<Eigen::Index>(d.names.size())) = set.vector(set.index_of(u)).cast<double>().transpose();
    d.names.push_back(u);
    d.labels.push_back(index.at(s));
  }
  d.classes = next;
  d.noise_factor = noise * MatrixXd::Identity(set.dim(), set.dim());
  return d;
}

void write_log(const std::string& path, const std::vector<train::EpochLog>& log) {
  std::string text;
  for (const auto& e : log) text += train::format_epoch_log(e) + '\n';
  write_or_print(path, text);
}

void add_train(CLI::App& app) {
  auto* t = app.add_subcommand("train", "Toy extractor training")->require_subcommand(1);
  static std::string config, features, utt2spk, checkpoint, out, log, labels;
  static int dim = 16;

  auto* sup = t->add_subcommand("supervised", "Stage-I classification training");
  sup->add_option("--config", config, "[train] and [loss] settings");
  sup->add_option("--features", features)->required();
  sup->add_option("--utt2spk", utt2spk)->required();
  sup->add_option("--init", checkpoint, "start from a checkpoint instead of random weights");
  sup->add_option("--dim", dim, "embedding dim of a random start")->check(CLI::PositiveNumber);
  sup->add_option("--out", out)->required();
  sup->add_option("--log", log, "epoch log (stdout when omitted)");
  sup->callback([] {
    const auto cfg = resolve_config(config);
    const auto data = labeled_dataset(features, utt2spk, cfg.train.segment_noise);
    auto tc = cfg.train.train;
    tc.seed = cfg.seed;
    train::ToyExtractor init;
    if (!checkpoint.empty()) {
      init = train::read_checkpoint(checkpoint).extractor;
    } else {
      Rng rng(derive_seed(cfg.seed, std::string("extractor")));
      init = train::ToyExtractor::random(static_cast<int>(data.features.cols()), dim, rng);
    }
    const auto r = train::train_supervised(init, data, tc, cfg.loss);
    train::write_checkpoint({r.extractor, r.head}, out);
    write_log(log, r.log);
  });

  auto* ft = t->add_subcommand("finetune", "Large-margin fine-tuning of a stage-I checkpoint");
  ft->add_option("--config", config, "[train] and [loss] settings; the margin is raised and Inter-TopK dropped");
  ft->add_option("--checkpoint", checkpoint)->required();
  ft->add_option("--features", features)->required();
  ft->add_option("--utt2spk", utt2spk)->required();
  ft->add_option("--out", out)->required();
  ft->add_option("--log", log);
  ft->callback([] {
    const auto cfg = resolve_config(config);
    const auto ckpt = train::read_checkpoint(checkpoint);
    if (!ckpt.head) throw DataError("checkpoint has no classifier head");
    train::TrainResult stage1;
    stage1.extractor = ckpt.extractor;
    stage1.head = *ckpt.head;
    auto tc = train::TrainConfig::finetune();
    tc.seed = cfg.seed;
    const auto r = train::finetune(stage1, labeled_dataset(features, utt2spk, cfg.train.segment_noise), tc,
                                   cfg.loss.large_margin());
    train::write_checkpoint({r.extractor, r.head}, out);
    write_log(log, r.log);
  });

  auto* ad = t->add_subcommand("adapt", "Joint source/target training ([paths] checkpoint, features, manifest, target)");
  ad->add_option("--config", config);
  ad->add_option("--labels", labels, "target pseudo labels (tcl/ocl)");
  ad->add_option("--out", out)->required();
  ad->add_option("--log", log);
  ad->callback([] {
    const auto cfg = resolve_config(config);
    if (cfg.adaptation.joint == cli::JointChoice::kNone) throw ConfigError("[adaptation] joint: set apl, tcl or ocl");
    if (cfg.paths.manifest.empty()) throw ConfigError("[paths] manifest: required");
    std::optional<adapt::PseudoLabels> pl;
    if (cfg.adaptation.joint != cli::JointChoice::kApl) {
      if (labels.empty()) throw ConfigError("tcl and ocl need --labels");
      pl = adapt::read_pseudo_labels(labels);
    }
    const auto data = cli::load_joint_data(cfg, io::read_embedding_set(cfg.paths.features),
                                           io::read_manifest(cfg.paths.manifest), cli::read_name_list(cfg.paths.target),
                                           pl ? &*pl : nullptr);
    const auto ckpt = train::read_checkpoint(cfg.paths.checkpoint);
    if (!ckpt.head) throw DataError("checkpoint has no classifier head");
    train::TrainResult pre;
    pre.extractor = ckpt.extractor;
    pre.head = *ckpt.head;
    const auto r = train::adapt_joint(pre, data.source, data.target, cli::adapt_config(cfg));
    train::write_checkpoint({r.extractor, r.head}, out);
    write_log(log, r.log);
  });

  auto* em = t->add_subcommand("embed", "Embed the target-domain utterances of [paths] features with segment noise");
  em->add_option("--config", config);
  em->add_option("--checkpoint", checkpoint, "extractor (default [paths] checkpoint)");
  em->add_option("--out", out)->required();
  em->callback([] {
    const auto cfg = resolve_config(config);
    if (cfg.paths.manifest.empty()) throw ConfigError("[paths] manifest: required");
    const auto data = cli::load_joint_data(cfg, io::read_embedding_set(cfg.paths.features),
                                           io::read_manifest(cfg.paths.manifest), {}, nullptr);
    const auto ckpt = train::read_checkpoint(checkpoint.empty() ? cfg.paths.checkpoint : fs::path(checkpoint));
    io::write_embedding_set(train::embed_dataset(ckpt.extractor, data.all, cfg.seed), out);
  });
}

// ------------------------------------------------------------------- run

void add_run(CLI::App& app) {
  auto* run = app.add_subcommand("run", "End-to-end pipelines");
  static std::string kind, config, out;
  static std::optional<std::uint64_t> seed;
  static std::optional<int> jobs;
  static bool dry = false;
  static int systems = 3;
  run->add_option("kind", kind, "track1-score|track3-adapt|synth (default: the config's pipeline key)");
  run->add_option("--config", config, "pipeline config (default $SPKV_CONFIG)");
  run->add_option("--out", out, "run directory (synth: input directory)");
  run->add_option("--seed", seed, "override the config seed");
  run->add_option("--jobs", jobs, "override the config jobs")->check(CLI::PositiveNumber);
  run->add_option("--systems", systems, "synth: number of embedding systems")->check(CLI::PositiveNumber);
  run->add_flag("--dry-run", dry, "print the stage plan only");
  run->callback([] {
    if (kind == "synth") {
      if (out.empty()) throw ConfigError("synth needs --out");
      cli::write_synthetic_inputs(out, {systems, seed.value_or(0)});
      std::cout << "wrote " << (fs::path(out) / "config.ini").string() << '\n';
      return;
    }
    if (config.empty() && !std::getenv(cli::kConfigEnv)) throw ConfigError("run needs --config or $SPKV_CONFIG");
    auto cfg = resolve_config(config);
    if (!kind.empty()) cfg.pipeline = cli::parse_pipeline_kind(kind);
    if (seed) cfg.seed = *seed;
    if (jobs) cfg.jobs = *jobs;
    if (out.empty() && !dry) throw ConfigError("run needs --out");
    const auto plan = cli::run_pipeline(cfg, out, dry);
    if (dry) {
      std::cout << cli::format_plan(plan);
      return;
    }
    const fs::path metrics = fs::path(out) / "metrics.txt";
    if (fs::exists(metrics)) std::cout << io::read_text_file(metrics);
  });
}

// ---------------------------------------------------------------- config

void add_config(CLI::App& app) {
  auto* c = app.add_subcommand("config", "Pipeline configuration")->require_subcommand(1);
  c->add_subcommand("dump-defaults", "Print every key with its default")->callback([] { std::cout << cli::dump_defaults(); });
  static std::string path;
  auto* check = c->add_subcommand("check", "Validate a config and print the effective values");
  check->add_option("--config", path, "config file (default $SPKV_CONFIG)");
  check->callback([] { std::cout << cli::dump_config(resolve_config(path)); });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Speaker-verification back-end and domain-adaptation toolkit"};
  app.require_subcommand(1);
  add_emb(app);
  add_trials(app);
  add_feat(app);
  add_score(app);
  add_adapt(app);
  add_dlg(app);
  add_train(app);
  add_run(app);
  add_config(app);
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "spkv: config error: " << e.what() << '\n';
    return 2;
  } catch (const NumericalError& e) {
    std::cerr << "spkv: numerical error: " << e.what() << '\n';
    return 4;
  } catch (const DataError& e) {
    std::cerr << "spkv: data error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "spkv: error: " << e.what() << '\n';
    return 3;
  }
  return 0;
}
