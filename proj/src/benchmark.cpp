// src/benchmark.cpp

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

#include "spkv/benchmark.hpp"

#include "spkv/adaptation.hpp"
#include "spkv/error.hpp"
#include "spkv/scoring.hpp"
#include "sampling.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>

namespace spkv::train {

using detail::gaussian;
using detail::stream;

namespace {

// Orthonormal basis from the QR factorization of a Gaussian matrix.
MatrixXd random_orthogonal(int d, Rng& rng) {
  Eigen::HouseholderQR<MatrixXd> qr(gaussian(d, d, rng));
  MatrixXd q = qr.householderQ();
  const VectorXd diag = qr.matrixQR().diagonal();
  for (int i = 0; i < d; ++i)
    if (diag[i] < 0) q.col(i) = -q.col(i);
  return q;
}

// Wood's rejection sampler for the von Mises-Fisher distribution.
VectorXd sample_vmf(const VectorXd& mu, double kappa, Rng& rng) {
  const double p = static_cast<double>(mu.size());
  const double b = (-2.0 * kappa + std::sqrt(4.0 * kappa * kappa + (p - 1) * (p - 1))) / (p - 1);
  const double x0 = (1 - b) / (1 + b);
  const double c = kappa * x0 + (p - 1) * std::log(1 - x0 * x0);
  std::gamma_distribution<double> ga((p - 1) / 2, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double w = 0.0;
  for (;;) {
    const double g1 = ga(rng), g2 = ga(rng);
    const double z = g1 / (g1 + g2);
    w = (1 - (1 + b) * z) / (1 - (1 - b) * z);
    if (kappa * w + (p - 1) * std::log(1 - x0 * w) - c >= std::log(u(rng))) break;
  }
  VectorXd v = gaussian(mu.size(), 1, rng);
  v -= v.dot(mu) * mu;
  v.normalize();
  return w * mu + std::sqrt(std::max(0.0, 1 - w * w)) * v;
}

io::TrialList all_pairs(const Dataset& d, const std::vector<int>& truth) {
  std::vector<io::Trial> trials;
  for (std::size_t i = 0; i < d.size(); ++i)
    for (std::size_t j = i + 1; j < d.size(); ++j)
      trials.push_back({d.names[i], d.names[j], truth[i] == truth[j] ? io::Label::kTarget : io::Label::kNontarget, 0});
  return io::TrialList(std::move(trials));
}

}  // namespace

// --------------------------------------------------------------- benchmark

void BenchmarkConfig::validate() const {
  if (input_dim < 2 || speaker_dim < 2 || speaker_dim > input_dim) throw ConfigError("benchmark dims are inconsistent");
  if (embedding_dim < 1) throw ConfigError("embedding dim must be positive");
  for (int v : {source_speakers, source_utterances, target_speakers, target_utterances, eval_speakers, eval_utterances})
    if (v < 2) throw ConfigError("benchmark speaker and utterance counts must be >= 2");
  if (!(kappa > 0.0)) throw ConfigError("vMF concentration must be positive");
  if (!(min_duration > 0.0) || max_duration < min_duration) throw ConfigError("duration range is invalid");
  if (genres < 1) throw ConfigError("genres must be >= 1");
}

Benchmark make_benchmark(const BenchmarkConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const int D = cfg.input_dim, P = cfg.speaker_dim;
  Rng rng(stream(seed, "benchmark"));

  // Domain transform: rotate every plane of a random basis by `rotation`.
  const MatrixXd basis = random_orthogonal(D, rng);
  MatrixXd planes = MatrixXd::Identity(D, D);
  const double c = std::cos(cfg.rotation), s = std::sin(cfg.rotation);
  for (int i = 0; i + 1 < D; i += 2) {
    planes(i, i) = c;
    planes(i, i + 1) = -s;
    planes(i + 1, i) = s;
    planes(i + 1, i + 1) = c;
  }
  const MatrixXd rotation = basis * planes * basis.transpose();
  VectorXd shift = gaussian(D, 1, rng);
  shift *= cfg.translation / shift.norm();
  // Target segment noise: strong in a few random directions.
  const MatrixXd noise_basis = random_orthogonal(D, rng);
  VectorXd noise_sd(D);
  for (int i = 0; i < D; ++i) noise_sd[i] = cfg.target_noise_sd * std::pow(0.15, static_cast<double>(i) / (D - 1));
  const MatrixXd target_noise = noise_basis * noise_sd.asDiagonal();
  MatrixXd genre_dirs = normalized_rows(gaussian(cfg.genres, D, rng));
  VectorXd genre_gain(cfg.genres);
  for (int g = 0; g < cfg.genres; ++g)
    genre_gain[g] = cfg.genre_strength * (cfg.genres == 1 ? 1.0 : 0.25 + 1.5 * g / (cfg.genres - 1));

  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto make = [&](const std::string& prefix, int speakers, int utts, bool target, std::vector<int>& truth) {
    Dataset d;
    d.features.resize(static_cast<Eigen::Index>(speakers) * utts, D);
    d.noise_factor = target ? target_noise : MatrixXd(cfg.source_noise_sd * MatrixXd::Identity(D, D));
    for (int spk = 0; spk < speakers; ++spk) {
      const VectorXd mu = gaussian(P, 1, rng).normalized();
      const int genre = spk % cfg.genres;
      for (int u = 0; u < utts; ++u) {
        const Eigen::Index row = static_cast<Eigen::Index>(spk) * utts + u;
        VectorXd x(D);
        x.head(P) = cfg.speaker_radius * sample_vmf(mu, cfg.kappa, rng);
        for (int i = P; i < D; ++i) x[i] = cfg.nuisance_sd * normal(rng);
        if (target) {
          x = rotation * x + shift;
          x += genre_gain[genre] * genre_dirs.row(genre).transpose();
        }
        d.features.row(row) = x;
        char name[64];
        std::snprintf(name, sizeof name, "%s%04d-%03d", prefix.c_str(), spk, u);
        d.names.emplace_back(name);
        const double lo = std::log(cfg.min_duration), hi = std::log(cfg.max_duration);
        d.durations.push_back(std::exp(lo + (hi - lo) * unif(rng)));
        truth.push_back(spk);
      }
    }
    return d;
  };

  Benchmark b;
  std::vector<int> source_truth;
  b.source = make("src", cfg.source_speakers, cfg.source_utterances, false, source_truth);
  b.source.labels = source_truth;
  b.source.classes = cfg.source_speakers;
  b.target = make("tgt", cfg.target_speakers, cfg.target_utterances, true, b.target_truth);
  b.eval = make("evl", cfg.eval_speakers, cfg.eval_utterances, true, b.eval_truth);

  b.dev = make("dev", cfg.eval_speakers, cfg.eval_utterances, true, b.dev_truth);
  b.trials = all_pairs(b.eval, b.eval_truth);
  b.dev_trials = all_pairs(b.dev, b.dev_truth);
  return b;
}

EmbeddingSet embed_dataset(const ToyExtractor& ex, const Dataset& data, std::uint64_t seed, double seconds) {
  data.validate();
  MatrixXd x = data.features;
  if (data.noise_factor.size()) {
    for (std::size_t i = 0; i < data.size(); ++i) {
      Rng rng(stream(seed, data.names[i]));
      const double len = seconds > 0.0 ? seconds : (data.durations.empty() ? 1.0 : data.durations[i]);
      const MatrixXd z = gaussian(1, x.cols(), rng);
      x.row(static_cast<Eigen::Index>(i)) += z * data.noise_factor.transpose() / std::sqrt(len);
    }
  }
  const MatrixXd e = ex.embed(x);
  EmbeddingSet out(ex.output_dim());
  for (std::size_t i = 0; i < data.size(); ++i) out.add(data.names[i], VectorXd(e.row(static_cast<Eigen::Index>(i)).transpose()));
  return out;
}

double evaluate_eer(const ToyExtractor& ex, const Benchmark& bench, std::uint64_t seed) {
  const auto stats = adapt::compute_domain_stats(embed_dataset(ex, bench.target, seed));
  const auto eval = adapt::apply_statistic_adaptation(embed_dataset(ex, bench.eval, seed), stats);
  return scoring::compute_eer(scoring::score_trials(eval, bench.trials));
}

std::vector<int> estimate_pseudo_labels(const ToyExtractor& ex, const Benchmark& bench, int k, std::uint64_t seed) {
  const auto emb = embed_dataset(ex, bench.target, seed);
  const auto adapted = adapt::apply_statistic_adaptation(emb, adapt::compute_domain_stats(emb));
  adapt::KMeansOptions opts;
  opts.k = k;
  opts.seed = seed;
  return adapt::spherical_kmeans(adapted, opts).assignment;
}

// ------------------------------------------------------------- protocols

DeskProtocol DeskProtocol::defaults() {
  DeskProtocol p;
  p.pretrain.epochs = 40;
  p.pretrain.lr_initial = 0.1;
  p.pretrain.lr_final = 0.001;
  p.adapt.train.epochs = 20;
  p.adapt.train.lr_initial = 0.05;
  p.adapt.train.lr_final = 0.001;
  return p;
}

TrainResult pretrain(const DeskProtocol& p, const Benchmark& bench, std::uint64_t seed) {
  TrainConfig cfg = p.pretrain;
  cfg.seed = seed;
  Rng rng(stream(seed, "extractor"));
  const ToyExtractor init = ToyExtractor::random(p.bench.input_dim, p.bench.embedding_dim, rng);
  return train_supervised(init, bench.source, cfg, p.adapt.source_loss);
}

ScoringChain run_scoring_chain(const DeskProtocol& p, std::uint64_t seed) {
  const Benchmark bench = make_benchmark(p.bench, seed);
  const ToyExtractor ex = pretrain(p, bench, seed).extractor;
  const auto target = embed_dataset(ex, bench.target, seed);
  const auto eval = embed_dataset(ex, bench.eval, seed);
  const auto stats = adapt::compute_domain_stats(target);
  const auto target_a = adapt::apply_statistic_adaptation(target, stats);
  const auto eval_a = adapt::apply_statistic_adaptation(eval, stats);
  const auto dev_a = adapt::apply_statistic_adaptation(embed_dataset(ex, bench.dev, seed), stats);

  std::map<std::string, std::string> speaker_of;
  for (std::size_t i = 0; i < bench.target.size(); ++i)
    speaker_of[bench.target.names[i]] = "spk" + std::to_string(bench.target_truth[i]);
  const auto truth_cohort = scoring::build_cohort(target_a, speaker_of);
  adapt::KMeansOptions km;
  km.k = p.cohort_clusters;
  km.seed = seed;
  const auto pseudo_cohort = adapt::build_pseudo_cohort(target_a, adapt::spherical_kmeans(target_a, km));

  ScoringChain c;
  c.raw = scoring::compute_eer(scoring::score_trials(eval, bench.trials));
  const auto sa = scoring::score_trials(eval_a, bench.trials);
  c.adapted = scoring::compute_eer(sa);
  c.asnorm_truth = scoring::compute_eer(scoring::as_norm(sa, eval_a, truth_cohort, p.cohort_top_n));
  const auto normed = scoring::as_norm(sa, eval_a, pseudo_cohort, p.cohort_top_n);
  c.asnorm_pseudo = scoring::compute_eer(normed);

  // Calibration is trained on the labeled dev speakers.
  std::unordered_map<std::string, double> duration;
  for (const Dataset* d : {&bench.eval, &bench.dev})
    for (std::size_t i = 0; i < d->size(); ++i) duration[d->names[i]] = d->durations[i];
  const auto dev_normed = scoring::as_norm(scoring::score_trials(dev_a, bench.dev_trials), dev_a, pseudo_cohort,
                                           p.cohort_top_n);
  const MatrixXd dev_q = scoring::duration_quality(bench.dev_trials, duration);
  const MatrixXd eval_q = scoring::duration_quality(bench.trials, duration);
  const auto model = scoring::train_calibration(dev_normed, &dev_q);
  c.calibrated = scoring::compute_eer(scoring::apply_calibration(model, normed, &eval_q));
  return c;
}

AdaptationSuite run_adaptation_suite(const DeskProtocol& p, std::uint64_t seed) {
  const Benchmark bench = make_benchmark(p.bench, seed);
  const TrainResult pre = pretrain(p, bench, seed);
  AdaptConfig cfg = p.adapt;
  cfg.train.seed = seed;
  AdaptationSuite s;
  s.adapted_only = evaluate_eer(pre.extractor, bench, seed);

  cfg.mode = nn::JointMode::kApl;
  cfg.dlglc = false;
  const TrainResult apl = adapt_joint(pre, bench.source, bench.target, cfg);
  s.apl = evaluate_eer(apl.extractor, bench, seed);

  // Pseudo labels for TCL/OCL come from the APL system.
  const int k = p.bench.target_speakers;
  const std::vector<int> pseudo = estimate_pseudo_labels(apl.extractor, bench, k, seed);
  s.pseudo_rand_index = adapt::rand_index(pseudo, bench.target_truth);
  const Dataset labeled = bench.target.relabeled(pseudo, k);
  auto run = [&](nn::JointMode mode, bool dlglc) {
    cfg.mode = mode;
    cfg.dlglc = dlglc;
    return evaluate_eer(adapt_joint(pre, bench.source, labeled, cfg).extractor, bench, seed);
  };
  s.tcl = run(nn::JointMode::kTcl, false);
  s.tcl_dlg = run(nn::JointMode::kTcl, true);
  s.ocl = run(nn::JointMode::kOcl, false);
  s.ocl_dlg = run(nn::JointMode::kOcl, true);
  return s;
}

}  // namespace spkv::train
