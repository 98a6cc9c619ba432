// tests/unit/trainer_test.cpp

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

#include "doctest.h"

#include "spkv/benchmark.hpp"
#include "spkv/error.hpp"
#include "spkv/scoring.hpp"
#include "unit/util.hpp"

#include <cmath>
#include <set>

using namespace spkv;
using namespace spkv::train;

namespace {

Dataset labeled_blobs(int speakers, int per_speaker, int dim, double spread, Rng& rng, const std::string& prefix) {
  Dataset d;
  d.features.resize(speakers * per_speaker, dim);
  const MatrixXd centers = 3.0 * testing::gaussian(speakers, dim, rng);
  for (int s = 0; s < speakers; ++s)
    for (int u = 0; u < per_speaker; ++u) {
      const int row = s * per_speaker + u;
      d.features.row(row) = centers.row(s) + spread * testing::gaussian(1, dim, rng);
      d.names.push_back(prefix + std::to_string(s) + "-" + std::to_string(u));
      d.labels.push_back(s);
    }
  d.classes = speakers;
  return d;
}

nn::LossConfig plain_loss() {
  nn::LossConfig c;
  c.margin = 0.0;
  c.subcenters = 1;
  c.intertopk_k = 0;
  c.intertopk_penalty = 0.0;
  c.scale = 8.0;
  return c;
}

BenchmarkConfig small_bench() {
  BenchmarkConfig c;
  c.source_speakers = 12;
  c.source_utterances = 10;
  c.target_speakers = 8;
  c.target_utterances = 10;
  c.eval_speakers = 6;
  c.eval_utterances = 4;
  return c;
}

}  // namespace

TEST_SUITE("trainer") {

TEST_CASE("learning-rate schedule") {
  TrainConfig c = TrainConfig::stage1();
  CHECK(c.learning_rate(0) == 0.1);
  CHECK(c.learning_rate(c.epochs - 1) == doctest::Approx(0.00005).epsilon(1e-12));
  for (int e = 1; e < c.epochs; ++e) CHECK(c.learning_rate(e) < c.learning_rate(e - 1));
  // Geometric: equal ratios between consecutive epochs.
  CHECK(c.learning_rate(2) / c.learning_rate(1) == doctest::Approx(c.learning_rate(1) / c.learning_rate(0)));
  c.lr_final = c.lr_initial;
  for (int e = 0; e < c.epochs; ++e) CHECK(c.learning_rate(e) == c.lr_initial);

  CHECK(TrainConfig::adaptation().lr_initial == 0.001);
  CHECK(TrainConfig::adaptation().lr_final == 0.00001);
  CHECK(TrainConfig::finetune().segment_seconds == 6.0);

  TrainConfig bad;
  bad.lr_final = 1.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = TrainConfig{};
  bad.epochs = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("joint batches") {
  Rng rng(1);
  Dataset src = labeled_blobs(4, 5, 6, 0.1, rng, "s");
  Dataset tgt = labeled_blobs(3, 5, 6, 0.1, rng, "t");
  tgt.labels.clear();
  Rng a(5), b(5);
  const Batch x = make_joint_batch(src, tgt, 8, false, 2.0, a);
  CHECK(x.source.rows() == 8);
  CHECK(x.target.rows() == 8);
  CHECK(x.source_labels.size() == 8);
  CHECK(x.target_second.rows() == 0);
  CHECK(std::set<std::size_t>(x.source_rows.begin(), x.source_rows.end()).size() == 8);
  CHECK(std::set<std::size_t>(x.target_rows.begin(), x.target_rows.end()).size() == 8);

  const Batch y = make_joint_batch(src, tgt, 8, false, 2.0, b);
  CHECK(x.source_rows == y.source_rows);
  CHECK(x.target_rows == y.target_rows);

  const Batch apl = make_joint_batch(src, tgt, 8, true, 2.0, a);
  CHECK(apl.target.rows() + apl.target_second.rows() == 16);

  CHECK_THROWS_AS(make_joint_batch(src, tgt, 16, false, 2.0, a), ConfigError);
}

TEST_CASE("segments add noise scaled by duration") {
  Dataset d;
  d.names = {"a"};
  d.features = MatrixXd::Zero(1, 3);
  d.noise_factor = 2.0 * MatrixXd::Identity(3, 3);
  Rng rng(3);
  double sum_short = 0.0, sum_long = 0.0;
  for (int i = 0; i < 4000; ++i) {
    sum_short += d.segments({0}, 1.0, rng).squaredNorm();
    sum_long += d.segments({0}, 4.0, rng).squaredNorm();
  }
  // E|noise|^2 = 3 * 4 / seconds.
  CHECK(sum_short / 4000 == doctest::Approx(12.0).epsilon(0.05));
  CHECK(sum_long / 4000 == doctest::Approx(3.0).epsilon(0.05));
}

TEST_CASE("supervised training separates a separable toy set") {
  Rng rng(2);
  Dataset train = labeled_blobs(2, 30, 5, 0.3, rng, "tr");
  Rng eval_rng(3);
  Dataset held = labeled_blobs(2, 10, 5, 0.3, eval_rng, "ho");
  // Same two speakers: reuse the training centers.
  for (int i = 0; i < 20; ++i)
    held.features.row(i) = train.features.row(i < 10 ? 0 : 30) + 0.3 * testing::gaussian(1, 5, eval_rng);

  TrainConfig cfg;
  cfg.epochs = 20;
  cfg.batch_size = 20;
  cfg.lr_initial = 0.1;
  cfg.lr_final = 0.01;
  const auto r = train_supervised(ToyExtractor::random(5, 4, rng), train, cfg, nn::LossConfig::offline_stage1());
  CHECK(r.log.size() == 20);
  CHECK(r.log.back().loss < r.log.front().loss);

  EmbeddingSet emb(4);
  const MatrixXd e = r.extractor.embed(held.features);
  for (std::size_t i = 0; i < held.size(); ++i) emb.add(held.names[i], VectorXd(e.row(static_cast<Eigen::Index>(i))));
  std::vector<io::Trial> pairs;
  for (std::size_t i = 0; i < held.size(); ++i)
    for (std::size_t j = i + 1; j < held.size(); ++j)
      pairs.push_back({held.names[i], held.names[j], (i < 10) == (j < 10) ? io::Label::kTarget : io::Label::kNontarget, 0});
  CHECK(scoring::compute_eer(scoring::score_trials(emb, io::TrialList(pairs))) == 0.0);
}

TEST_CASE("full-batch training loss decreases every epoch") {
  Rng rng(4);
  const Dataset d = labeled_blobs(5, 12, 6, 0.8, rng, "x");
  TrainConfig cfg;
  cfg.epochs = 40;
  cfg.batch_size = static_cast<int>(d.size());
  cfg.lr_initial = cfg.lr_final = 0.02;
  cfg.weight_decay = 0.0;
  const auto r = train_supervised(ToyExtractor::random(6, 4, rng), d, cfg, plain_loss());
  for (std::size_t e = 1; e < r.log.size(); ++e) CHECK(r.log[e].loss <= r.log[e - 1].loss + 1e-6);
  CHECK(r.log.back().loss < 0.5 * r.log.front().loss);
}

TEST_CASE("training is bit-reproducible") {
  const Benchmark b = make_benchmark(small_bench(), 3);
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 16;
  cfg.seed = 11;
  Rng r1(1), r2(1);
  const auto x = train_supervised(ToyExtractor::random(32, 16, r1), b.source, cfg, nn::LossConfig{});
  const auto y = train_supervised(ToyExtractor::random(32, 16, r2), b.source, cfg, nn::LossConfig{});
  CHECK(x.extractor.projection == y.extractor.projection);
  CHECK(x.head.weights == y.head.weights);
  cfg.seed = 12;
  Rng r3(1);
  const auto z = train_supervised(ToyExtractor::random(32, 16, r3), b.source, cfg, nn::LossConfig{});
  CHECK(z.extractor.projection != x.extractor.projection);
}

TEST_CASE("stage-I loss halves on the synthetic benchmark") {
  const DeskProtocol p = DeskProtocol::defaults();
  const Benchmark b = make_benchmark(p.bench, 0);
  const auto r = pretrain(p, b, 0);
  CHECK(r.log.back().loss <= 0.5 * r.log.front().loss);
}

TEST_CASE("fine-tuning rules") {
  Rng rng(5);
  const Dataset d = labeled_blobs(8, 6, 6, 0.5, rng, "f");
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 16;
  const auto s1 = train_supervised(ToyExtractor::random(6, 4, rng), d, cfg, nn::LossConfig{});
  CHECK_THROWS_AS(finetune(s1, d, TrainConfig::finetune(), nn::LossConfig{}), ConfigError);
  nn::LossConfig penalty_only = nn::LossConfig{}.large_margin();
  penalty_only.intertopk_penalty = 0.06;
  CHECK_THROWS_AS(finetune(s1, d, TrainConfig::finetune(), penalty_only), ConfigError);
  const auto s2 = finetune(s1, d, TrainConfig::finetune(), nn::LossConfig{}.large_margin());
  CHECK(s2.log.size() == 5);
  CHECK(s2.head.classes == 8);
}

TEST_CASE("joint adaptation configuration errors") {
  const Benchmark b = make_benchmark(small_bench(), 1);
  TrainConfig cfg;
  cfg.epochs = 1;
  Rng rng(1);
  const auto pre = train_supervised(ToyExtractor::random(32, 16, rng), b.source, cfg, nn::LossConfig{});
  AdaptConfig ac;
  ac.train.epochs = 1;
  ac.mode = nn::JointMode::kApl;
  ac.dlglc = true;
  CHECK_THROWS_AS(adapt_joint(pre, b.source, b.target, ac), ConfigError);
  ac.dlglc = false;
  ac.mode = nn::JointMode::kTcl;
  CHECK_THROWS_AS(adapt_joint(pre, b.source, b.target, ac), ConfigError);
  ac.mode = nn::JointMode::kApl;
  CHECK_NOTHROW(adapt_joint(pre, b.source, b.target, ac));
}

TEST_CASE("OCL keeps source and target class ranges apart") {
  Rng rng(6);
  const int S = 5, T = 3;
  const auto head = nn::ClassifierHead::random(S + T, 1, 4, rng);
  nn::JointInputs in;
  in.source.embeddings = testing::gaussian(6, 4, rng);
  in.source.labels = {0, 1, 2, 3, 4, 0};
  in.source_head = &head;
  in.source_classes = S;
  in.source_cfg = plain_loss();
  in.target_cfg = plain_loss();
  in.mode = nn::JointMode::kOcl;
  in.target = nn::MarginBatch{testing::gaussian(4, 4, rng), {0, 1, 2, 1}};
  const auto g = nn::joint_loss(in);
  // One-hot mass shows up as the only negative logit gradients.
  CHECK(g.source.logit_grad.rightCols(T).minCoeff() >= 0.0);
  CHECK(g.target->logit_grad.leftCols(S).minCoeff() >= 0.0);
  for (Eigen::Index i = 0; i < 4; ++i) CHECK(g.target->logit_grad.row(i).rightCols(T).minCoeff() < 0.0);
}

TEST_CASE("DLG-LC logs the gate every epoch after warm-up") {
  const Benchmark b = make_benchmark(small_bench(), 2);
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 16;
  Rng rng(2);
  const auto pre = train_supervised(ToyExtractor::random(32, 16, rng), b.source, cfg, nn::LossConfig{});
  std::vector<int> pseudo = b.target_truth;
  for (std::size_t i = 0; i < pseudo.size(); i += 5) pseudo[i] = (pseudo[i] + 1) % 8;
  const Dataset labeled = b.target.relabeled(pseudo, 8);
  AdaptConfig ac;
  ac.train.epochs = 3;
  ac.train.batch_size = 16;
  ac.mode = nn::JointMode::kOcl;
  ac.dlglc = true;
  ac.warmup_epochs = 2;
  const auto r = adapt_joint(pre, b.source, labeled, ac);
  REQUIRE(r.log.size() == 3);
  CHECK(!r.log[0].tau);
  CHECK(r.log[1].tau);
  CHECK(r.log[2].reliable_fraction);
  CHECK(format_epoch_log(r.log[2]).find("gate-tau=") != std::string::npos);
  REQUIRE(r.last_correction);
  CHECK(r.last_correction->targets.rows() == static_cast<Eigen::Index>(labeled.size()));
  CHECK(r.head.classes == b.source.classes + 8);
}

TEST_CASE("checkpoints round trip") {
  Rng rng(7);
  Checkpoint c{ToyExtractor::random(6, 3, rng), nn::ClassifierHead::random(4, 2, 3, rng)};
  const auto dir = testing::scratch_dir("ckpt");
  write_checkpoint(c, dir / "m.mat");
  const auto back = read_checkpoint(dir / "m.mat");
  CHECK(back.extractor.projection == c.extractor.projection);
  CHECK(back.extractor.bias == c.extractor.bias);
  REQUIRE(back.head);
  CHECK(back.head->weights == c.head->weights);
  CHECK(back.head->subcenters == 2);

  write_checkpoint(Checkpoint{c.extractor, std::nullopt}, dir / "e.mat");
  CHECK(!read_checkpoint(dir / "e.mat").head);
}

TEST_CASE("benchmark shape and determinism") {
  const BenchmarkConfig cfg = small_bench();
  const Benchmark a = make_benchmark(cfg, 9);
  const Benchmark b = make_benchmark(cfg, 9);
  CHECK(a.source.size() == 120);
  CHECK(a.source.classes == 12);
  CHECK(a.target.size() == 80);
  CHECK(!a.target.labeled());
  CHECK(a.eval.size() == 24);
  CHECK(a.trials.size() == 24 * 23 / 2);
  CHECK(a.source.features == b.source.features);
  CHECK(a.eval.features == b.eval.features);
  CHECK(make_benchmark(cfg, 10).source.features != a.source.features);
  for (double d : a.eval.durations) {
    CHECK(d >= cfg.min_duration);
    CHECK(d <= cfg.max_duration);
  }
}

TEST_CASE("vMF speaker spread matches the Bessel-ratio mean") {
  // Source speaker parts are radius * vMF(mu, kappa); the mean resultant
  // length of a vMF sample in p dims is I_{p/2}(kappa) / I_{p/2-1}(kappa).
  BenchmarkConfig cfg = small_bench();
  cfg.source_speakers = 4;
  cfg.source_utterances = 1500;
  cfg.kappa = 20.0;
  const Benchmark b = make_benchmark(cfg, 4);
  const double p = cfg.speaker_dim;
  const double expected = std::cyl_bessel_i(p / 2, cfg.kappa) / std::cyl_bessel_i(p / 2 - 1, cfg.kappa);
  for (int s = 0; s < 4; ++s) {
    const MatrixXd part = b.source.features.middleRows(s * 1500, 1500).leftCols(cfg.speaker_dim) / cfg.speaker_radius;
    CHECK((part.rowwise().norm().array() - 1.0).abs().maxCoeff() < 1e-12);
    CHECK(part.colwise().mean().norm() == doctest::Approx(expected).epsilon(0.01));
  }
}

}  // TEST_SUITE
