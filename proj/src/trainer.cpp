// src/trainer.cpp

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

#include "spkv/trainer.hpp"

#include "spkv/adaptation.hpp"
#include "spkv/error.hpp"
#include "spkv/scoring.hpp"
#include "sampling.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace spkv::train {

using detail::gaussian;
using detail::stream;

namespace {

MatrixXd gather(const MatrixXd& m, const std::vector<std::size_t>& rows) {
  MatrixXd out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(static_cast<Eigen::Index>(rows[i]));
  return out;
}

std::vector<std::size_t> permutation(std::size_t n, Rng& rng) {
  std::vector<std::size_t> p(n);
  std::iota(p.begin(), p.end(), 0);
  std::shuffle(p.begin(), p.end(), rng);
  return p;
}

void check_finite_loss(double loss, int epoch, int batch) {
  if (!std::isfinite(loss))
    throw NumericalError("training diverged: loss " + std::to_string(loss) + " at epoch " + std::to_string(epoch) +
                         ", batch " + std::to_string(batch) + " (try a smaller lr-initial)");
}

// Plain SGD with decoupled-from-bias weight decay.
void sgd(MatrixXd& w, const MatrixXd& grad, double lr, double decay) { w -= lr * (grad + decay * w); }

void step_extractor(ToyExtractor& ex, const MatrixXd& x, const MatrixXd& grad_e, double lr, double decay) {
  sgd(ex.projection, x.transpose() * grad_e, lr, decay);
  ex.bias -= lr * grad_e.colwise().sum().transpose();
}

// Target classifier rows at the normalized pseudo-class centroids, repeated
// for every subcenter with a small perturbation so they can separate.
MatrixXd centroid_rows(const MatrixXd& emb, const std::vector<int>& labels, int classes, int subcenters, Rng& rng) {
  MatrixXd sums = MatrixXd::Zero(classes, emb.cols());
  const MatrixXd unit = normalized_rows(emb);
  for (std::size_t i = 0; i < labels.size(); ++i) sums.row(labels[i]) += unit.row(static_cast<Eigen::Index>(i));
  MatrixXd rows(static_cast<Eigen::Index>(classes) * subcenters, emb.cols());
  const MatrixXd jitter = 0.01 * gaussian(rows.rows(), rows.cols(), rng);
  for (int c = 0; c < classes; ++c) {
    const double n = sums.row(c).norm();
    if (!(n > 0.0)) throw DataError("pseudo class " + std::to_string(c) + " has no members");
    for (int k = 0; k < subcenters; ++k) {
      const Eigen::Index r = static_cast<Eigen::Index>(c) * subcenters + k;
      rows.row(r) = sums.row(c) / n + jitter.row(r);
    }
  }
  return rows;
}

}  // namespace

// --------------------------------------------------------------- extractor

MatrixXd ToyExtractor::embed(const MatrixXd& x) const {
  if (x.cols() != projection.rows())
    throw DataError("extractor expects " + std::to_string(projection.rows()) + "-dim inputs, got " +
                    std::to_string(x.cols()));
  MatrixXd e = x * projection;
  e.rowwise() += bias.transpose();
  return e;
}

void ToyExtractor::validate() const {
  if (projection.size() == 0 || bias.size() != projection.cols()) throw DataError("extractor shape is inconsistent");
  if (!projection.allFinite() || !bias.allFinite()) throw DataError("extractor has non-finite parameters");
}

ToyExtractor ToyExtractor::random(int input_dim, int output_dim, Rng& rng) {
  if (input_dim < 1 || output_dim < 1) throw ConfigError("extractor dims must be positive");
  ToyExtractor ex;
  ex.projection = gaussian(input_dim, output_dim, rng) / std::sqrt(static_cast<double>(input_dim));
  ex.bias = VectorXd::Zero(output_dim);
  return ex;
}

void write_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  ckpt.extractor.validate();
  io::MatrixArchive a;
  a.emplace_back("projection", ckpt.extractor.projection);
  a.emplace_back("bias", MatrixXd(ckpt.extractor.bias));
  if (ckpt.head) {
    a.emplace_back("head", ckpt.head->weights);
    a.emplace_back("head-shape", (MatrixXd(1, 2) << ckpt.head->classes, ckpt.head->subcenters).finished());
  }
  io::write_matrix_archive(a, path);
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  Checkpoint c;
  std::optional<MatrixXd> head, shape;
  bool have_p = false, have_b = false;
  for (auto& [name, m] : io::read_matrix_archive(path)) {
    if (name == "projection") {
      c.extractor.projection = std::move(m);
      have_p = true;
    } else if (name == "bias") {
      if (m.cols() != 1) throw DataError(path.string() + ": bias must be a column");
      c.extractor.bias = m.col(0);
      have_b = true;
    } else if (name == "head") {
      head = std::move(m);
    } else if (name == "head-shape") {
      shape = std::move(m);
    } else {
      throw DataError(path.string() + ": unexpected checkpoint entry '" + name + "'");
    }
  }
  if (!have_p || !have_b) throw DataError(path.string() + ": checkpoint lacks projection or bias");
  c.extractor.validate();
  if (head.has_value() != shape.has_value()) throw DataError(path.string() + ": incomplete classifier head");
  if (head) {
    nn::ClassifierHead h;
    h.classes = static_cast<int>((*shape)(0, 0));
    h.subcenters = static_cast<int>((*shape)(0, 1));
    h.weights = std::move(*head);
    if (h.classes < 1 || h.subcenters < 1 || h.weights.rows() != static_cast<Eigen::Index>(h.classes) * h.subcenters ||
        h.weights.cols() != c.extractor.output_dim())
      throw DataError(path.string() + ": classifier head shape mismatch");
    c.head = std::move(h);
  }
  return c;
}

// ------------------------------------------------------------------ config

void TrainConfig::validate() const {
  if (!(lr_initial > 0.0) || !(lr_final > 0.0)) throw ConfigError("learning rates must be positive");
  if (lr_final > lr_initial) throw ConfigError("lr-final must not exceed lr-initial");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight-decay must be >= 0");
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("batch-size must be >= 1");
  if (!(segment_seconds > 0.0)) throw ConfigError("segment-seconds must be positive");
}

double TrainConfig::learning_rate(int epoch) const {
  if (epochs <= 1 || lr_initial == lr_final) return lr_initial;
  const double t = static_cast<double>(epoch) / static_cast<double>(epochs - 1);
  return lr_initial * std::pow(lr_final / lr_initial, t);
}

TrainConfig TrainConfig::stage1() { return TrainConfig{}; }

TrainConfig TrainConfig::finetune() {
  TrainConfig c;
  c.lr_initial = 0.001;
  c.lr_final = 0.00005;
  c.epochs = 5;
  c.segment_seconds = 6.0;
  return c;
}

TrainConfig TrainConfig::adaptation() {
  TrainConfig c;
  c.lr_initial = 0.001;
  c.lr_final = 0.00001;
  c.epochs = 10;
  return c;
}

void AdaptConfig::validate() const {
  train.validate();
  source_loss.validate();
  target_loss.validate();
  correction.validate();
  if (dlglc && mode == nn::JointMode::kApl)
    throw ConfigError("DLG-LC needs per-sample class labels; it cannot gate the APL objective");
  if (warmup_epochs < 0) throw ConfigError("warmup epochs must be >= 0");
  if (!(apl_w > 0.0)) throw ConfigError("APL scale w must be positive");
}

// ----------------------------------------------------------------- dataset

void Dataset::validate() const {
  const auto n = static_cast<Eigen::Index>(names.size());
  if (features.rows() != n) throw DataError("dataset has " + std::to_string(names.size()) + " names and " +
                                            std::to_string(features.rows()) + " feature rows");
  if (!features.allFinite()) throw DataError("dataset features are not finite");
  if (noise_factor.size() && (noise_factor.rows() != features.cols() || noise_factor.cols() != features.cols()))
    throw DataError("segment noise factor does not match the feature dim");
  if (!labels.empty()) {
    if (labels.size() != names.size()) throw DataError("dataset labels do not cover every row");
    for (int y : labels)
      if (y < 0 || y >= classes) throw DataError("label " + std::to_string(y) + " outside [0, " + std::to_string(classes) + ")");
  }
  if (!durations.empty() && durations.size() != names.size()) throw DataError("dataset durations do not cover every row");
}

MatrixXd Dataset::segments(const std::vector<std::size_t>& rows, double seconds, Rng& rng) const {
  MatrixXd x = gather(features, rows);
  if (noise_factor.size() == 0) return x;
  const MatrixXd z = gaussian(x.rows(), x.cols(), rng);
  return x + z * noise_factor.transpose() / std::sqrt(seconds);
}

Dataset Dataset::relabeled(std::vector<int> new_labels, int new_classes) const {
  Dataset d = *this;
  d.labels = std::move(new_labels);
  d.classes = new_classes;
  d.validate();
  return d;
}

Batch make_joint_batch(const Dataset& source, const Dataset& target, int n, bool apl, double seconds, Rng& rng) {
  if (source.size() == 0 || target.size() == 0) throw DataError("joint batches need non-empty source and target sets");
  if (n < 1) throw ConfigError("batch size must be >= 1");
  if (static_cast<std::size_t>(n) > source.size() || static_cast<std::size_t>(n) > target.size())
    throw ConfigError("batch size " + std::to_string(n) + " exceeds a dataset (" + std::to_string(source.size()) +
                      " source, " + std::to_string(target.size()) + " target)");
  if (!source.labeled()) throw DataError("source data must be labeled");
  Batch b;
  b.source_rows = permutation(source.size(), rng);
  b.source_rows.resize(static_cast<std::size_t>(n));
  b.target_rows = permutation(target.size(), rng);
  b.target_rows.resize(static_cast<std::size_t>(n));
  b.source = source.segments(b.source_rows, seconds, rng);
  for (auto r : b.source_rows) b.source_labels.push_back(source.labels[r]);
  b.target = target.segments(b.target_rows, seconds, rng);
  if (apl) b.target_second = target.segments(b.target_rows, seconds, rng);
  if (target.labeled())
    for (auto r : b.target_rows) b.target_labels.push_back(target.labels[r]);
  return b;
}

std::string format_epoch_log(const EpochLog& log) {
  std::string s = "epoch=" + std::to_string(log.epoch) + " loss=" + io::format_real(log.loss) +
                  " lr=" + io::format_real(log.lr);
  if (log.tau) s += " gate-tau=" + io::format_real(*log.tau);
  if (log.reliable_fraction) s += " reliable-fraction=" + io::format_real(*log.reliable_fraction);
  return s;
}

// ---------------------------------------------------------------- training

TrainResult train_supervised(const ToyExtractor& init, const Dataset& data, const TrainConfig& cfg,
                             const nn::LossConfig& loss, const nn::ClassifierHead* head) {
  cfg.validate();
  data.validate();
  init.validate();
  if (!data.labeled()) throw DataError("supervised training needs labeled data");
  loss.validate(data.classes);
  TrainResult r;
  r.extractor = init;
  Rng init_rng(stream(cfg.seed, "head"));
  r.head = head ? *head : nn::ClassifierHead::random(data.classes, loss.subcenters, init.output_dim(), init_rng);
  if (r.head.classes != data.classes || r.head.subcenters != loss.subcenters || r.head.dim() != init.output_dim())
    throw ConfigError("classifier head does not match the data classes, subcenters or embedding dim");

  const std::size_t bs = std::min<std::size_t>(static_cast<std::size_t>(cfg.batch_size), data.size());
  const std::size_t batches = data.size() / bs;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = cfg.learning_rate(epoch);
    Rng order_rng(stream(cfg.seed, "order/" + std::to_string(epoch)));
    const auto perm = permutation(data.size(), order_rng);
    double total = 0.0;
    for (std::size_t b = 0; b < batches; ++b) {
      Rng rng(stream(cfg.seed, "batch/" + std::to_string(epoch) + "/" + std::to_string(b)));
      const std::vector<std::size_t> rows(perm.begin() + static_cast<std::ptrdiff_t>(b * bs),
                                          perm.begin() + static_cast<std::ptrdiff_t>((b + 1) * bs));
      const MatrixXd x = data.segments(rows, cfg.segment_seconds, rng);
      std::vector<int> labels;
      for (auto i : rows) labels.push_back(data.labels[i]);
      const nn::GradBundle g = nn::margin_softmax_loss(r.extractor.embed(x), labels, r.head, loss);
      check_finite_loss(g.loss, epoch, static_cast<int>(b));
      step_extractor(r.extractor, x, g.grad_embeddings, lr, cfg.weight_decay);
      sgd(r.head.weights, g.grad_weights, lr, cfg.weight_decay);
      total += g.loss;
    }
    r.log.push_back({epoch, total / static_cast<double>(batches), lr, std::nullopt, std::nullopt});
  }
  return r;
}

TrainResult finetune(const TrainResult& stage1, const Dataset& data, const TrainConfig& cfg,
                     const nn::LossConfig& loss) {
  if (loss.intertopk_penalty > 0.0 || loss.intertopk_enabled())
    throw ConfigError("large-margin fine-tuning runs without the Inter-TopK penalty (set it to 0)");
  return train_supervised(stage1.extractor, data, cfg, loss, &stage1.head);
}

TrainResult adapt_joint(const TrainResult& pretrained, const Dataset& source, const Dataset& target,
                        const AdaptConfig& cfg) {
  cfg.validate();
  source.validate();
  target.validate();
  if (!source.labeled()) throw DataError("source data must be labeled");
  const nn::JointMode mode = cfg.mode;
  const bool classify = mode != nn::JointMode::kApl;
  if (classify && !target.labeled())
    throw ConfigError("TCL/OCL adaptation needs pseudo labels on the target data");
  if (pretrained.head.classes != source.classes)
    throw ConfigError("pretrained head has " + std::to_string(pretrained.head.classes) + " classes, source data " +
                      std::to_string(source.classes));

  TrainResult r;
  r.extractor = pretrained.extractor;
  r.head = pretrained.head;
  const int S = source.classes;
  Rng init_rng(stream(cfg.train.seed, "target-head"));
  if (classify) {
    const MatrixXd rows =
        centroid_rows(r.extractor.embed(target.features), target.labels, target.classes, cfg.target_loss.subcenters, init_rng);
    if (mode == nn::JointMode::kTcl) {
      nn::ClassifierHead th;
      th.classes = target.classes;
      th.subcenters = cfg.target_loss.subcenters;
      th.id = nn::HeadId::kTarget;
      th.weights = rows;
      r.target_head = std::move(th);
    } else {
      if (cfg.target_loss.subcenters != r.head.subcenters)
        throw ConfigError("OCL shares the source head; target subcenters must match");
      MatrixXd w(r.head.weights.rows() + rows.rows(), r.head.weights.cols());
      // Target rows keep the scale of the trained source rows.
      const double scale = r.head.weights.rowwise().norm().mean();
      w << r.head.weights, rows * scale;
      r.head.weights = std::move(w);
      r.head.classes = S + target.classes;
    }
  }

  const std::size_t n = std::min({static_cast<std::size_t>(cfg.train.batch_size), source.size(), target.size()});
  const std::size_t batches = std::min(source.size(), target.size()) / n;
  double apl_w = cfg.apl_w, apl_b = cfg.apl_b;
  dlg::LossTrace trace(cfg.correction.ema_decay);
  std::optional<nn::SoftTargets> soft_all;

  for (int epoch = 0; epoch < cfg.train.epochs; ++epoch) {
    const double lr = cfg.train.learning_rate(epoch);
    Rng order_rng(stream(cfg.train.seed, "order/" + std::to_string(epoch)));
    const auto sperm = permutation(source.size(), order_rng);
    const auto tperm = permutation(target.size(), order_rng);
    double total = 0.0;
    for (std::size_t b = 0; b < batches; ++b) {
      Rng rng(stream(cfg.train.seed, "batch/" + std::to_string(epoch) + "/" + std::to_string(b)));
      const auto lo = static_cast<std::ptrdiff_t>(b * n), hi = static_cast<std::ptrdiff_t>((b + 1) * n);
      const std::vector<std::size_t> srows(sperm.begin() + lo, sperm.begin() + hi);
      const std::vector<std::size_t> trows(tperm.begin() + lo, tperm.begin() + hi);
      const MatrixXd xs = source.segments(srows, cfg.train.segment_seconds, rng);
      const MatrixXd xt = target.segments(trows, cfg.train.segment_seconds, rng);
      MatrixXd xt2;
      if (!classify) xt2 = target.segments(trows, cfg.train.segment_seconds, rng);

      nn::JointInputs in;
      in.source.embeddings = r.extractor.embed(xs);
      for (auto i : srows) in.source.labels.push_back(source.labels[i]);
      in.source_head = &r.head;
      in.source_classes = S;
      in.source_cfg = cfg.source_loss;
      in.mode = mode;
      in.target_cfg = cfg.target_loss;
      nn::SoftTargets soft;
      if (classify) {
        nn::MarginBatch tb;
        tb.embeddings = r.extractor.embed(xt);
        for (auto i : trows) tb.labels.push_back(target.labels[i]);
        in.target = std::move(tb);
        if (r.target_head) in.target_head = &*r.target_head;
        if (soft_all) {
          soft.distributions = gather(soft_all->distributions, trows);
          soft.weights.resize(static_cast<Eigen::Index>(trows.size()));
          for (std::size_t i = 0; i < trows.size(); ++i)
            soft.weights[static_cast<Eigen::Index>(i)] = soft_all->weights[static_cast<Eigen::Index>(trows[i])];
          in.target_soft = &soft;
        }
      } else {
        in.apl = nn::AplBatch{r.extractor.embed(xt), r.extractor.embed(xt2), apl_w, apl_b};
      }

      const nn::JointGrad g = nn::joint_loss(in);
      check_finite_loss(g.loss, epoch, static_cast<int>(b));
      MatrixXd grad_p = xs.transpose() * g.source.grad_embeddings;
      VectorXd grad_b = g.source.grad_embeddings.colwise().sum().transpose();
      MatrixXd grad_head = g.source.grad_weights;
      if (g.target) {
        const MatrixXd& ge = g.target->grad_embeddings;
        if (classify) {
          grad_p += xt.transpose() * ge;
          grad_b += ge.colwise().sum().transpose();
          if (mode == nn::JointMode::kOcl) {
            grad_head += g.target->grad_weights;
          } else {
            sgd(r.target_head->weights, g.target->grad_weights, lr, cfg.train.weight_decay);
          }
        } else {
          const Eigen::Index m = xt.rows();
          grad_p += xt.transpose() * ge.topRows(m) + xt2.transpose() * ge.bottomRows(m);
          grad_b += ge.colwise().sum().transpose();
          apl_w = std::max(1e-3, apl_w - lr * g.target->grad_params[0]);
          apl_b -= lr * g.target->grad_params[1];
        }
      }
      sgd(r.extractor.projection, grad_p, lr, cfg.train.weight_decay);
      r.extractor.bias -= lr * grad_b;
      sgd(r.head.weights, grad_head, lr, cfg.train.weight_decay);
      total += g.loss;
    }
    EpochLog log{epoch, total / static_cast<double>(batches), lr, std::nullopt, std::nullopt};

    if (cfg.dlglc) {
      // Per-sample losses of the clean target set under its pseudo labels.
      const MatrixXd emb = r.extractor.embed(target.features);
      std::vector<int> labels = target.labels;
      const nn::ClassifierHead& head = r.target_head ? *r.target_head : r.head;
      if (mode == nn::JointMode::kOcl)
        for (int& y : labels) y += S;
      const VectorXd l = nn::margin_softmax_sample_losses(emb, labels, head, cfg.target_loss);
      trace.update(target.names, std::vector<double>(l.data(), l.data() + l.size()));
      if (epoch + 1 >= cfg.warmup_epochs) {
        const dlg::GateModel gate =
            dlg::fit_loss_gmm(trace.values(target.names), stream(cfg.train.seed, "gate/" + std::to_string(epoch)));
        MatrixXd logits = cfg.target_loss.scale * nn::class_cosines(emb, head);
        if (mode == nn::JointMode::kOcl) logits = logits.rightCols(target.classes).eval();
        dlg::Correction c = dlg::select_and_correct(trace.values(target.names), gate, logits, target.labels,
                                                    cfg.correction);
        soft_all = nn::SoftTargets{c.targets, c.weights};
        log.tau = gate.threshold;
        log.reliable_fraction = c.reliable_fraction();
        r.last_gate = gate;
        r.last_correction = std::move(c);
      }
    }
    r.log.push_back(log);
  }
  return r;
}

}  // namespace spkv::train
