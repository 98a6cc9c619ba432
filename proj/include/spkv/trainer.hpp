// include/spkv/trainer.hpp

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

#pragma once

#include "spkv/corpus_io.hpp"
#include "spkv/dlglc.hpp"
#include "spkv/losses.hpp"
#include "spkv/types.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace spkv::train {

using io::EmbeddingSet;

/// Affine map from utterance features to embeddings: e = x P + b.
struct ToyExtractor {
  MatrixXd projection;  // D_in x D_out
  VectorXd bias;        // D_out

  int input_dim() const { return static_cast<int>(projection.rows()); }
  int output_dim() const { return static_cast<int>(projection.cols()); }

  /// Rows of `x` are inputs; returns one embedding per row.
  MatrixXd embed(const MatrixXd& x) const;
  void validate() const;  // DataError on shape mismatch or non-finite values

  static ToyExtractor random(int input_dim, int output_dim, Rng& rng);
};

/// Checkpoints go through the matrix archive ("projection", "bias", and the
/// classifier heads when present).
struct Checkpoint {
  ToyExtractor extractor;
  std::optional<nn::ClassifierHead> head;
};
void write_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint read_checkpoint(const std::filesystem::path& path);

struct TrainConfig {
  double lr_initial = 0.1;
  double lr_final = 0.00005;
  double weight_decay = 1e-4;
  int epochs = 30;
  int batch_size = 64;
  double segment_seconds = 2.0;
  std::uint64_t seed = 0;

  void validate() const;  // ConfigError
  /// Exponential decay from lr_initial (first epoch) to lr_final (last).
  double learning_rate(int epoch) const;

  static TrainConfig stage1();
  static TrainConfig finetune();    // 6 s segments
  static TrainConfig adaptation();  // 0.001 -> 0.00001
};

/// Utterance-level inputs. A training segment of `s` seconds is the clean
/// vector plus segment noise: x + noise_factor * z / sqrt(s), z ~ N(0, I).
struct Dataset {
  std::vector<std::string> names;
  MatrixXd features;        // N x D_in
  std::vector<int> labels;  // speaker or pseudo label per row, empty when unlabeled
  int classes = 0;
  MatrixXd noise_factor;    // D_in x D_in
  std::vector<double> durations;

  std::size_t size() const { return names.size(); }
  bool labeled() const { return !labels.empty(); }
  void validate() const;  // DataError

  MatrixXd segments(const std::vector<std::size_t>& rows, double seconds, Rng& rng) const;
  /// A copy carrying `labels` (one per row, values in [0, classes)).
  Dataset relabeled(std::vector<int> labels, int classes) const;
};

struct Batch {
  std::vector<std::size_t> source_rows;
  MatrixXd source;
  std::vector<int> source_labels;
  std::vector<std::size_t> target_rows;
  MatrixXd target;         // first segment of every target utterance
  MatrixXd target_second;  // APL only: a second segment of the same utterances
  std::vector<int> target_labels;
};

/// n source and n target samples drawn without replacement. In APL mode every
/// target utterance contributes two independent segments.
Batch make_joint_batch(const Dataset& source, const Dataset& target, int n, bool apl, double seconds, Rng& rng);

struct EpochLog {
  int epoch = 0;
  double loss = 0.0;
  double lr = 0.0;
  std::optional<double> tau;
  std::optional<double> reliable_fraction;
};
std::string format_epoch_log(const EpochLog& log);

struct TrainResult {
  ToyExtractor extractor;
  nn::ClassifierHead head;                         // source head (OCL: source + target classes)
  std::optional<nn::ClassifierHead> target_head;  // TCL
  std::vector<EpochLog> log;
  std::optional<dlg::Correction> last_correction;
  std::optional<dlg::GateModel> last_gate;
};

/// Stage-I classification training with SGD. A fresh head is drawn when
/// `head` is null. Throws NumericalError if the loss diverges.
TrainResult train_supervised(const ToyExtractor& init, const Dataset& data, const TrainConfig& cfg,
                             const nn::LossConfig& loss, const nn::ClassifierHead* head = nullptr);

/// Large-margin fine-tuning from a stage-I result. Rejects configurations
/// that keep the Inter-TopK penalty.
TrainResult finetune(const TrainResult& stage1, const Dataset& data, const TrainConfig& cfg,
                     const nn::LossConfig& loss);

struct AdaptConfig {
  TrainConfig train = TrainConfig::adaptation();
  nn::LossConfig source_loss;
  nn::LossConfig target_loss;
  nn::JointMode mode = nn::JointMode::kApl;
  bool dlglc = false;
  dlg::CorrectionConfig correction;
  int warmup_epochs = 1;  // epochs before the first gate fit
  double apl_w = 10.0;
  double apl_b = -5.0;

  void validate() const;  // ConfigError
};

/// Joint source + target training. TCL/OCL need pseudo labels on `target`;
/// their target classifier starts from the pseudo-class centroids.
TrainResult adapt_joint(const TrainResult& pretrained, const Dataset& source, const Dataset& target,
                        const AdaptConfig& cfg);

}  // namespace spkv::train
