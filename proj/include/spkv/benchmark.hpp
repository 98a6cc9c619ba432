// include/spkv/benchmark.hpp

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

#include "spkv/trainer.hpp"

#include <cstdint>
#include <vector>

namespace spkv::train {

// ------------------------------------------------------------ benchmark

struct BenchmarkConfig {
  int input_dim = 32;
  int speaker_dim = 8;    // leading input dims carrying speaker identity
  int embedding_dim = 16;
  int source_speakers = 60;
  int source_utterances = 20;
  int target_speakers = 40;      // unlabeled adaptation data
  int target_utterances = 20;
  int eval_speakers = 40;        // held out, scored by trials
  int eval_utterances = 8;
  double kappa = 60.0;           // vMF concentration of utterances around the speaker
  double speaker_radius = 3.0;
  double nuisance_sd = 1.0;
  double source_noise_sd = 0.3;  // segment noise per sqrt(second)
  double target_noise_sd = 2.0;  // strongest target segment-noise direction
  double rotation = 0.6;         // radians per plane of the domain rotation
  double translation = 4.0;
  int genres = 4;                // target speakers are each recorded in one genre
  double genre_strength = 5.0;
  double min_duration = 1.0;
  double max_duration = 30.0;

  void validate() const;
};

struct Benchmark {
  Dataset source;        // labeled by speaker
  Dataset target;        // unlabeled adaptation data
  Dataset eval;          // held-out target-domain speakers
  Dataset dev;           // labeled target-domain speakers for calibration
  std::vector<int> target_truth;  // speaker of every target row
  std::vector<int> eval_truth;
  std::vector<int> dev_truth;
  io::TrialList trials;      // all eval pairs, labeled
  io::TrialList dev_trials;  // all dev pairs, labeled
};

/// Two-domain vMF speaker benchmark; the target domain is a fixed rotation
/// and translation of the source generative process with stronger,
/// anisotropic segment noise.
Benchmark make_benchmark(const BenchmarkConfig& cfg, std::uint64_t seed);

/// Embeddings of every row: one segment of the row's duration (or
/// `seconds` when positive), drawn from a stream keyed by seed and name.
EmbeddingSet embed_dataset(const ToyExtractor& ex, const Dataset& data, std::uint64_t seed, double seconds = 0.0);

/// Target EER with statistic adaptation (statistics from the unlabeled
/// target set) and cosine scoring.
double evaluate_eer(const ToyExtractor& ex, const Benchmark& bench, std::uint64_t seed);

/// Spherical k-means pseudo labels of the statistic-adapted target set.
std::vector<int> estimate_pseudo_labels(const ToyExtractor& ex, const Benchmark& bench, int k, std::uint64_t seed);

/// Schedules of the desk-scale runs. The toy extractor starts from random
/// weights and trains for a few dozen epochs, so both stages use larger
/// learning rates than the stage defaults.
struct DeskProtocol {
  BenchmarkConfig bench;
  TrainConfig pretrain;
  AdaptConfig adapt;
  int cohort_top_n = 20;
  int cohort_clusters = 160;  // k-means clusters forming the pseudo-speaker cohort

  static DeskProtocol defaults();
};

/// Stage-I model of the benchmark's source domain.
TrainResult pretrain(const DeskProtocol& p, const Benchmark& bench, std::uint64_t seed);

/// Target EERs along the back-end chain of a pre-trained model.
struct ScoringChain {
  double raw = 0.0;            // cosine
  double adapted = 0.0;        // + statistic adaptation
  double asnorm_truth = 0.0;   // + as-norm, cohort from true target speakers
  double asnorm_pseudo = 0.0;  // + as-norm, cohort from k-means clusters
  double calibrated = 0.0;     // pseudo cohort as-norm + duration-aware calibration
};
ScoringChain run_scoring_chain(const DeskProtocol& p, std::uint64_t seed);

/// Target EERs (statistic adaptation + cosine) of every joint-training mode.
struct AdaptationSuite {
  double adapted_only = 0.0;
  double apl = 0.0;
  double tcl = 0.0;
  double tcl_dlg = 0.0;
  double ocl = 0.0;
  double ocl_dlg = 0.0;
  double pseudo_rand_index = 0.0;  // APL-system clusters vs true target speakers
};
AdaptationSuite run_adaptation_suite(const DeskProtocol& p, std::uint64_t seed);

}  // namespace spkv::train
