// include/spkv/config.hpp

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

#include "spkv/dlglc.hpp"
#include "spkv/featpipe.hpp"
#include "spkv/losses.hpp"
#include "spkv/scoring.hpp"
#include "spkv/trainer.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace spkv::cli {

enum class PipelineKind { kTrack1Score, kTrack3Adapt };
std::string_view to_string(PipelineKind k);
PipelineKind parse_pipeline_kind(std::string_view s);  // ConfigError

enum class CalibrationMode { kAuto, kDuration, kAffine, kNone };
enum class FusionMode { kLearned, kEqual };
enum class JointChoice { kNone, kApl, kTcl, kOcl };
enum class CohortSource { kSpeakers, kPseudo };

struct ScoringSection {
  int cohort_top_n = 600;
  CalibrationMode calibration = CalibrationMode::kAuto;
  FusionMode fusion = FusionMode::kLearned;
  scoring::DcfParams dcf;
};

struct AdaptationSection {
  bool enabled = true;
  bool kmeans = false;
  int clusters = 0;
  int kmeans_max_iter = 100;
  JointChoice joint = JointChoice::kNone;
  CohortSource cohort = CohortSource::kSpeakers;
};

struct DlgSection {
  bool enabled = false;
  dlg::CorrectionConfig correction;
  int warmup_epochs = 1;
};

struct TrainSection {
  train::TrainConfig train = train::TrainConfig::adaptation();
  double segment_noise = 0.3;  // isotropic segment noise sd when no noise archive is given
  double apl_w = 10.0;
  double apl_b = -5.0;
};

/// Input files; relative paths are resolved against the config file.
struct PathsSection {
  std::vector<std::filesystem::path> embeddings;  // one file per system
  std::filesystem::path trials;
  std::filesystem::path dev_trials;
  std::filesystem::path cohort;    // utt2spk of cohort utterances
  std::filesystem::path manifest;  // durations, domains, speakers
  std::filesystem::path target;    // unlabeled target utterance ids, one per line
  std::filesystem::path checkpoint;
  std::filesystem::path features;  // utterance-level extractor inputs (EMB1)
  std::filesystem::path noise;     // MAT1 with "source" and "target" segment-noise factors
};

struct PipelineConfig {
  std::uint64_t seed = 0;
  int jobs = 1;
  PipelineKind pipeline = PipelineKind::kTrack1Score;
  feat::AugmentConfig features;
  nn::LossConfig loss;
  ScoringSection scoring;
  AdaptationSection adaptation;
  DlgSection dlglc;
  TrainSection train;
  PathsSection paths;

  /// Cross-key checks (ConfigError).
  void validate() const;
};

/// Sectioned `key=value` text. Keys before the first section header (or
/// under `[global]`) are global; several pairs may share a line. Unknown
/// keys, bad values and range violations raise ConfigError naming source,
/// line, section and key.
PipelineConfig parse_config(std::string_view text, const std::string& source = "<config>",
                            const std::filesystem::path& base_dir = {});
PipelineConfig load_config(const std::filesystem::path& path);

/// Every key with its value and a one-line description. `with_jobs` false
/// leaves out the scheduling key, which never affects results.
std::string dump_config(const PipelineConfig& cfg, bool with_jobs = true);
std::string dump_defaults();

/// Environment variable naming the default config file.
inline constexpr const char* kConfigEnv = "SPKV_CONFIG";

/// Derived settings for library calls.
train::AdaptConfig adapt_config(const PipelineConfig& cfg);

}  // namespace spkv::cli
