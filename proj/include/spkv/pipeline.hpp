// include/spkv/pipeline.hpp

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

#include "spkv/adaptation.hpp"
#include "spkv/config.hpp"
#include "spkv/corpus_io.hpp"
#include "spkv/scoring.hpp"
#include "spkv/trainer.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

namespace spkv::cli {

struct Stage {
  std::string name;
  std::string detail;
  std::vector<std::string> outputs;  // file names inside the run directory
};

std::string format_plan(const std::vector<Stage>& plan);

/// Runs the configured chain into `out_dir`, writing `<stage>.<ext>`
/// artifacts, `config.txt` and `manifest.txt` (input and artifact hashes).
/// With `dry_run` nothing is computed or written; the plan is returned
/// either way. Errors keep their type and are prefixed with the stage name.
std::vector<Stage> run_pipeline(const PipelineConfig& cfg, const std::filesystem::path& out_dir, bool dry_run = false);

/// Hex FNV-1a of a file's bytes.
std::string file_hash(const std::filesystem::path& path);

// ---------------------------------------------------------------- helpers
// Shared by the pipeline and the single-stage subcommands.

/// One utterance id per line.
std::vector<std::string> read_name_list(const std::filesystem::path& path);
void write_name_list(const std::vector<std::string>& names, const std::filesystem::path& path);

io::EmbeddingSet subset(const io::EmbeddingSet& emb, const std::vector<std::string>& names);
std::map<std::string, std::string> read_utt2spk(const std::filesystem::path& path);
std::unordered_map<std::string, double> durations_of(const io::Manifest& m);

/// Cohort of the utterances listed in `speaker_of`.
scoring::Cohort speaker_cohort(const io::EmbeddingSet& emb, const std::map<std::string, std::string>& speaker_of);

/// Joint-training inputs: source rows are the manifest's labeled source
/// utterances, target rows the listed ids (labels from `pseudo` when given).
struct JointData {
  train::Dataset source;
  train::Dataset target;
  train::Dataset all;  // every feature row, target-domain noise
};
JointData load_joint_data(const PipelineConfig& cfg, const io::EmbeddingSet& features, const io::Manifest& manifest,
                          const std::vector<std::string>& target, const adapt::PseudoLabels* pseudo);

// -------------------------------------------------------------- synthetic

struct SynthOptions {
  int systems = 3;
  std::uint64_t seed = 0;
};

/// Writes a complete input tree for both pipelines into `dir`: per-system
/// embeddings from a model pre-trained on the two-domain benchmark (systems
/// differ by independent segment-noise draws), eval and dev trials, cohort
/// utt2spk, manifest, target list, features, noise factors, checkpoint and
/// `config.ini`.
void write_synthetic_inputs(const std::filesystem::path& dir, const SynthOptions& opts);

}  // namespace spkv::cli
