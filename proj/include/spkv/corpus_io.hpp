// include/spkv/corpus_io.hpp

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

#include "spkv/types.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace spkv::io {

enum class Domain { kSource, kTarget };

std::string_view to_string(Domain d);
Domain parse_domain(std::string_view s);

struct ManifestEntry {
  std::string utt;
  std::optional<std::string> speaker;
  Domain domain = Domain::kSource;
  double duration = 0.0;
  // Augmentation tags; a clean, unperturbed utterance has ratio 1 and "clean".
  double speed_ratio = 1.0;
  std::string augment = "clean";

  bool operator==(const ManifestEntry&) const = default;
};

/// Utterance inventory of a corpus. Text form, one entry per line:
///   utt speaker|- source|target duration [speed-ratio augment]
class Manifest {
 public:
  Manifest() = default;
  explicit Manifest(std::vector<ManifestEntry> entries);

  void add(ManifestEntry e);
  const std::vector<ManifestEntry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  const ManifestEntry* find(const std::string& utt) const;

  /// Throws DataError on duplicate ids, non-positive durations or source
  /// entries without a speaker.
  void validate() const;

  std::size_t num_speakers() const;

  bool operator==(const Manifest& o) const { return entries_ == o.entries_; }

 private:
  std::vector<ManifestEntry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

Manifest read_manifest(const std::filesystem::path& path);
void write_manifest(const Manifest& m, const std::filesystem::path& path);

/// Named fixed-dimension float vectors, stored contiguously row by row.
class EmbeddingSet {
 public:
  explicit EmbeddingSet(int dim = 0);
  EmbeddingSet(std::vector<std::string> names, const RowMatrixXf& vectors);

  int dim() const { return dim_; }
  std::size_t size() const { return names_.size(); }
  bool empty() const { return names_.empty(); }

  /// Throws DataError for wrong length, duplicate name or non-finite values.
  void add(std::string name, const Eigen::Ref<const Eigen::VectorXf>& v);
  void add(std::string name, const Eigen::Ref<const Eigen::VectorXd>& v);

  const std::string& name(std::size_t i) const { return names_[i]; }
  const std::vector<std::string>& names() const { return names_; }
  std::optional<std::size_t> find(const std::string& name) const;
  std::size_t index_of(const std::string& name) const;  // throws DataError

  Eigen::Map<const Eigen::VectorXf> vector(std::size_t i) const {
    return {data_.data() + i * static_cast<std::size_t>(dim_), dim_};
  }
  Eigen::Map<const RowMatrixXf> matrix() const {
    return {data_.data(), static_cast<Eigen::Index>(size()), dim_};
  }
  /// Double-precision copy (rows = records).
  MatrixXd to_double() const { return matrix().cast<double>(); }

  bool operator==(const EmbeddingSet& o) const;

 private:
  int dim_ = 0;
  std::vector<std::string> names_;
  std::vector<float> data_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Binary layout (little endian):
///   "EMB1" | u32 dim | u64 count | count x (u16 name-len | name | dim x f32)
EmbeddingSet read_embedding_set(const std::filesystem::path& path);
void write_embedding_set(const EmbeddingSet& set, const std::filesystem::path& path);
std::vector<char> encode_embedding_set(const EmbeddingSet& set);
EmbeddingSet decode_embedding_set(std::string_view bytes, const std::string& source);

enum class Label { kTarget, kNontarget };

struct Trial {
  std::string enroll;
  std::string test;
  std::optional<Label> label;
  int line = 0;
};

/// Enrollment/test pairs; labels are either present on every pair or on none.
class TrialList {
 public:
  TrialList() = default;
  explicit TrialList(std::vector<Trial> pairs);

  const std::vector<Trial>& pairs() const { return pairs_; }
  std::size_t size() const { return pairs_.size(); }
  bool labeled() const { return !pairs_.empty() && pairs_.front().label.has_value(); }
  /// 1 for target, 0 for nontarget. Throws DataError when unlabeled.
  std::vector<int> labels() const;

  bool operator==(const TrialList& o) const;

 private:
  std::vector<Trial> pairs_;
};

/// Lines `enroll test [label]`, label in {target, nontarget, 1, 0}.
TrialList parse_trial_list(std::string_view text, const std::string& source = "<trials>");
TrialList read_trial_list(const std::filesystem::path& path);
void write_trial_list(const TrialList& trials, const std::filesystem::path& path);

struct ScoreSet {
  TrialList trials;
  std::vector<double> scores;

  /// Throws DataError when sizes differ or a score is non-finite.
  void validate() const;
};

/// Lines `enroll test score`.
ScoreSet parse_score_file(std::string_view text, const std::string& source = "<scores>");
ScoreSet read_score_file(const std::filesystem::path& path);
void write_score_file(const ScoreSet& scores, const std::filesystem::path& path);

/// Attaches the labels of `labeled` to `scores`; pairs must match in order.
ScoreSet attach_labels(ScoreSet scores, const TrialList& labeled);

/// Named double matrices (feature matrices, model checkpoints).
///   "MAT1" | u64 count | count x (u16 name-len | name | u32 rows | u32 cols | rows*cols f64, row major)
using MatrixArchive = std::vector<std::pair<std::string, MatrixXd>>;
MatrixArchive read_matrix_archive(const std::filesystem::path& path);
void write_matrix_archive(const MatrixArchive& archive, const std::filesystem::path& path);

/// Two-column text `key value` (utt2spk, pseudo labels). Order preserved.
std::vector<std::pair<std::string, std::string>> read_pairs(const std::filesystem::path& path);
void write_pairs(const std::vector<std::pair<std::string, std::string>>& pairs,
                 const std::filesystem::path& path);

/// Shortest round-trip decimal form of a double.
std::string format_real(double v);
double parse_real(std::string_view s, const std::string& what);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view text);

}  // namespace spkv::io
