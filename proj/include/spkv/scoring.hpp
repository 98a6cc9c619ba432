// include/spkv/scoring.hpp

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
#include "spkv/types.hpp"

#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace spkv::scoring {

using io::EmbeddingSet;
using io::ScoreSet;
using io::TrialList;

/// Cosine similarity of every pair. Throws DataError for a missing name or a
/// zero vector.
ScoreSet score_trials(const EmbeddingSet& emb, const TrialList& trials, int jobs = 1);

/// Imposter cohort: one length-normalized mean embedding per speaker, named
/// by speaker.
struct Cohort {
  EmbeddingSet embeddings;

  std::size_t size() const { return embeddings.size(); }
};

/// Speakers appear in the cohort in sorted order.
Cohort build_cohort(const EmbeddingSet& emb, const std::map<std::string, std::string>& speaker_of);

/// Mean and population standard deviation of the top_n largest cohort
/// scores of one embedding.
struct CohortStats {
  double mean = 0.0;
  double stddev = 0.0;
};

CohortStats cohort_stats(const Eigen::Ref<const VectorXd>& unit_embedding, const MatrixXd& unit_cohort, int top_n);

/// Adaptive s-norm, top-n selection per side. Throws NumericalError when a
/// side has zero spread.
ScoreSet as_norm(const ScoreSet& raw, const EmbeddingSet& emb, const Cohort& cohort, int top_n = 600,
                 int jobs = 1);

/// Logistic-regression calibration over [1, s, quality...]; weights are
/// (bias, score coefficient, quality coefficients...).
struct CalibrationModel {
  VectorXd weights = VectorXd::Zero(2);
  bool degenerate = false;

  int quality_dims() const { return static_cast<int>(weights.size()) - 2; }
  double bias() const { return weights[0]; }
  double score_coef() const { return weights[1]; }
};

struct LogisticOptions {
  double prior = 0.5;       // effective target prior of the weighted objective
  double ridge = 1e-6;      // keeps separable sets bounded
  double grad_tol = 1e-8;
  int max_iter = 200;
  double degenerate_tol = 1e-3;
};

/// Prior-weighted logistic regression on a design matrix (rows = trials,
/// bias column included by the caller). Newton with backtracking.
VectorXd fit_logistic(const MatrixXd& features, const std::vector<int>& labels, const LogisticOptions& opts = {});

/// `quality` is #pairs x q, or null for the affine model.
CalibrationModel train_calibration(const ScoreSet& scores, const MatrixXd* quality = nullptr,
                                   const LogisticOptions& opts = {});
ScoreSet apply_calibration(const CalibrationModel& model, const ScoreSet& raw, const MatrixXd* quality = nullptr);

/// Log enrollment and log test durations per trial (#pairs x 2).
MatrixXd duration_quality(const TrialList& trials, const std::unordered_map<std::string, double>& duration);

void write_calibration(const CalibrationModel& model, const std::filesystem::path& path);
CalibrationModel read_calibration(const std::filesystem::path& path);

/// Scorewise weighted mean; weights nonnegative and not all zero.
ScoreSet fuse_scores(const std::vector<ScoreSet>& sets, const std::vector<double>& weights);
/// Equal weights.
ScoreSet fuse_scores(const std::vector<ScoreSet>& sets);

/// Fusion weights from a logistic fit on labeled validation scores: negative
/// coefficients are clipped, the rest normalized to sum to one.
std::vector<double> learn_fusion_weights(const std::vector<ScoreSet>& validation, const LogisticOptions& opts = {});

struct DcfParams {
  double p_target = 0.05;
  double c_miss = 1.0;
  double c_fa = 1.0;
};

struct MetricsReport {
  double eer = 0.0;
  double min_dcf = 0.0;
  double threshold_at_eer = 0.0;
  DcfParams params;
};

/// (P_miss, P_fa) after rejecting everything at or below each distinct score,
/// starting from (0, 1) and ending at (1, 0). Ties move as one step.
struct RocPoints {
  std::vector<double> p_miss;
  std::vector<double> p_fa;
  std::vector<double> thresholds;  // highest rejected score per point; -inf for the first
};

RocPoints roc_points(const std::vector<double>& scores, const std::vector<int>& labels);

double compute_eer(const ScoreSet& scores);
double compute_mindcf(const ScoreSet& scores, const DcfParams& params = {});
MetricsReport compute_metrics(const ScoreSet& scores, const DcfParams& params = {});

double compute_eer(const std::vector<double>& scores, const std::vector<int>& labels);
double compute_mindcf(const std::vector<double>& scores, const std::vector<int>& labels, const DcfParams& params = {});
MetricsReport compute_metrics(const std::vector<double>& scores, const std::vector<int>& labels,
                              const DcfParams& params = {});

/// `EER=… minDCF=…` and the key=value form.
std::string format_metrics_line(const MetricsReport& r);
std::string format_metrics_keyvalue(const MetricsReport& r);

}  // namespace spkv::scoring
