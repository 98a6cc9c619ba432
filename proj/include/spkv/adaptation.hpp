// include/spkv/adaptation.hpp

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
#include "spkv/scoring.hpp"
#include "spkv/types.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace spkv::adapt {

using io::EmbeddingSet;

struct DomainStats {
  VectorXd mean;
  std::size_t count = 0;
  std::string domain = "target";
};

DomainStats compute_domain_stats(const EmbeddingSet& emb, const std::string& domain = "target");

/// Subtracts stats.mean from every vector. Lengths are left alone; cosine
/// scoring re-normalizes.
EmbeddingSet apply_statistic_adaptation(const EmbeddingSet& emb, const DomainStats& stats);

/// Text: `domain <tag>`, `count <n>`, `mean <v1> ... <vD>`.
void write_domain_stats(const DomainStats& stats, const std::filesystem::path& path);
DomainStats read_domain_stats(const std::filesystem::path& path);

struct PseudoLabels {
  std::vector<std::string> names;
  std::vector<int> assignment;  // parallel to names
  int k = 0;
  double inertia = 0.0;               // 1 - mean cosine to the assigned centroid
  std::vector<double> inertia_trace;  // after every iteration
  int iterations = 0;

  std::size_t size() const { return names.size(); }
};

struct KMeansOptions {
  int k = 2;
  std::uint64_t seed = 0;
  int max_iter = 100;
  int jobs = 1;
};

/// Cosine k-means on length-normalized rows. Rows of `unit` must be unit
/// length. Returns assignments; `centroids` (optional) receives the final
/// unit centroids.
PseudoLabels spherical_kmeans(const MatrixXd& unit, const KMeansOptions& opts, MatrixXd* centroids = nullptr);
PseudoLabels spherical_kmeans(const EmbeddingSet& emb, const KMeansOptions& opts);

/// Cluster c becomes cohort speaker "k<c>" (zero padded to six digits).
scoring::Cohort build_pseudo_cohort(const EmbeddingSet& emb, const PseudoLabels& labels);
std::string cluster_name(int cluster);

/// Lines `name cluster-id`.
void write_pseudo_labels(const PseudoLabels& labels, const std::filesystem::path& path);
PseudoLabels read_pseudo_labels(const std::filesystem::path& path);

/// Fraction of pairs of points on which two labelings agree about "same
/// cluster" (Rand index); 1 means identical partitions.
double rand_index(const std::vector<int>& a, const std::vector<int>& b);

}  // namespace spkv::adapt
