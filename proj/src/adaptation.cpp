// src/adaptation.cpp

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

#include "spkv/adaptation.hpp"

#include "spkv/error.hpp"
#include "spkv/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

namespace spkv::adapt {

// ------------------------------------------------------------ statistics

DomainStats compute_domain_stats(const EmbeddingSet& emb, const std::string& domain) {
  if (emb.empty()) throw DataError("cannot compute domain statistics of an empty set");
  DomainStats s;
  s.mean = VectorXd::Zero(emb.dim());
  for (std::size_t i = 0; i < emb.size(); ++i) s.mean += emb.vector(i).cast<double>();
  s.mean /= static_cast<double>(emb.size());
  s.count = emb.size();
  s.domain = domain;
  return s;
}

EmbeddingSet apply_statistic_adaptation(const EmbeddingSet& emb, const DomainStats& stats) {
  if (stats.mean.size() != emb.dim())
    throw DataError("domain statistics have dim " + std::to_string(stats.mean.size()) + ", embeddings " +
                    std::to_string(emb.dim()));
  EmbeddingSet out(emb.dim());
  for (std::size_t i = 0; i < emb.size(); ++i) out.add(emb.name(i), VectorXd(emb.vector(i).cast<double>() - stats.mean));
  return out;
}

void write_domain_stats(const DomainStats& stats, const std::filesystem::path& path) {
  std::string out = "domain " + stats.domain + "\ncount " + std::to_string(stats.count) + "\nmean";
  for (Eigen::Index d = 0; d < stats.mean.size(); ++d) out += ' ' + io::format_real(stats.mean[d]);
  out += '\n';
  io::write_text_file(path, out);
}

DomainStats read_domain_stats(const std::filesystem::path& path) {
  std::istringstream in(io::read_text_file(path));
  DomainStats s;
  std::string line;
  int line_no = 0;
  bool have_mean = false, have_count = false;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream fields(line);
    std::string key;
    if (!(fields >> key)) continue;
    if (key == "domain") {
      if (!(fields >> s.domain)) throw ParseError(path.string(), line_no, "domain needs a tag");
    } else if (key == "count") {
      std::string v;
      fields >> v;
      const double c = io::parse_real(v, "count");
      if (!(c >= 1) || c != std::floor(c)) throw ParseError(path.string(), line_no, "count must be a positive integer");
      s.count = static_cast<std::size_t>(c);
      have_count = true;
    } else if (key == "mean") {
      std::vector<double> v;
      std::string tok;
      while (fields >> tok) v.push_back(io::parse_real(tok, "mean"));
      if (v.empty()) throw ParseError(path.string(), line_no, "empty mean");
      s.mean = Eigen::Map<const VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
      have_mean = true;
    } else {
      throw ParseError(path.string(), line_no, "unknown key '" + key + "'");
    }
  }
  if (!have_mean || !have_count) throw DataError(path.string() + ": statistics need count and mean");
  if (!s.mean.allFinite()) throw DataError(path.string() + ": non-finite mean");
  return s;
}

// --------------------------------------------------------------- k-means

namespace {

double inertia_of(const MatrixXd& unit, const MatrixXd& centroids, const std::vector<int>& assign) {
  double sum = 0.0;
  for (Eigen::Index i = 0; i < unit.rows(); ++i) sum += unit.row(i).dot(centroids.row(assign[static_cast<std::size_t>(i)]));
  return 1.0 - sum / static_cast<double>(unit.rows());
}

}  // namespace

PseudoLabels spherical_kmeans(const MatrixXd& unit, const KMeansOptions& opts, MatrixXd* centroids_out) {
  const Eigen::Index n = unit.rows();
  const int K = opts.k;
  if (K < 1) throw ConfigError("k-means needs K >= 1");
  if (K > n) throw ConfigError("k-means K = " + std::to_string(K) + " exceeds " + std::to_string(n) + " points");
  if (opts.max_iter < 1) throw ConfigError("k-means needs max-iter >= 1");
  Rng rng(opts.seed);

  // k-means++ seeding on the cosine distance 1 - cos.
  MatrixXd centroids(K, unit.cols());
  std::vector<char> taken(static_cast<std::size_t>(n), 0);
  std::uniform_int_distribution<Eigen::Index> first(0, n - 1);
  Eigen::Index pick = first(rng);
  VectorXd dist = VectorXd::Constant(n, 2.0);
  for (int c = 0; c < K; ++c) {
    if (c > 0) {
      double total = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) total += taken[static_cast<std::size_t>(i)] ? 0.0 : dist[i] * dist[i];
      if (total > 0.0) {
        double r = std::uniform_real_distribution<double>(0.0, total)(rng);
        pick = -1;
        for (Eigen::Index i = 0; i < n; ++i) {
          if (taken[static_cast<std::size_t>(i)] || dist[i] <= 0.0) continue;
          pick = i;
          r -= dist[i] * dist[i];
          if (r < 0.0) break;
        }
      } else {
        // Every remaining point coincides with a centroid.
        std::vector<Eigen::Index> free;
        for (Eigen::Index i = 0; i < n; ++i)
          if (!taken[static_cast<std::size_t>(i)]) free.push_back(i);
        pick = free[std::uniform_int_distribution<std::size_t>(0, free.size() - 1)(rng)];
      }
    }
    taken[static_cast<std::size_t>(pick)] = 1;
    centroids.row(c) = unit.row(pick);
    const VectorXd cos = unit * centroids.row(c).transpose();
    dist = dist.cwiseMin((1.0 - cos.array()).max(0.0).matrix());
  }

  PseudoLabels out;
  out.k = K;
  std::vector<int> assign(static_cast<std::size_t>(n), -1);
  std::vector<double> best_cos(static_cast<std::size_t>(n));
  for (int iter = 0; iter < opts.max_iter; ++iter) {
    // Assignment, lowest cluster index on ties.
    std::vector<int> next(static_cast<std::size_t>(n));
    parallel_for(static_cast<std::size_t>(n), opts.jobs, [&](std::size_t i) {
      const VectorXd cos = centroids * unit.row(static_cast<Eigen::Index>(i)).transpose();
      Eigen::Index best = 0;
      for (Eigen::Index c = 1; c < K; ++c)
        if (cos[c] > cos[best]) best = c;
      next[i] = static_cast<int>(best);
      best_cos[i] = cos[best];
    });

    // Empty clusters take the point farthest from its centroid among
    // clusters that can spare one.
    std::vector<int> sizes(static_cast<std::size_t>(K), 0);
    for (int a : next) ++sizes[static_cast<std::size_t>(a)];
    for (int c = 0; c < K; ++c) {
      if (sizes[static_cast<std::size_t>(c)] > 0) continue;
      Eigen::Index far = -1;
      for (Eigen::Index i = 0; i < n; ++i) {
        const auto si = static_cast<std::size_t>(i);
        if (sizes[static_cast<std::size_t>(next[si])] < 2) continue;
        if (far < 0 || best_cos[si] < best_cos[static_cast<std::size_t>(far)]) far = i;
      }
      const auto sf = static_cast<std::size_t>(far);
      --sizes[static_cast<std::size_t>(next[sf])];
      next[sf] = c;
      best_cos[sf] = 1.0;
      ++sizes[static_cast<std::size_t>(c)];
    }
    const bool changed = next != assign;
    assign = std::move(next);
    if (!changed) break;

    // Update: normalized member means, summed in point order.
    MatrixXd sums = MatrixXd::Zero(K, unit.cols());
    for (Eigen::Index i = 0; i < n; ++i) sums.row(assign[static_cast<std::size_t>(i)]) += unit.row(i);
    for (int c = 0; c < K; ++c) {
      const double norm = sums.row(c).norm();
      // A cluster whose members cancel keeps its previous direction.
      if (norm > 0.0) centroids.row(c) = sums.row(c) / norm;
    }
    out.inertia_trace.push_back(inertia_of(unit, centroids, assign));
    out.iterations = iter + 1;
  }
  out.assignment = std::move(assign);
  out.inertia = out.inertia_trace.empty() ? inertia_of(unit, centroids, out.assignment) : out.inertia_trace.back();
  if (centroids_out) *centroids_out = centroids;
  return out;
}

PseudoLabels spherical_kmeans(const EmbeddingSet& emb, const KMeansOptions& opts) {
  MatrixXd unit = emb.to_double();
  for (Eigen::Index i = 0; i < unit.rows(); ++i) {
    const double norm = unit.row(i).norm();
    if (!(norm > 0.0)) throw DataError("zero-norm embedding: " + emb.name(static_cast<std::size_t>(i)));
    unit.row(i) /= norm;
  }
  PseudoLabels p = spherical_kmeans(unit, opts);
  p.names = emb.names();
  return p;
}

// ----------------------------------------------------------------- cohort

std::string cluster_name(int cluster) {
  std::string digits = std::to_string(cluster);
  if (digits.size() < 6) digits.insert(0, 6 - digits.size(), '0');
  return "k" + digits;
}

scoring::Cohort build_pseudo_cohort(const EmbeddingSet& emb, const PseudoLabels& labels) {
  if (labels.names.size() != labels.assignment.size()) throw DataError("pseudo labels are inconsistent");
  std::map<std::string, std::string> speaker_of;
  std::vector<int> sizes(static_cast<std::size_t>(labels.k), 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int c = labels.assignment[i];
    if (c < 0 || c >= labels.k) throw DataError("cluster id " + std::to_string(c) + " out of range");
    speaker_of[labels.names[i]] = cluster_name(c);
    ++sizes[static_cast<std::size_t>(c)];
  }
  for (int c = 0; c < labels.k; ++c)
    if (sizes[static_cast<std::size_t>(c)] == 0) throw DataError("cluster " + std::to_string(c) + " is empty");
  for (std::size_t i = 0; i < emb.size(); ++i)
    if (!speaker_of.count(emb.name(i))) throw DataError("no pseudo label for " + emb.name(i));
  return scoring::build_cohort(emb, speaker_of);
}

void write_pseudo_labels(const PseudoLabels& labels, const std::filesystem::path& path) {
  std::vector<std::pair<std::string, std::string>> kv;
  kv.reserve(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) kv.emplace_back(labels.names[i], std::to_string(labels.assignment[i]));
  io::write_pairs(kv, path);
}

PseudoLabels read_pseudo_labels(const std::filesystem::path& path) {
  PseudoLabels p;
  int line = 0;
  for (const auto& [name, id] : io::read_pairs(path)) {
    ++line;
    int c = -1;
    try {
      std::size_t used = 0;
      c = std::stoi(id, &used);
      if (used != id.size()) c = -1;
    } catch (const std::exception&) {
      c = -1;
    }
    if (c < 0) throw ParseError(path.string(), line, "cluster id must be a nonnegative integer");
    p.names.push_back(name);
    p.assignment.push_back(c);
    p.k = std::max(p.k, c + 1);
  }
  return p;
}

double rand_index(const std::vector<int>& a, const std::vector<int>& b) {
  if (a.size() != b.size()) throw DataError("labelings differ in length");
  const double n = static_cast<double>(a.size());
  if (a.size() < 2) return 1.0;
  std::map<std::pair<int, int>, double> joint;
  std::map<int, double> ca, cb;
  for (std::size_t i = 0; i < a.size(); ++i) {
    joint[{a[i], b[i]}] += 1;
    ca[a[i]] += 1;
    cb[b[i]] += 1;
  }
  auto pairs = [](double m) { return m * (m - 1) / 2; };
  double both = 0, sa = 0, sb = 0;
  for (const auto& [k, v] : joint) both += pairs(v);
  for (const auto& [k, v] : ca) sa += pairs(v);
  for (const auto& [k, v] : cb) sb += pairs(v);
  const double total = pairs(n);
  // agreements = pairs together in both + pairs apart in both
  return (total + 2 * both - sa - sb) / total;
}

}  // namespace spkv::adapt
