// include/spkv/pooling.hpp

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

#include "spkv/error.hpp"
#include "spkv/types.hpp"

#include <cmath>
#include <vector>

namespace spkv::nn {

/// Variance epsilon under the square root of every pooled standard deviation.
inline constexpr double kPoolingEpsilon = 1e-10;

/// Attention-weighted mean and standard deviation over time (rows), with
/// weights summing to one. Returns [mean ‖ std].
template <typename Derived, typename WeightDerived>
VectorX<typename Derived::Scalar> weighted_moments(const Eigen::MatrixBase<Derived>& frames,
                                                   const Eigen::MatrixBase<WeightDerived>& weights) {
  using Scalar = typename Derived::Scalar;
  const Eigen::Index D = frames.cols();
  const VectorX<Scalar> mean = frames.transpose() * weights;
  const VectorX<Scalar> second = frames.array().square().matrix().transpose() * weights;
  VectorX<Scalar> out(2 * D);
  out.head(D) = mean;
  for (Eigen::Index d = 0; d < D; ++d) {
    const Scalar var = std::max(second[d] - mean[d] * mean[d], Scalar(0));
    out[D + d] = std::sqrt(var + Scalar(kPoolingEpsilon));
  }
  return out;
}

/// Classical statistic pooling: per-dimension mean and population standard
/// deviation over T x D frames.
template <typename Derived>
VectorX<typename Derived::Scalar> statistic_pooling(const Eigen::MatrixBase<Derived>& frames) {
  using Scalar = typename Derived::Scalar;
  if (frames.rows() < 1) throw DataError("statistic pooling needs at least one frame");
  const VectorX<Scalar> uniform = VectorX<Scalar>::Constant(frames.rows(), Scalar(1) / Scalar(frames.rows()));
  return weighted_moments(frames, uniform);
}

/// Multi-query multi-head attention pooling parameters. Head h of query q
/// scores frame t as dot(score_weights[q].row(h), x_t[h-slice]) + score_bias[q][h].
template <typename Scalar>
struct MqmhaParams {
  int queries = 4;
  int heads = 8;
  std::vector<MatrixX<Scalar>> score_weights;  // per query: heads x (D / heads)
  std::vector<VectorX<Scalar>> score_bias;     // per query: heads

  static MqmhaParams zeros(int queries, int heads, int dim) {
    if (heads < 1 || queries < 1) throw ConfigError("MQMHA needs at least one query and one head");
    if (dim % heads != 0) throw ConfigError("feature dim " + std::to_string(dim) + " not divisible by " +
                                            std::to_string(heads) + " heads");
    MqmhaParams p;
    p.queries = queries;
    p.heads = heads;
    for (int q = 0; q < queries; ++q) {
      p.score_weights.push_back(MatrixX<Scalar>::Zero(heads, dim / heads));
      p.score_bias.push_back(VectorX<Scalar>::Zero(heads));
    }
    return p;
  }

  static MqmhaParams random(int queries, int heads, int dim, Rng& rng, Scalar scale = Scalar(1)) {
    MqmhaParams p = zeros(queries, heads, dim);
    std::normal_distribution<double> g(0.0, 1.0);
    for (int q = 0; q < queries; ++q) {
      for (Eigen::Index i = 0; i < p.score_weights[q].size(); ++i) p.score_weights[q].data()[i] = scale * g(rng);
      for (int h = 0; h < heads; ++h) p.score_bias[q][h] = scale * g(rng);
    }
    return p;
  }
};

/// Softmax over time of one head's frame scores.
template <typename Scalar>
VectorX<Scalar> attention_softmax(const VectorX<Scalar>& scores) {
  const Scalar mx = scores.maxCoeff();
  VectorX<Scalar> e = (scores.array() - mx).exp().matrix();
  const Scalar sum = e.sum();
  return e / sum;
}

/// Per-(query, head) attention weights, each of length T.
template <typename Derived>
std::vector<VectorX<typename Derived::Scalar>> mqmha_attention(const Eigen::MatrixBase<Derived>& frames,
                                                               const MqmhaParams<typename Derived::Scalar>& p) {
  using Scalar = typename Derived::Scalar;
  const Eigen::Index D = frames.cols();
  if (D % p.heads != 0)
    throw ConfigError("feature dim " + std::to_string(D) + " not divisible by " + std::to_string(p.heads) + " heads");
  const Eigen::Index slice = D / p.heads;
  std::vector<VectorX<Scalar>> out;
  out.reserve(static_cast<std::size_t>(p.queries * p.heads));
  for (int q = 0; q < p.queries; ++q) {
    for (int h = 0; h < p.heads; ++h) {
      const VectorX<Scalar> scores =
          (frames.middleCols(h * slice, slice) * p.score_weights[q].row(h).transpose()).array() + p.score_bias[q][h];
      out.push_back(attention_softmax<Scalar>(scores));
    }
  }
  return out;
}

/// MQMHA pooling of T x D frames into Q*H*(2*D/H) values, ordered by query,
/// then head, each block [weighted mean ‖ weighted std] of the head's slice.
template <typename Derived>
VectorX<typename Derived::Scalar> mqmha_pooling(const Eigen::MatrixBase<Derived>& frames,
                                                const MqmhaParams<typename Derived::Scalar>& p) {
  using Scalar = typename Derived::Scalar;
  if (frames.rows() < 1) throw DataError("MQMHA pooling needs at least one frame");
  const auto attention = mqmha_attention(frames, p);
  const Eigen::Index slice = frames.cols() / p.heads;
  VectorX<Scalar> out(static_cast<Eigen::Index>(p.queries * p.heads) * 2 * slice);
  Eigen::Index offset = 0;
  for (int q = 0; q < p.queries; ++q) {
    for (int h = 0; h < p.heads; ++h) {
      out.segment(offset, 2 * slice) =
          weighted_moments(frames.middleCols(h * slice, slice), attention[static_cast<std::size_t>(q * p.heads + h)]);
      offset += 2 * slice;
    }
  }
  return out;
}

}  // namespace spkv::nn
