// tests/unit/gradcheck.hpp

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

#include "spkv/losses.hpp"
#include "unit/util.hpp"

#include <vector>

namespace spkv::testing {

struct MarginInstance {
  MatrixXd embeddings;
  std::vector<int> labels;
  nn::ClassifierHead head;
};

/// Random instance away from the loss's selection switches: within
/// 10 eps / |row| of a tie a finite difference could cross it.
inline MarginInstance sample_margin_instance(const nn::LossConfig& cfg, Rng& rng, int n = 8, int classes = 10,
                                             int dim = 16, double eps = 1e-4) {
  std::uniform_int_distribution<int> label(0, classes - 1);
  for (;;) {
    MarginInstance m;
    m.embeddings = gaussian(n, dim, rng);
    m.head = nn::ClassifierHead::random(classes, cfg.subcenters, dim, rng);
    for (int i = 0; i < n; ++i) m.labels.push_back(label(rng));
    const double min_norm =
        std::min(m.embeddings.rowwise().norm().minCoeff(), m.head.weights.rowwise().norm().minCoeff());
    if (nn::margin_selection_gap(m.embeddings, m.labels, m.head, cfg) > 10 * eps / min_norm) return m;
  }
}

inline MatrixX<long double> block_ld(const VectorXd& x, Eigen::Index offset, Eigen::Index rows, Eigen::Index cols) {
  MatrixX<long double> m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = x[offset + i * cols + j];
  return m;
}

inline void put_block(VectorXd& x, Eigen::Index offset, const MatrixXd& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) x[offset + i * m.cols() + j] = m(i, j);
}

/// Max relative error of the embedding and class-weight gradients.
inline double margin_gradient_error(const MarginInstance& m, const nn::LossConfig& cfg) {
  const auto g = nn::margin_softmax_loss(m.embeddings, m.labels, m.head, cfg);
  const Eigen::Index ne = m.embeddings.size(), nw = m.head.weights.size();
  VectorXd x(ne + nw), a(ne + nw);
  put_block(x, 0, m.embeddings);
  put_block(x, ne, m.head.weights);
  put_block(a, 0, g.grad_embeddings);
  put_block(a, ne, g.grad_weights);
  const Eigen::Index n = m.embeddings.rows(), d = m.embeddings.cols(), r = m.head.weights.rows();
  std::function<long double(const VectorXd&)> f = [&](const VectorXd& p) {
    return nn::margin_softmax_loss_value<long double>(block_ld(p, 0, n, d), m.labels, block_ld(p, ne, r, d),
                                                      m.head.classes, m.head.subcenters, cfg);
  };
  return nn::finite_diff_check<long double>(f, x, a);
}

/// Max relative error of the prototype, query and (w, b) gradients.
inline double apl_gradient_error(const MatrixXd& first, const MatrixXd& second, double w, double b) {
  const auto g = nn::angular_prototypical_loss(first, second, w, b);
  const Eigen::Index n = first.rows(), d = first.cols(), half = first.size();
  VectorXd x(2 * half + 2), a(2 * half + 2);
  put_block(x, 0, first);
  put_block(x, half, second);
  x[2 * half] = w;
  x[2 * half + 1] = b;
  put_block(a, 0, g.grad_embeddings);  // stacked [first; second]
  a.tail(2) = g.grad_params;
  std::function<long double(const VectorXd&)> f = [&](const VectorXd& p) {
    return nn::angular_prototypical_loss_value<long double>(block_ld(p, 0, n, d), block_ld(p, half, n, d),
                                                            p[2 * half], p[2 * half + 1]);
  };
  return nn::finite_diff_check<long double>(f, x, a);
}

}  // namespace spkv::testing
