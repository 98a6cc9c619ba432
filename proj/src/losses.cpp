// src/losses.cpp

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

#include "spkv/losses.hpp"

#include "spkv/error.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <numeric>

namespace spkv::nn {

namespace {

// d(x / |x|) applied to an upstream gradient g: (g - u (u . g)) / |x|.
template <typename Scalar>
void backprop_normalize(const MatrixX<Scalar>& unit, const VectorX<Scalar>& norms, MatrixX<Scalar>& grad) {
  for (Eigen::Index i = 0; i < grad.rows(); ++i) {
    const Scalar proj = unit.row(i).dot(grad.row(i));
    grad.row(i) = (grad.row(i) - proj * unit.row(i)) / norms[i];
  }
}

template <typename Scalar>
VectorX<Scalar> row_norms(const MatrixX<Scalar>& m, const char* what) {
  VectorX<Scalar> n = m.rowwise().norm();
  for (Eigen::Index i = 0; i < n.size(); ++i)
    if (!(n[i] > Scalar(0)) || !std::isfinite(n[i]))
      throw DataError(std::string("zero-norm or non-finite ") + what + " at row " + std::to_string(i));
  return n;
}

template <typename Scalar>
Scalar log_sum_exp(const Eigen::Ref<const Eigen::Matrix<Scalar, 1, Eigen::Dynamic>>& z) {
  const Scalar mx = z.maxCoeff();
  return mx + std::log((z.array() - mx).exp().sum());
}

template <typename Scalar>
struct LossResult {
  Scalar loss = 0;
  MatrixX<Scalar> grad_embeddings;
  MatrixX<Scalar> grad_weights;
  MatrixX<Scalar> logit_grad;
  VectorX<Scalar> grad_params;
  VectorX<Scalar> sample_loss;  // unweighted, per row
};

template <typename Scalar>
LossResult<Scalar> margin_core(const MatrixX<Scalar>& embeddings, const std::vector<int>& labels,
                               const MatrixX<Scalar>& weights, int C, int K, const LossConfig& cfg,
                               const MatrixX<Scalar>* soft_dist, const VectorX<Scalar>* soft_weights,
                               bool need_grad) {
  using RowVec = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;
  const Eigen::Index N = embeddings.rows();
  cfg.validate(C);
  if (K != cfg.subcenters)
    throw ConfigError("head has " + std::to_string(K) + " subcenters, config " + std::to_string(cfg.subcenters));
  if (weights.rows() != static_cast<Eigen::Index>(C) * K || weights.cols() != embeddings.cols())
    throw DataError("classifier head shape does not match classes x subcenters x dim");
  if (static_cast<Eigen::Index>(labels.size()) != N) throw DataError("label count does not match batch size");
  for (int y : labels)
    if (y < 0 || y >= C) throw DataError("label " + std::to_string(y) + " out of range [0, " + std::to_string(C) + ")");
  const bool soft = soft_dist != nullptr;
  if (soft && (soft_dist->rows() != N || soft_dist->cols() != C || !soft_weights || soft_weights->size() != N))
    throw DataError("soft target shape does not match the batch");

  LossResult<Scalar> out;
  if (need_grad) {
    out.grad_embeddings = MatrixX<Scalar>::Zero(N, embeddings.cols());
    out.grad_weights = MatrixX<Scalar>::Zero(weights.rows(), weights.cols());
    out.logit_grad = MatrixX<Scalar>::Zero(N, C);
  }
  if (N == 0) return out;

  const VectorX<Scalar> e_norm = row_norms(embeddings, "embedding");
  const VectorX<Scalar> w_norm = row_norms(weights, "class weight");
  const MatrixX<Scalar> U = embeddings.array().colwise() / e_norm.array();
  const MatrixX<Scalar> Wn = weights.array().colwise() / w_norm.array();
  const MatrixX<Scalar> cos_all = U * Wn.transpose();

  // Subcenter max, lowest index on ties.
  MatrixX<Scalar> cos(N, C);
  Eigen::MatrixXi chosen(N, C);
  for (Eigen::Index i = 0; i < N; ++i) {
    for (int c = 0; c < C; ++c) {
      int best = 0;
      for (int k = 1; k < K; ++k)
        if (cos_all(i, c * K + k) > cos_all(i, c * K + best)) best = k;
      cos(i, c) = cos_all(i, c * K + best);
      chosen(i, c) = c * K + best;
    }
  }

  const Scalar margin = static_cast<Scalar>(cfg.margin);
  const Scalar cos_m = std::cos(margin), sin_m = std::sin(margin);
  const Scalar threshold = std::cos(static_cast<Scalar>(std::numbers::pi_v<long double>) - margin);
  const Scalar penalty = static_cast<Scalar>(cfg.intertopk_penalty);
  MatrixX<Scalar> z(N, C);
  VectorX<Scalar> dphi(N);
  std::vector<int> order;
  for (Eigen::Index i = 0; i < N; ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    z.row(i) = cos.row(i);
    if (cfg.intertopk_enabled()) {
      order.resize(static_cast<std::size_t>(C));
      std::iota(order.begin(), order.end(), 0);
      order.erase(order.begin() + y);
      const auto k = std::min<std::size_t>(static_cast<std::size_t>(cfg.intertopk_k), order.size());
      std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                        [&](int a, int b) { return cos(i, a) > cos(i, b) || (cos(i, a) == cos(i, b) && a < b); });
      for (std::size_t j = 0; j < k; ++j) z(i, order[j]) += penalty;
    }
    const Scalar c = cos(i, y);
    if (cfg.margin_type == MarginType::kAdditiveAngle) {
      const Scalar sin_t = std::sqrt(std::max(Scalar(0), Scalar(1) - c * c));
      if (c > threshold) {
        z(i, y) = c * cos_m - sin_t * sin_m;
        dphi[i] = sin_t > Scalar(1e-12) ? cos_m + sin_m * c / sin_t : cos_m;
      } else {
        z(i, y) = c - margin * sin_m;
        dphi[i] = 1;
      }
    } else {
      z(i, y) = c - margin;
      dphi[i] = 1;
    }
  }
  z *= static_cast<Scalar>(cfg.scale);

  Scalar total_weight = 0;
  for (Eigen::Index i = 0; i < N; ++i) total_weight += soft ? (*soft_weights)[i] : Scalar(1);
  if (!(total_weight > Scalar(0))) return out;

  Scalar loss = 0;
  out.sample_loss = VectorX<Scalar>::Zero(N);
  for (Eigen::Index i = 0; i < N; ++i) {
    const Scalar wi = soft ? (*soft_weights)[i] : Scalar(1);
    if (wi == Scalar(0)) continue;
    const Scalar lse = log_sum_exp<Scalar>(z.row(i));
    const int y = labels[static_cast<std::size_t>(i)];
    out.sample_loss[i] = soft ? lse - soft_dist->row(i).dot(z.row(i)) : lse - z(i, y);
    loss += wi * out.sample_loss[i];
    if (need_grad) {
      RowVec p = (z.row(i).array() - lse).exp();
      if (soft) {
        p -= soft_dist->row(i);
      } else {
        p[y] -= 1;
      }
      out.logit_grad.row(i) = (wi / total_weight) * p;
    }
  }
  out.loss = loss / total_weight;
  if (!need_grad) return out;

  // Back to cosines, then to unit vectors, then through the normalizations.
  const Scalar scale = static_cast<Scalar>(cfg.scale);
  MatrixX<Scalar>& grad_u = out.grad_embeddings;
  MatrixX<Scalar>& grad_wn = out.grad_weights;
  for (Eigen::Index i = 0; i < N; ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    for (int c = 0; c < C; ++c) {
      Scalar g = out.logit_grad(i, c) * scale;
      if (c == y) g *= dphi[i];
      if (g == Scalar(0)) continue;
      const Eigen::Index row = chosen(i, c);
      grad_u.row(i) += g * Wn.row(row);
      grad_wn.row(row) += g * U.row(i);
    }
  }
  backprop_normalize(U, e_norm, grad_u);
  backprop_normalize(Wn, w_norm, grad_wn);
  return out;
}

template <typename Scalar>
LossResult<Scalar> prototypical_core(const MatrixX<Scalar>& first, const MatrixX<Scalar>& second, Scalar w, Scalar b,
                                     bool need_grad) {
  const Eigen::Index N = first.rows();
  if (N < 2) throw DataError("angular prototypical loss needs at least 2 utterances for negatives");
  if (second.rows() != N || second.cols() != first.cols()) throw DataError("segment batches differ in shape");
  if (!(w > Scalar(0))) throw ConfigError("angular prototypical scale w must be positive");

  const VectorX<Scalar> p_norm = row_norms(first, "prototype");
  const VectorX<Scalar> q_norm = row_norms(second, "query");
  const MatrixX<Scalar> P = first.array().colwise() / p_norm.array();
  const MatrixX<Scalar> Q = second.array().colwise() / q_norm.array();
  const MatrixX<Scalar> cos = Q * P.transpose();  // query i vs prototype j
  const MatrixX<Scalar> S = (w * cos).array() + b;

  LossResult<Scalar> out;
  MatrixX<Scalar> dS(N, N);
  Scalar loss = 0;
  for (Eigen::Index i = 0; i < N; ++i) {
    const Scalar lse = log_sum_exp<Scalar>(S.row(i));
    loss += lse - S(i, i);
    if (need_grad) {
      dS.row(i) = (S.row(i).array() - lse).exp();
      dS(i, i) -= 1;
    }
  }
  out.loss = loss / static_cast<Scalar>(N);
  if (!need_grad) return out;

  dS /= static_cast<Scalar>(N);
  out.logit_grad = dS;
  out.grad_params.resize(2);
  out.grad_params[0] = (dS.array() * cos.array()).sum();
  out.grad_params[1] = dS.sum();

  const MatrixX<Scalar> dcos = w * dS;
  MatrixX<Scalar> grad_q = dcos * P;
  MatrixX<Scalar> grad_p = dcos.transpose() * Q;
  backprop_normalize(Q, q_norm, grad_q);
  backprop_normalize(P, p_norm, grad_p);
  out.grad_embeddings.resize(2 * N, first.cols());
  out.grad_embeddings.topRows(N) = grad_p;
  out.grad_embeddings.bottomRows(N) = grad_q;
  return out;
}

}  // namespace

// ------------------------------------------------------------- LossConfig

void LossConfig::validate(std::optional<int> classes) const {
  if (!(scale > 0.0)) throw ConfigError("loss scale must be positive");
  if (!(margin >= 0.0)) throw ConfigError("loss margin must be >= 0");
  if (margin_type == MarginType::kAdditiveAngle && !(margin < std::numbers::pi / 2))
    throw ConfigError("AAM margin must be < pi/2");
  if (subcenters < 1) throw ConfigError("subcenter count must be >= 1");
  if (!(intertopk_penalty >= 0.0)) throw ConfigError("Inter-TopK penalty must be >= 0");
  if (intertopk_k < 0) throw ConfigError("Inter-TopK k must be >= 0");
  if (classes && intertopk_k > 0 && intertopk_k > *classes - 1)
    throw ConfigError("Inter-TopK k = " + std::to_string(intertopk_k) + " exceeds classes - 1 = " +
                      std::to_string(*classes - 1));
}

LossConfig LossConfig::online_stage1() { return LossConfig{}; }

LossConfig LossConfig::offline_stage1() {
  LossConfig c;
  c.margin_type = MarginType::kAdditiveCosine;
  c.intertopk_penalty = 0.0;
  c.intertopk_k = 0;
  return c;
}

LossConfig LossConfig::large_margin() const {
  LossConfig c = *this;
  c.margin = margin_type == MarginType::kAdditiveAngle ? 0.5 : 0.35;
  c.intertopk_penalty = 0.0;
  c.intertopk_k = 0;
  return c;
}

ClassifierHead ClassifierHead::random(int classes, int subcenters, int dim, Rng& rng, HeadId id) {
  ClassifierHead h;
  h.classes = classes;
  h.subcenters = subcenters;
  h.id = id;
  h.weights.resize(static_cast<Eigen::Index>(classes) * subcenters, dim);
  std::normal_distribution<double> g(0.0, 1.0);
  for (Eigen::Index i = 0; i < h.weights.size(); ++i) h.weights.data()[i] = g(rng);
  return h;
}

// ------------------------------------------------------------ margin loss

GradBundle margin_softmax_loss(const MatrixXd& embeddings, const std::vector<int>& labels,
                               const ClassifierHead& head, const LossConfig& cfg, const SoftTargets* soft) {
  auto r = margin_core<double>(embeddings, labels, head.weights, head.classes, head.subcenters, cfg,
                               soft ? &soft->distributions : nullptr, soft ? &soft->weights : nullptr, true);
  GradBundle out;
  out.loss = r.loss;
  out.grad_embeddings = std::move(r.grad_embeddings);
  out.grad_weights = std::move(r.grad_weights);
  out.logit_grad = std::move(r.logit_grad);
  out.sample_loss = std::move(r.sample_loss);
  return out;
}

VectorXd margin_softmax_sample_losses(const MatrixXd& embeddings, const std::vector<int>& labels,
                                      const ClassifierHead& head, const LossConfig& cfg) {
  auto r = margin_core<double>(embeddings, labels, head.weights, head.classes, head.subcenters, cfg, nullptr, nullptr,
                               false);
  if (r.sample_loss.size() == 0) r.sample_loss = VectorXd::Zero(embeddings.rows());
  return r.sample_loss;
}

MatrixXd class_cosines(const MatrixXd& embeddings, const ClassifierHead& head) {
  if (head.weights.cols() != embeddings.cols()) throw DataError("classifier head dim does not match embeddings");
  const MatrixXd all = normalized_rows(embeddings) * normalized_rows(head.weights).transpose();
  MatrixXd out(embeddings.rows(), head.classes);
  for (int c = 0; c < head.classes; ++c)
    out.col(c) = all.middleCols(static_cast<Eigen::Index>(c) * head.subcenters, head.subcenters).rowwise().maxCoeff();
  return out;
}

template <typename Scalar>
Scalar margin_softmax_loss_value(const MatrixX<Scalar>& embeddings, const std::vector<int>& labels,
                                 const MatrixX<Scalar>& head_weights, int classes, int subcenters,
                                 const LossConfig& cfg) {
  return margin_core<Scalar>(embeddings, labels, head_weights, classes, subcenters, cfg, nullptr, nullptr, false)
      .loss;
}

template double margin_softmax_loss_value(const MatrixXd&, const std::vector<int>&, const MatrixXd&, int, int,
                                          const LossConfig&);
template long double margin_softmax_loss_value(const MatrixX<long double>&, const std::vector<int>&,
                                               const MatrixX<long double>&, int, int, const LossConfig&);

double margin_selection_gap(const MatrixXd& embeddings, const std::vector<int>& labels, const ClassifierHead& head,
                            const LossConfig& cfg) {
  const int C = head.classes, K = head.subcenters;
  const MatrixXd U = normalized_rows(embeddings);
  const MatrixXd Wn = normalized_rows(head.weights);
  const MatrixXd cos_all = U * Wn.transpose();
  double gap = std::numeric_limits<double>::infinity();
  const double threshold = std::cos(std::numbers::pi - cfg.margin);
  std::vector<double> others;
  for (Eigen::Index i = 0; i < U.rows(); ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    others.clear();
    for (int c = 0; c < C; ++c) {
      const auto block = cos_all.row(i).segment(c * K, K);
      Eigen::Index best;
      const double top = block.maxCoeff(&best);
      for (int k = 0; k < K; ++k)
        if (k != best) gap = std::min(gap, top - block[k]);
      if (c == y) {
        if (cfg.margin_type == MarginType::kAdditiveAngle) gap = std::min(gap, std::abs(top - threshold));
      } else {
        others.push_back(top);
      }
    }
    if (cfg.intertopk_enabled() && static_cast<std::size_t>(cfg.intertopk_k) < others.size()) {
      std::sort(others.begin(), others.end(), std::greater<>());
      gap = std::min(gap, others[static_cast<std::size_t>(cfg.intertopk_k) - 1] -
                              others[static_cast<std::size_t>(cfg.intertopk_k)]);
    }
  }
  return gap;
}

// --------------------------------------------------- angular prototypical

GradBundle angular_prototypical_loss(const MatrixXd& first, const MatrixXd& second, double w, double b) {
  auto r = prototypical_core<double>(first, second, w, b, true);
  GradBundle out;
  out.loss = r.loss;
  out.grad_embeddings = std::move(r.grad_embeddings);
  out.grad_params = std::move(r.grad_params);
  out.logit_grad = std::move(r.logit_grad);
  return out;
}

template <typename Scalar>
Scalar angular_prototypical_loss_value(const MatrixX<Scalar>& first, const MatrixX<Scalar>& second, Scalar w,
                                       Scalar b) {
  return prototypical_core<Scalar>(first, second, w, b, false).loss;
}

template double angular_prototypical_loss_value(const MatrixXd&, const MatrixXd&, double, double);
template long double angular_prototypical_loss_value(const MatrixX<long double>&, const MatrixX<long double>&,
                                                     long double, long double);

// ------------------------------------------------------------- joint loss

JointGrad joint_loss(const JointInputs& in) {
  if (!in.source_head) throw ConfigError("joint loss needs a source head");
  if (in.source.embeddings.rows() == 0) throw DataError("joint loss needs a non-empty source batch");
  for (int y : in.source.labels)
    if (y >= in.source_classes && in.source_classes > 0)
      throw DataError("source label " + std::to_string(y) + " outside the source class range");

  JointGrad out;
  out.source = margin_softmax_loss(in.source.embeddings, in.source.labels, *in.source_head, in.source_cfg);
  out.loss = out.source.loss;

  switch (in.mode) {
    case JointMode::kApl:
      if (in.apl && in.apl->first.rows() > 0) {
        out.target = angular_prototypical_loss(in.apl->first, in.apl->second, in.apl->w, in.apl->b);
      }
      break;
    case JointMode::kTcl:
    case JointMode::kOcl: {
      if (!in.target || in.target->embeddings.rows() == 0) break;
      if (in.target->labels.size() != static_cast<std::size_t>(in.target->embeddings.rows()))
        throw ConfigError("TCL/OCL target objective needs pseudo labels for every target sample");
      if (in.mode == JointMode::kTcl) {
        if (!in.target_head) throw ConfigError("TCL needs a separate target head");
        out.target = margin_softmax_loss(in.target->embeddings, in.target->labels, *in.target_head, in.target_cfg,
                                         in.target_soft);
      } else {
        std::vector<int> shifted = in.target->labels;
        for (int& y : shifted) y += in.source_classes;
        const ClassifierHead& shared = *in.source_head;
        const SoftTargets* soft = in.target_soft;
        SoftTargets widened;
        if (soft) {
          // Target distributions live on the target class range of the shared head.
          widened.weights = soft->weights;
          widened.distributions = MatrixXd::Zero(soft->distributions.rows(), shared.classes);
          widened.distributions.rightCols(soft->distributions.cols()) = soft->distributions;
          if (in.source_classes + soft->distributions.cols() != shared.classes)
            throw DataError("OCL soft targets do not cover the target class range");
          soft = &widened;
        }
        out.target = margin_softmax_loss(in.target->embeddings, shifted, shared, in.target_cfg, soft);
      }
      break;
    }
  }
  if (out.target) out.loss = out.source.loss + out.target->loss;
  return out;
}

}  // namespace spkv::nn
