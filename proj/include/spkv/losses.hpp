// include/spkv/losses.hpp

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

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <optional>
#include <vector>

namespace spkv::nn {

enum class MarginType { kAdditiveAngle, kAdditiveCosine };  // AAM, AM

struct LossConfig {
  MarginType margin_type = MarginType::kAdditiveAngle;
  double scale = 32.0;
  double margin = 0.2;
  int subcenters = 3;
  double intertopk_penalty = 0.06;
  int intertopk_k = 5;  // 0 disables the Inter-TopK term

  /// Throws ConfigError. `classes` enables the intertopk_k <= C - 1 check.
  void validate(std::optional<int> classes = std::nullopt) const;

  bool intertopk_enabled() const { return intertopk_k > 0; }

  /// Stage-I defaults: AAM s=32 m=0.2 K=3 with Inter-TopK (0.06, top 5).
  static LossConfig online_stage1();
  /// Stage-I offline: AM s=32 m=0.2 K=3, no Inter-TopK.
  static LossConfig offline_stage1();
  /// Large-margin fine-tuning: margin raised (AAM 0.5, AM 0.35), Inter-TopK removed.
  LossConfig large_margin() const;
};

enum class HeadId { kSource, kTarget };

/// C classes x K subcenters of D-dim weight rows; row c * K + k.
struct ClassifierHead {
  MatrixXd weights;
  int classes = 0;
  int subcenters = 1;
  HeadId id = HeadId::kSource;

  int dim() const { return static_cast<int>(weights.cols()); }

  static ClassifierHead random(int classes, int subcenters, int dim, Rng& rng, HeadId id = HeadId::kSource);
};

struct GradBundle {
  double loss = 0.0;
  MatrixXd grad_embeddings;  // same shape as the input embeddings
  MatrixXd grad_weights;     // same shape as head weights (empty when no head)
  VectorXd grad_params;      // extra scalar parameters (APL: [dw, db])
  MatrixXd logit_grad;       // d loss / d logits, N x C
  VectorXd sample_loss;      // unweighted loss of every row (margin loss only)
};

/// Optional per-sample soft targets (rows sum to one) and weights used by
/// label correction. Without them the loss is plain cross-entropy on labels.
struct SoftTargets {
  MatrixXd distributions;  // N x C
  VectorXd weights;        // N, zero excludes a sample
};

/// Margin softmax cross-entropy with K-subcenter max and Inter-TopK penalty,
/// averaged over the batch (or the weighted batch when soft targets are given).
/// Embeddings and class weights are length normalized internally.
GradBundle margin_softmax_loss(const MatrixXd& embeddings, const std::vector<int>& labels,
                               const ClassifierHead& head, const LossConfig& cfg,
                               const SoftTargets* soft = nullptr);

/// Per-sample margin loss without gradients.
VectorXd margin_softmax_sample_losses(const MatrixXd& embeddings, const std::vector<int>& labels,
                                      const ClassifierHead& head, const LossConfig& cfg);

/// Cosine to every class (maximum over its subcenters), N x C.
MatrixXd class_cosines(const MatrixXd& embeddings, const ClassifierHead& head);

/// Smallest distance, in cosine units, between a discrete selection the loss
/// makes and the point where it would flip: best vs runner-up subcenter,
/// k-th vs (k+1)-th Inter-TopK class, and the AAM fallback threshold. The loss
/// is differentiable wherever this is positive.
double margin_selection_gap(const MatrixXd& embeddings, const std::vector<int>& labels, const ClassifierHead& head,
                            const LossConfig& cfg);

/// Angular prototypical loss. Row i of `first` is the prototype of utterance
/// i and row i of `second` its query; similarity w * cos + b, label i.
/// grad_embeddings stacks [d first; d second], grad_params = [dw, db].
GradBundle angular_prototypical_loss(const MatrixXd& first, const MatrixXd& second, double w, double b);

enum class JointMode { kApl, kTcl, kOcl };

struct MarginBatch {
  MatrixXd embeddings;
  std::vector<int> labels;
};

struct AplBatch {
  MatrixXd first;
  MatrixXd second;
  double w = 10.0;
  double b = -5.0;
};

/// Inputs of the source + target objective. TCL uses `target_head`; OCL puts
/// target labels behind the source classes of `source_head`
/// (label + source_classes).
struct JointInputs {
  MarginBatch source;
  const ClassifierHead* source_head = nullptr;
  int source_classes = 0;
  LossConfig source_cfg;

  JointMode mode = JointMode::kApl;
  std::optional<AplBatch> apl;
  std::optional<MarginBatch> target;  // pseudo labelled, TCL/OCL
  const ClassifierHead* target_head = nullptr;
  LossConfig target_cfg;
  const SoftTargets* target_soft = nullptr;
};

struct JointGrad {
  double loss = 0.0;
  GradBundle source;
  std::optional<GradBundle> target;
};

/// L = L_source + L_target. An empty target batch disables adaptation.
JointGrad joint_loss(const JointInputs& in);

/// Loss value only, at any floating-point precision. The double instance runs
/// the same code as margin_softmax_loss; the long double instance gives the
/// gradient checker function values with negligible rounding noise.
template <typename Scalar>
Scalar margin_softmax_loss_value(const MatrixX<Scalar>& embeddings, const std::vector<int>& labels,
                                 const MatrixX<Scalar>& head_weights, int classes, int subcenters,
                                 const LossConfig& cfg);

template <typename Scalar>
Scalar angular_prototypical_loss_value(const MatrixX<Scalar>& first, const MatrixX<Scalar>& second, Scalar w,
                                       Scalar b);

extern template double margin_softmax_loss_value(const MatrixXd&, const std::vector<int>&, const MatrixXd&, int,
                                                 int, const LossConfig&);
extern template long double margin_softmax_loss_value(const MatrixX<long double>&, const std::vector<int>&,
                                                      const MatrixX<long double>&, int, int, const LossConfig&);
extern template double angular_prototypical_loss_value(const MatrixXd&, const MatrixXd&, double, double);
extern template long double angular_prototypical_loss_value(const MatrixX<long double>&,
                                                            const MatrixX<long double>&, long double, long double);

/// Finite-difference check of an analytic gradient. Each coordinate uses the
/// fourth-order central stencil with steps eps and eps / 2, so truncation
/// error does not swamp small components. Returns the maximum over
/// coordinates of |a - n| / max(|a|, |n|, 1e-8).
template <typename Real>
double finite_diff_check(const std::function<Real(const VectorXd&)>& loss, const VectorXd& x,
                         const VectorXd& analytic, double eps = 1e-4) {
  if (analytic.size() != x.size()) throw std::invalid_argument("gradient and point differ in size");
  double worst = 0.0;
  VectorXd probe = x;
  auto central = [&](Eigen::Index i, double h) {
    const double hi = x[i] + h, lo = x[i] - h;
    probe[i] = hi;
    const Real up = loss(probe);
    probe[i] = lo;
    const Real down = loss(probe);
    probe[i] = x[i];
    return (up - down) / static_cast<Real>(hi - lo);
  };
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const Real wide = central(i, eps), narrow = central(i, eps / 2);
    const double numeric = static_cast<double>((4 * narrow - wide) / 3);
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-8});
    worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
  }
  return worst;
}

inline double finite_diff_check(const std::function<double(const VectorXd&)>& loss, const VectorXd& x,
                                const VectorXd& analytic, double eps = 1e-4) {
  return finite_diff_check<double>(loss, x, analytic, eps);
}

}  // namespace spkv::nn
