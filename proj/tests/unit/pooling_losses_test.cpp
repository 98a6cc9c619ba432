// tests/unit/pooling_losses_test.cpp

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

#include "doctest.h"

#include "spkv/error.hpp"
#include "spkv/losses.hpp"
#include "spkv/pooling.hpp"
#include "unit/gradcheck.hpp"

#include <cmath>
#include <numeric>

using namespace spkv;
using namespace spkv::nn;

namespace {

MatrixXd permute_rows(const MatrixXd& m, Rng& rng) {
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(m.rows()));
  std::iota(idx.begin(), idx.end(), 0);
  std::shuffle(idx.begin(), idx.end(), rng);
  MatrixXd out(m.rows(), m.cols());
  for (Eigen::Index i = 0; i < m.rows(); ++i) out.row(i) = m.row(idx[static_cast<std::size_t>(i)]);
  return out;
}

// Independent scalar derivation for one sample: angles via acos, margins on
// the angle or the cosine, class score = best subcenter, plain log-sum-exp.
double scalar_margin_loss(const std::vector<std::vector<double>>& emb, const std::vector<int>& labels,
                          const std::vector<std::vector<std::vector<double>>>& w, const LossConfig& cfg) {
  auto cosine = [](const std::vector<double>& a, const std::vector<double>& b) {
    double ab = 0, aa = 0, bb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      ab += a[i] * b[i];
      aa += a[i] * a[i];
      bb += b[i] * b[i];
    }
    return ab / std::sqrt(aa * bb);
  };
  double total = 0;
  for (std::size_t n = 0; n < emb.size(); ++n) {
    std::vector<double> c(w.size());
    for (std::size_t k = 0; k < w.size(); ++k) {
      c[k] = -2;
      for (const auto& sub : w[k]) c[k] = std::max(c[k], cosine(emb[n], sub));
    }
    const auto y = static_cast<std::size_t>(labels[n]);
    std::vector<double> z(w.size());
    std::vector<std::size_t> others;
    for (std::size_t k = 0; k < w.size(); ++k)
      if (k != y) others.push_back(k);
    std::sort(others.begin(), others.end(), [&](std::size_t a, std::size_t b) { return c[a] > c[b]; });
    for (std::size_t k = 0; k < w.size(); ++k) z[k] = c[k];
    for (int j = 0; j < cfg.intertopk_k; ++j) z[others[static_cast<std::size_t>(j)]] += cfg.intertopk_penalty;
    z[y] = cfg.margin_type == MarginType::kAdditiveAngle ? std::cos(std::acos(c[y]) + cfg.margin) : c[y] - cfg.margin;
    double sum = 0;
    for (double v : z) sum += std::exp(cfg.scale * v);
    total += std::log(sum) - cfg.scale * z[y];
  }
  return total / static_cast<double>(emb.size());
}

MatrixXd to_matrix(const std::vector<std::vector<double>>& rows) {
  MatrixXd m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows[0].size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  return m;
}

ClassifierHead head_from(const std::vector<std::vector<std::vector<double>>>& w) {
  std::vector<std::vector<double>> rows;
  for (const auto& cls : w)
    for (const auto& sub : cls) rows.push_back(sub);
  ClassifierHead h;
  h.weights = to_matrix(rows);
  h.classes = static_cast<int>(w.size());
  h.subcenters = static_cast<int>(w[0].size());
  return h;
}

}  // namespace

TEST_SUITE("pooling_losses") {

TEST_CASE("statistic pooling") {
  MatrixXd c = MatrixXd::Constant(6, 3, 2.5);
  const VectorXd p = statistic_pooling(c);
  CHECK((p.head(3).array() - 2.5).abs().maxCoeff() == 0.0);
  CHECK(p.tail(3).maxCoeff() < 1e-4);  // sqrt(0 + 1e-10)

  MatrixXd two(2, 1);
  two << 0, 2;
  const VectorXd q = statistic_pooling(two);
  CHECK(q[0] == doctest::Approx(1.0));
  CHECK(q[1] == doctest::Approx(1.0).epsilon(1e-9));

  Rng rng(1);
  const MatrixXd f = testing::gaussian(40, 8, rng);
  CHECK((statistic_pooling(f) - statistic_pooling(permute_rows(f, rng))).cwiseAbs().maxCoeff() < 1e-12);
  CHECK_THROWS_AS(statistic_pooling(MatrixXd(0, 3)), DataError);
}

TEST_CASE("MQMHA pooling") {
  Rng rng(2);
  const MatrixXd f = testing::gaussian(30, 16, rng);
  const auto zero = MqmhaParams<double>::zeros(1, 1, 16);
  CHECK(mqmha_pooling(f, zero) == statistic_pooling(f));

  const auto p = MqmhaParams<double>::random(4, 8, 16, rng);
  const VectorXd out = mqmha_pooling(f, p);
  CHECK(out.size() == 4 * 8 * (2 * 16 / 8));
  for (const auto& a : mqmha_attention(f, p)) CHECK(std::abs(a.sum() - 1.0) < 1e-6);
  CHECK((out - mqmha_pooling(permute_rows(f, rng), p)).cwiseAbs().maxCoeff() < 1e-12);

  const MatrixXd one = f.topRows(1);
  const VectorXd single = mqmha_pooling(one, p);
  for (int b = 0; b < 32; ++b) {
    const int h = b % 8;
    CHECK((single.segment(b * 4, 2) - one.row(0).segment(h * 2, 2).transpose()).cwiseAbs().maxCoeff() == 0.0);
    CHECK(single.segment(b * 4 + 2, 2).maxCoeff() < 1e-4);
  }
  CHECK_THROWS_AS(MqmhaParams<double>::zeros(1, 3, 16), ConfigError);
  CHECK_THROWS_AS(mqmha_pooling(testing::gaussian(5, 12, rng), p), ConfigError);
}

TEST_CASE("loss configs") {
  const LossConfig online = LossConfig::online_stage1();
  CHECK(online.scale == 32.0);
  CHECK(online.margin == 0.2);
  CHECK(online.subcenters == 3);
  CHECK(online.intertopk_penalty == 0.06);
  CHECK(online.intertopk_k == 5);
  CHECK_NOTHROW(online.validate(10));
  CHECK_THROWS_AS(online.validate(5), ConfigError);
  CHECK(LossConfig::offline_stage1().margin_type == MarginType::kAdditiveCosine);
  CHECK(online.large_margin().margin == 0.5);
  CHECK(LossConfig::offline_stage1().large_margin().margin == 0.35);
  CHECK(!online.large_margin().intertopk_enabled());
  LossConfig bad;
  bad.margin = 1.6;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("hand-built 2x2x2 instances match the scalar derivation") {
  const std::vector<std::vector<double>> emb = {{1.0, 0.0}, {1.2, 1.6}};
  const std::vector<int> labels = {0, 1};
  LossConfig cfg;
  cfg.subcenters = 1;
  cfg.intertopk_k = 0;
  cfg.intertopk_penalty = 0;
  const std::vector<std::vector<std::vector<double>>> w1 = {{{1.0, 1.0}}, {{-1.0, 2.0}}};
  CHECK(std::abs(margin_softmax_loss(to_matrix(emb), labels, head_from(w1), cfg).loss -
                 scalar_margin_loss(emb, labels, w1, cfg)) < 1e-10);

  cfg.margin_type = MarginType::kAdditiveCosine;
  cfg.subcenters = 2;
  cfg.intertopk_k = 1;
  cfg.intertopk_penalty = 0.06;
  const std::vector<std::vector<std::vector<double>>> w2 = {{{1.0, 1.0}, {0.3, -1.0}}, {{-1.0, 2.0}, {2.0, 0.5}}};
  CHECK(std::abs(margin_softmax_loss(to_matrix(emb), labels, head_from(w2), cfg).loss -
                 scalar_margin_loss(emb, labels, w2, cfg)) < 1e-10);
}

TEST_CASE("margins off reduce to softmax cross-entropy on scaled cosines") {
  Rng rng(3);
  const MatrixXd e = testing::gaussian(5, 6, rng);
  const ClassifierHead h = ClassifierHead::random(4, 1, 6, rng);
  LossConfig cfg;
  cfg.margin = 0;
  cfg.subcenters = 1;
  cfg.intertopk_k = 0;
  const std::vector<int> y = {0, 3, 1, 1, 2};
  const MatrixXd logits = 32.0 * normalized_rows(e) * normalized_rows(h.weights).transpose();
  double ce = 0;
  for (int i = 0; i < 5; ++i) ce += std::log(logits.row(i).array().exp().sum()) - logits(i, y[static_cast<std::size_t>(i)]);
  CHECK(margin_softmax_loss(e, y, h, cfg).loss == doctest::Approx(ce / 5).epsilon(1e-12));
}

TEST_CASE("reduction identities are bit-identical") {
  Rng rng(4);
  const MatrixXd e = testing::gaussian(8, 16, rng);
  const std::vector<int> y = {0, 1, 2, 3, 4, 5, 6, 7};
  for (MarginType t : {MarginType::kAdditiveAngle, MarginType::kAdditiveCosine}) {
    LossConfig with;
    with.margin_type = t;
    with.intertopk_penalty = 0.0;
    LossConfig without = with;
    without.intertopk_k = 0;
    const ClassifierHead h = ClassifierHead::random(10, 3, 16, rng);
    const auto a = margin_softmax_loss(e, y, h, with);
    const auto b = margin_softmax_loss(e, y, h, without);
    CHECK(a.loss == b.loss);
    CHECK(a.grad_embeddings == b.grad_embeddings);
    CHECK(a.grad_weights == b.grad_weights);

    // K = 1 against the same classes carried as three identical subcenters.
    LossConfig k1 = without;
    k1.subcenters = 1;
    LossConfig k3 = without;
    const ClassifierHead single = ClassifierHead::random(10, 1, 16, rng);
    ClassifierHead copies;
    copies.classes = 10;
    copies.subcenters = 3;
    copies.weights.resize(30, 16);
    for (int c = 0; c < 30; ++c) copies.weights.row(c) = single.weights.row(c / 3);
    const auto s = margin_softmax_loss(e, y, single, k1);
    const auto m = margin_softmax_loss(e, y, copies, k3);
    CHECK(s.loss == m.loss);
    CHECK(s.grad_embeddings == m.grad_embeddings);
    CHECK(s.logit_grad == m.logit_grad);
  }
}

TEST_CASE("loss increases with the margin") {
  Rng rng(5);
  for (MarginType t : {MarginType::kAdditiveAngle, MarginType::kAdditiveCosine}) {
    for (int rep = 0; rep < 20; ++rep) {
      const auto inst = testing::sample_margin_instance(LossConfig{}, rng);
      LossConfig cfg;
      cfg.margin_type = t;
      double prev = -1;
      for (double m : {0.0, 0.1, 0.2, 0.3, 0.5}) {
        cfg.margin = m;
        const double l = margin_softmax_loss(inst.embeddings, inst.labels, inst.head, cfg).loss;
        CHECK(l > prev);
        prev = l;
      }
    }
  }
}

TEST_CASE("margin loss errors") {
  Rng rng(6);
  const ClassifierHead h = ClassifierHead::random(10, 3, 4, rng);
  MatrixXd e = testing::gaussian(2, 4, rng);
  CHECK_THROWS_AS(margin_softmax_loss(e, {0, 10}, h, LossConfig{}), DataError);
  e.row(1).setZero();
  CHECK_THROWS_AS(margin_softmax_loss(e, {0, 1}, h, LossConfig{}), DataError);
}

TEST_CASE("finite difference harness") {
  // f(x) = x' A x / 2 + b' x, gradient A x + b.
  Rng rng(7);
  const MatrixXd r = testing::gaussian(5, 5, rng);
  const MatrixXd A = r * r.transpose();
  const VectorXd b = testing::gaussian(5, 1, rng);
  const VectorXd x = testing::gaussian(5, 1, rng);
  auto f = [&](const VectorXd& p) { return 0.5 * p.dot(A * p) + b.dot(p); };
  CHECK(finite_diff_check(f, x, A * x + b) < 1e-8);
  CHECK(finite_diff_check(f, x, A * x) > 1e-3);
}

TEST_CASE("gradients match finite differences") {
  Rng rng(8);
  for (MarginType t : {MarginType::kAdditiveAngle, MarginType::kAdditiveCosine}) {
    for (int k : {1, 3}) {
      for (double mp : {0.0, 0.06}) {
        LossConfig cfg;
        cfg.margin_type = t;
        cfg.subcenters = k;
        cfg.intertopk_penalty = mp;
        for (int rep = 0; rep < 5; ++rep) {
          const auto inst = testing::sample_margin_instance(cfg, rng);
          CHECK(testing::margin_gradient_error(inst, cfg) < 1e-4);
        }
      }
    }
  }
  for (int rep = 0; rep < 5; ++rep) {
    const MatrixXd p = testing::gaussian(6, 16, rng), q = testing::gaussian(6, 16, rng);
    CHECK(testing::apl_gradient_error(p, q, 10.0, -5.0) < 1e-4);
  }
}

TEST_CASE("angular prototypical loss values") {
  MatrixXd p(2, 2);
  p << 1, 0, 0, 1;
  CHECK(angular_prototypical_loss(p, p, 10.0, 0.0).loss == doctest::Approx(std::log1p(std::exp(-10.0))).epsilon(1e-12));

  const MatrixXd same = MatrixXd::Constant(5, 3, 0.7);
  CHECK(angular_prototypical_loss(same, same, 10.0, -5.0).loss == doctest::Approx(std::log(5.0)).epsilon(1e-12));

  Rng rng(9);
  const MatrixXd a = testing::gaussian(6, 8, rng), b = testing::gaussian(6, 8, rng);
  CHECK(angular_prototypical_loss(a * 5.0, b * 5.0, 10.0, -5.0).loss ==
        doctest::Approx(angular_prototypical_loss(a, b, 10.0, -5.0).loss).epsilon(1e-12));
  CHECK_THROWS_AS(angular_prototypical_loss(a.topRows(1), b.topRows(1), 10.0, -5.0), DataError);
}

TEST_CASE("joint loss") {
  Rng rng(10);
  const int C = 6, D = 12;
  LossConfig cfg;
  cfg.intertopk_k = 0;
  cfg.intertopk_penalty = 0;
  const ClassifierHead src_only = ClassifierHead::random(C, 3, D, rng);
  MarginBatch src{testing::gaussian(8, D, rng), {0, 1, 2, 3, 4, 5, 0, 1}};

  JointInputs in;
  in.source = src;
  in.source_head = &src_only;
  in.source_classes = C;
  in.source_cfg = cfg;
  in.target_cfg = cfg;
  for (JointMode mode : {JointMode::kApl, JointMode::kTcl, JointMode::kOcl}) {
    in.mode = mode;
    in.target = MarginBatch{};
    const auto j = joint_loss(in);
    CHECK(j.loss == margin_softmax_loss(src.embeddings, src.labels, src_only, cfg).loss);
    CHECK(!j.target);
  }

  // OCL with a shared head whose target half duplicates the source half:
  // identical batches give twice the single-batch value.
  ClassifierHead shared;
  shared.classes = 2 * C;
  shared.subcenters = 3;
  shared.weights.resize(2 * C * 3, D);
  shared.weights.topRows(C * 3) = src_only.weights;
  shared.weights.bottomRows(C * 3) = src_only.weights;
  in.source_head = &shared;
  in.mode = JointMode::kOcl;
  in.target = src;
  const auto ocl = joint_loss(in);
  CHECK(std::abs(ocl.loss - 2 * ocl.source.loss) < 1e-12);
  CHECK(ocl.loss == ocl.source.loss + ocl.target->loss);

  in.mode = JointMode::kTcl;
  CHECK_THROWS_AS(joint_loss(in), ConfigError);  // no target head
  const ClassifierHead tgt = ClassifierHead::random(C, 3, D, rng, HeadId::kTarget);
  in.target_head = &tgt;
  const auto tcl = joint_loss(in);
  CHECK(tcl.loss == tcl.source.loss + margin_softmax_loss(src.embeddings, src.labels, tgt, cfg).loss);
  in.target->labels.pop_back();
  CHECK_THROWS_AS(joint_loss(in), ConfigError);

  in.mode = JointMode::kApl;
  in.apl = AplBatch{testing::gaussian(4, D, rng), testing::gaussian(4, D, rng)};
  const auto apl = joint_loss(in);
  CHECK(apl.loss == apl.source.loss + angular_prototypical_loss(in.apl->first, in.apl->second, 10.0, -5.0).loss);
}

}  // TEST_SUITE
