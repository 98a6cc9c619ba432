// tests/unit/dlglc_test.cpp

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

#include "spkv/dlglc.hpp"
#include "spkv/error.hpp"
#include "unit/util.hpp"

#include <cmath>

using namespace spkv;
using namespace spkv::dlg;

namespace {

std::vector<double> two_clusters(std::size_t n, double m1, double s1, double m2, double s2, double frac1, Rng& rng) {
  std::normal_distribution<double> a(m1, s1), b(m2, s2);
  std::vector<double> x;
  for (std::size_t i = 0; i < n; ++i) x.push_back(static_cast<double>(i) < frac1 * static_cast<double>(n) ? a(rng) : b(rng));
  return x;
}

}  // namespace

TEST_SUITE("dlglc") {

TEST_CASE("loss trace EMA") {
  LossTrace t(0.9);
  t.update({"a", "b"}, {1.0, 2.0});
  t.update({"a"}, {3.0});
  CHECK(t.at("a") == doctest::Approx(0.9 * 1.0 + 0.1 * 3.0));
  CHECK(t.at("b") == 2.0);
  CHECK(t.values({"b", "a"}).size() == 2);
  CHECK_THROWS_AS(t.at("c"), DataError);
  CHECK_THROWS_AS(t.update({"a"}, {-1.0}), DataError);
  CHECK_THROWS_AS(LossTrace(1.0), ConfigError);
}

TEST_CASE("GMM recovers a known mixture") {
  Rng rng(1);
  // N(0.5, 0.01) and N(5, 0.01): variance 0.01, sd 0.1.
  const auto x = two_clusters(2000, 0.5, 0.1, 5.0, 0.1, 0.5, rng);
  const auto m = fit_loss_gmm(x, 7);
  CHECK(std::abs(m.mu1 - 0.5) < 0.05);
  CHECK(std::abs(m.mu2 - 5.0) < 0.05);
  CHECK(std::abs(m.pi1 - 0.5) < 0.05);
  CHECK(std::abs(m.var1 - 0.01) < 0.005);
  CHECK(m.threshold >= m.mu1);
  CHECK(m.threshold <= m.mu2);
}

TEST_CASE("delta clusters floor the variances") {
  std::vector<double> x(50, 1.0);
  x.insert(x.end(), 50, 9.0);
  const auto m = fit_loss_gmm(x);
  CHECK(m.mu1 == doctest::Approx(1.0));
  CHECK(m.mu2 == doctest::Approx(9.0));
  CHECK(m.var1 == 1e-8);
  CHECK(m.var2 == 1e-8);
  CHECK(m.variance_floored);
  CHECK(m.threshold == doctest::Approx(5.0));
}

TEST_CASE("EM log-likelihood never decreases") {
  Rng rng(2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int rep = 0; rep < 30; ++rep) {
    const auto x = two_clusters(300, u(rng), 0.05 + u(rng), 1 + 3 * u(rng), 0.05 + u(rng), 0.2 + 0.6 * u(rng), rng);
    const auto m = fit_loss_gmm(x, static_cast<std::uint64_t>(rep));
    for (std::size_t i = 1; i < m.ll_trace.size(); ++i) CHECK(m.ll_trace[i] >= m.ll_trace[i - 1] - 1e-12);
    CHECK(m.pi1 + m.pi2 == doctest::Approx(1.0));
    CHECK(m.mu1 <= m.mu2);
  }
}

TEST_CASE("GMM input errors") {
  CHECK_THROWS_AS(fit_loss_gmm({1.0, 2.0, 3.0}), DataError);
  CHECK_THROWS_AS(fit_loss_gmm({2.0, 2.0, 2.0, 2.0, 2.0}), DataError);
}

TEST_CASE("gate thresholds") {
  GateModel sym;
  sym.mu1 = 1.0;
  sym.mu2 = 3.0;
  sym.var1 = sym.var2 = 0.25;
  CHECK(gate_threshold(sym) == doctest::Approx(2.0));

  GateModel heavy = sym;
  heavy.pi1 = 0.9;
  heavy.pi2 = 0.1;
  // Equal variances: t = mid + var log(pi1 / pi2) / (mu2 - mu1).
  CHECK(gate_threshold(heavy) == doctest::Approx(2.0 + 0.25 * std::log(9.0) / 2.0));
  CHECK(gate_threshold(heavy) > 2.0);

  GateModel wide = sym;
  wide.var2 = 4.0;
  const double t = gate_threshold(wide);
  auto weighted = [&](double x, double pi, double mu, double var) {
    return pi * std::exp(-(x - mu) * (x - mu) / (2 * var)) / std::sqrt(2 * M_PI * var);
  };
  CHECK(weighted(t, 0.5, 1.0, 0.25) == doctest::Approx(weighted(t, 0.5, 3.0, 4.0)).epsilon(1e-9));
  CHECK(t > 1.0);
  CHECK(t < 3.0);

  GateModel none = sym;
  none.pi1 = 1e-30;  // component 2 dominates everywhere in the interval
  none.pi2 = 1.0;
  CHECK(gate_threshold(none) == doctest::Approx(2.0));
}

TEST_CASE("selection and correction") {
  GateModel m;
  m.threshold = 1.0;
  CorrectionConfig cfg;
  MatrixXd logits(3, 3);
  logits << 0, 0, 0,                      // reliable
      0, std::log(0.95 / 0.025) * 0.5, 0,  // sharpened p_max = 0.95
      0.1, 0, 0;                           // flat
  const auto c = select_and_correct({0.2, 2.0, 2.0}, m, logits, {0, 2, 1}, cfg);
  CHECK(c.fate[0] == SampleFate::kReliable);
  CHECK(c.labels[0] == 0);
  CHECK(c.targets(0, 0) == 1.0);
  CHECK(c.fate[1] == SampleFate::kCorrected);
  CHECK(c.labels[1] == 1);
  CHECK(c.targets(1, 1) == doctest::Approx(0.95));
  CHECK(c.fate[2] == SampleFate::kExcluded);
  CHECK(c.weights[2] == 0.0);
  for (Eigen::Index i = 0; i < 3; ++i) CHECK(std::abs(c.targets.row(i).sum() - 1.0) < 1e-9);
  CHECK(gate_diagnostics(m, c).find("reliable_fraction=") != std::string::npos);

  const auto all = select_and_correct({0.1, 0.5, 0.9}, m, logits, {0, 1, 2}, cfg);
  CHECK(all.weights.sum() == 3.0);
  CHECK(all.reliable_fraction() == 1.0);

  CHECK_THROWS_AS(select_and_correct({0.1, 0.5}, m, logits, {0, 1}, cfg), DataError);
  CorrectionConfig bad;
  bad.confidence = 1.0;
  CHECK_THROWS_AS(select_and_correct({0.1, 0.5, 0.9}, m, logits, {0, 1, 2}, bad), ConfigError);
}

}  // TEST_SUITE
