// src/dlglc.cpp

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

#include "spkv/dlglc.hpp"

#include "spkv/corpus_io.hpp"
#include "spkv/error.hpp"
#include "spkv/parallel.hpp"

#include <algorithm>
#include <cmath>

namespace spkv::dlg {

// ---------------------------------------------------------------- LossTrace

LossTrace::LossTrace(double decay) : decay_(decay) {
  if (!(decay >= 0.0 && decay < 1.0)) throw ConfigError("EMA decay must be in [0, 1)");
}

void LossTrace::update(const std::vector<std::string>& names, const std::vector<double>& losses) {
  if (names.size() != losses.size()) throw DataError("loss trace update: names and losses differ in length");
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (!std::isfinite(losses[i]) || losses[i] < 0.0)
      throw DataError("loss for " + names[i] + " is negative or non-finite");
    auto [it, fresh] = ema_.try_emplace(names[i], losses[i]);
    if (!fresh) it->second = decay_ * it->second + (1.0 - decay_) * losses[i];
  }
}

double LossTrace::at(const std::string& name) const {
  auto it = ema_.find(name);
  if (it == ema_.end()) throw DataError("no loss recorded for " + name);
  return it->second;
}

std::vector<double> LossTrace::values(const std::vector<std::string>& names) const {
  std::vector<double> out;
  out.reserve(names.size());
  for (const auto& n : names) out.push_back(at(n));
  return out;
}

// -------------------------------------------------------------------- GMM

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

double log_normal(double x, double mu, double var) {
  const double d = x - mu;
  return -0.5 * (kLog2Pi + std::log(var) + d * d / var);
}

double percentile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

}  // namespace

double mixture_log_likelihood(const GateModel& m, const std::vector<double>& x) {
  double total = 0.0;
  for (double v : x) {
    const double a = std::log(m.pi1) + log_normal(v, m.mu1, m.var1);
    const double b = std::log(m.pi2) + log_normal(v, m.mu2, m.var2);
    const double mx = std::max(a, b);
    total += mx + std::log(std::exp(a - mx) + std::exp(b - mx));
  }
  return total / static_cast<double>(x.size());
}

GateModel fit_loss_gmm(const std::vector<double>& x, std::uint64_t seed, const GmmOptions& opts) {
  const std::size_t n = x.size();
  if (n < 4) throw DataError("loss GMM needs at least 4 samples, got " + std::to_string(n));
  for (double v : x)
    if (!std::isfinite(v)) throw DataError("non-finite loss value");
  const auto [mn, mx] = std::minmax_element(x.begin(), x.end());
  if (*mn == *mx) throw DataError("all losses are equal; the gate is undefined");

  GateModel m;
  m.mu1 = percentile(x, 0.1);
  m.mu2 = percentile(x, 0.9);
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(n);
  double pooled = 0.0;
  for (double v : x) pooled += (v - mean) * (v - mean);
  m.var1 = m.var2 = std::max(pooled / static_cast<double>(n), opts.variance_floor);

  Rng rng(seed);
  std::vector<double> r(n);  // responsibility of component 1
  double prev = mixture_log_likelihood(m, x);
  for (int iter = 0; iter < opts.max_iter; ++iter) {
    // E step
    for (std::size_t i = 0; i < n; ++i) {
      const double a = std::log(m.pi1) + log_normal(x[i], m.mu1, m.var1);
      const double b = std::log(m.pi2) + log_normal(x[i], m.mu2, m.var2);
      r[i] = 1.0 / (1.0 + std::exp(b - a));
    }
    // M step
    double n1 = 0.0, s1 = 0.0, s2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      n1 += r[i];
      s1 += r[i] * x[i];
      s2 += (1.0 - r[i]) * x[i];
    }
    const double n2 = static_cast<double>(n) - n1;
    if (n1 < 1e-12 || n2 < 1e-12) {
      // One component lost all mass: restart it on a random sample.
      const double anchor = x[std::uniform_int_distribution<std::size_t>(0, n - 1)(rng)];
      (n1 < 1e-12 ? m.mu1 : m.mu2) = anchor;
      m.pi1 = m.pi2 = 0.5;
      ++m.reanchored;
      m.ll_trace.clear();
      prev = mixture_log_likelihood(m, x);
      continue;
    }
    m.pi1 = n1 / static_cast<double>(n);
    m.pi2 = 1.0 - m.pi1;
    m.mu1 = s1 / n1;
    m.mu2 = s2 / n2;
    double v1 = 0.0, v2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      v1 += r[i] * (x[i] - m.mu1) * (x[i] - m.mu1);
      v2 += (1.0 - r[i]) * (x[i] - m.mu2) * (x[i] - m.mu2);
    }
    v1 /= n1;
    v2 /= n2;
    if (v1 < opts.variance_floor || v2 < opts.variance_floor) m.variance_floored = true;
    m.var1 = std::max(v1, opts.variance_floor);
    m.var2 = std::max(v2, opts.variance_floor);

    const double ll = mixture_log_likelihood(m, x);
    m.ll_trace.push_back(ll);
    m.iterations = iter + 1;
    const bool done = std::abs(ll - prev) <= opts.tol;
    prev = ll;
    if (done) break;
  }
  if (m.mu1 > m.mu2) {
    std::swap(m.mu1, m.mu2);
    std::swap(m.var1, m.var2);
    std::swap(m.pi1, m.pi2);
  }
  m.log_likelihood = prev;
  m.threshold = gate_threshold(m);
  return m;
}

double gate_threshold(const GateModel& m) {
  const double mid = 0.5 * (m.mu1 + m.mu2);
  if (!(m.mu2 > m.mu1)) return mid;
  // f(t) = log(pi1 N1(t)) - log(pi2 N2(t)) = a t^2 + b t + c
  const long double p1 = 1.0L / m.var1, p2 = 1.0L / m.var2;
  const long double a = 0.5L * (p2 - p1);
  const long double b = m.mu1 * p1 - m.mu2 * p2;
  const long double c = std::log(static_cast<long double>(m.pi1) / m.pi2) -
                        0.5L * std::log(static_cast<long double>(m.var1) / m.var2) -
                        0.5L * m.mu1 * m.mu1 * p1 + 0.5L * m.mu2 * m.mu2 * p2;
  std::vector<long double> roots;
  if (std::abs(a) <= 1e-12L * (std::abs(b) + 1e-300L)) {
    if (b != 0.0L) roots.push_back(-c / b);
  } else {
    const long double disc = b * b - 4.0L * a * c;
    if (disc >= 0.0L) {
      const long double q = -0.5L * (b + std::copysign(std::sqrt(disc), b));
      if (q != 0.0L) roots.push_back(c / q);
      roots.push_back(q / a);
    }
  }
  // The crossing where component 2 takes over (f decreasing).
  double best = mid;
  bool found = false;
  for (long double t : roots) {
    if (t < m.mu1 || t > m.mu2) continue;
    const long double slope = 2.0L * a * t + b;
    if (slope > 0.0L) continue;
    if (!found || std::abs(static_cast<double>(t) - mid) < std::abs(best - mid)) best = static_cast<double>(t);
    found = true;
  }
  return best;
}

// ------------------------------------------------------------- correction

void CorrectionConfig::validate() const {
  if (!(confidence > 0.0 && confidence < 1.0)) throw ConfigError("confidence rho must be in (0, 1)");
  if (!(temperature > 0.0)) throw ConfigError("temperature must be positive");
  if (!(ema_decay >= 0.0 && ema_decay < 1.0)) throw ConfigError("EMA decay must be in [0, 1)");
}

double Correction::reliable_fraction() const {
  if (fate.empty()) return 0.0;
  return static_cast<double>(std::count(fate.begin(), fate.end(), SampleFate::kReliable)) /
         static_cast<double>(fate.size());
}

Correction select_and_correct(const std::vector<double>& losses, const GateModel& model, const MatrixXd& logits,
                              const std::vector<int>& pseudo, const CorrectionConfig& cfg, int jobs) {
  cfg.validate();
  const std::size_t n = losses.size();
  if (pseudo.size() != n) throw DataError("pseudo labels do not cover every sample");
  if (static_cast<std::size_t>(logits.rows()) != n)
    throw DataError("logits for " + std::to_string(logits.rows()) + " samples, losses for " + std::to_string(n));
  const Eigen::Index C = logits.cols();
  Correction out;
  out.targets = MatrixXd::Zero(static_cast<Eigen::Index>(n), C);
  out.weights = VectorXd::Ones(static_cast<Eigen::Index>(n));
  out.fate.assign(n, SampleFate::kReliable);
  out.labels.assign(n, -1);
  parallel_for(n, jobs, [&](std::size_t i) {
    const auto row = static_cast<Eigen::Index>(i);
    const int y = pseudo[i];
    if (y < 0 || y >= C) throw DataError("pseudo label " + std::to_string(y) + " out of range");
    if (losses[i] <= model.threshold) {
      out.targets(row, y) = 1.0;
      out.labels[i] = y;
      return;
    }
    if (!logits.row(row).allFinite()) throw DataError("non-finite logits for sample " + std::to_string(i));
    const Eigen::RowVectorXd z = logits.row(row) / cfg.temperature;
    Eigen::RowVectorXd p = (z.array() - z.maxCoeff()).exp();
    p /= p.sum();
    Eigen::Index arg;
    const double top = p.maxCoeff(&arg);
    if (top >= cfg.confidence) {
      out.targets.row(row) = p;
      out.fate[i] = SampleFate::kCorrected;
      out.labels[i] = static_cast<int>(arg);
    } else {
      out.targets(row, y) = 1.0;
      out.weights[row] = 0.0;
      out.fate[i] = SampleFate::kExcluded;
    }
  });
  return out;
}

std::string gate_diagnostics(const GateModel& m, const Correction& c) {
  const auto count = [&](SampleFate f) { return std::count(c.fate.begin(), c.fate.end(), f); };
  return "mu1=" + io::format_real(m.mu1) + " mu2=" + io::format_real(m.mu2) + " tau=" + io::format_real(m.threshold) +
         " reliable_fraction=" + io::format_real(c.reliable_fraction()) +
         " corrected=" + std::to_string(count(SampleFate::kCorrected)) +
         " excluded=" + std::to_string(count(SampleFate::kExcluded));
}

}  // namespace spkv::dlg
