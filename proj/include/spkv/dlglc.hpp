// include/spkv/dlglc.hpp

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

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

namespace spkv::dlg {

/// Per-sample loss smoothed across epochs: l <- decay * l + (1 - decay) * new,
/// the first observation taken as is.
class LossTrace {
 public:
  explicit LossTrace(double decay = 0.9);

  void update(const std::vector<std::string>& names, const std::vector<double>& losses);
  double at(const std::string& name) const;  // throws DataError when unseen
  std::vector<double> values(const std::vector<std::string>& names) const;
  std::size_t size() const { return ema_.size(); }
  double decay() const { return decay_; }

 private:
  double decay_;
  std::unordered_map<std::string, double> ema_;
};

struct GmmOptions {
  int max_iter = 200;
  double tol = 1e-8;  // on the mean log-likelihood per sample
  double variance_floor = 1e-8;
};

/// Two 1-D Gaussians, component 1 the low-loss one.
struct GateModel {
  double pi1 = 0.5, pi2 = 0.5;
  double mu1 = 0.0, mu2 = 0.0;
  double var1 = 1.0, var2 = 1.0;
  double threshold = 0.0;
  double log_likelihood = 0.0;        // mean per sample
  std::vector<double> ll_trace;       // after every EM iteration
  int iterations = 0;
  bool variance_floored = false;
  int reanchored = 0;                 // components restarted after weight collapse
};

/// EM from percentile initialization (10th / 90th, equal weights, pooled
/// variance). Throws DataError for fewer than 4 losses or a constant input.
GateModel fit_loss_gmm(const std::vector<double>& losses, std::uint64_t seed = 0, const GmmOptions& opts = {});

/// Point in [mu1, mu2] where the weighted densities cross, else the midpoint.
double gate_threshold(const GateModel& model);

/// Mean log-likelihood of `x` under the mixture.
double mixture_log_likelihood(const GateModel& model, const std::vector<double>& x);

struct CorrectionConfig {
  double confidence = 0.5;   // rho
  double temperature = 0.5;  // T
  double ema_decay = 0.9;    // alpha

  void validate() const;  // ConfigError
};

enum class SampleFate { kReliable, kCorrected, kExcluded };

struct Correction {
  MatrixXd targets;  // N x C, rows sum to one
  VectorXd weights;  // 1 kept, 0 excluded
  std::vector<SampleFate> fate;
  std::vector<int> labels;  // argmax of the target row, -1 when excluded

  double reliable_fraction() const;
};

/// Reliable samples (loss <= threshold) keep a one-hot pseudo label;
/// unreliable ones take softmax(logits / T) when its maximum reaches rho and
/// are excluded otherwise.
Correction select_and_correct(const std::vector<double>& losses, const GateModel& model, const MatrixXd& logits,
                              const std::vector<int>& pseudo, const CorrectionConfig& cfg, int jobs = 1);

/// `mu1=… mu2=… tau=… reliable_fraction=…` on one line.
std::string gate_diagnostics(const GateModel& model, const Correction& c);

}  // namespace spkv::dlg
