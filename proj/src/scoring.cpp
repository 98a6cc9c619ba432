// src/scoring.cpp

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

#include "spkv/scoring.hpp"

#include "spkv/error.hpp"
#include "spkv/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace spkv::scoring {

namespace {

double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }
double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

void require_both_classes(const std::vector<int>& labels) {
  const auto targets = std::count(labels.begin(), labels.end(), 1);
  if (targets == 0 || targets == static_cast<long>(labels.size()))
    throw DataError("need both target and nontarget trials");
}

std::vector<int> labels_of(const ScoreSet& s) {
  s.validate();
  if (!s.trials.labeled()) throw DataError("score set carries no labels");
  return s.trials.labels();
}

void check_same_pairs(const ScoreSet& a, const ScoreSet& b, std::size_t which) {
  if (a.trials.size() != b.trials.size())
    throw DataError("score set " + std::to_string(which) + " has " + std::to_string(b.trials.size()) +
                    " pairs, expected " + std::to_string(a.trials.size()));
  for (std::size_t i = 0; i < a.trials.size(); ++i) {
    const auto& x = a.trials.pairs()[i];
    const auto& y = b.trials.pairs()[i];
    if (x.enroll != y.enroll || x.test != y.test)
      throw DataError("score set " + std::to_string(which) + " differs from the first at pair " +
                      std::to_string(i + 1));
  }
}

MatrixXd unit_rows(const EmbeddingSet& emb) {
  MatrixXd m = emb.to_double();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    const double n = m.row(i).norm();
    if (!(n > 0.0)) throw DataError("zero-norm embedding: " + emb.name(static_cast<std::size_t>(i)));
    m.row(i) /= n;
  }
  return m;
}

}  // namespace

// ----------------------------------------------------------- cosine scoring

ScoreSet score_trials(const EmbeddingSet& emb, const TrialList& trials, int jobs) {
  const auto& pairs = trials.pairs();
  std::vector<std::size_t> ei(pairs.size()), ti(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    ei[i] = emb.index_of(pairs[i].enroll);
    ti[i] = emb.index_of(pairs[i].test);
  }
  ScoreSet out{trials, std::vector<double>(pairs.size())};
  parallel_for(pairs.size(), jobs, [&](std::size_t i) {
    const VectorXd e = emb.vector(ei[i]).cast<double>();
    const VectorXd t = emb.vector(ti[i]).cast<double>();
    const double ne = e.norm(), nt = t.norm();
    if (!(ne > 0.0)) throw DataError("zero-norm embedding: " + pairs[i].enroll);
    if (!(nt > 0.0)) throw DataError("zero-norm embedding: " + pairs[i].test);
    out.scores[i] = std::clamp(e.dot(t) / (ne * nt), -1.0, 1.0);
  });
  return out;
}

// ------------------------------------------------------------------ cohort

Cohort build_cohort(const EmbeddingSet& emb, const std::map<std::string, std::string>& speaker_of) {
  std::map<std::string, std::pair<VectorXd, double>> sums;  // speaker -> (sum, sum of norms)
  for (std::size_t i = 0; i < emb.size(); ++i) {
    auto it = speaker_of.find(emb.name(i));
    if (it == speaker_of.end()) throw DataError("no speaker for embedding " + emb.name(i));
    auto [slot, fresh] = sums.try_emplace(it->second, VectorXd::Zero(emb.dim()), 0.0);
    const VectorXd v = emb.vector(i).cast<double>();
    slot->second.first += v;
    slot->second.second += v.norm();
  }
  Cohort c{EmbeddingSet(emb.dim())};
  for (const auto& [spk, acc] : sums) {
    const double n = acc.first.norm();
    if (!(n > 1e-12 * acc.second)) throw DataError("speaker " + spk + " has a zero mean embedding");
    c.embeddings.add(spk, VectorXd(acc.first / n));
  }
  return c;
}

// ----------------------------------------------------------------- as-norm

CohortStats cohort_stats(const Eigen::Ref<const VectorXd>& unit_embedding, const MatrixXd& unit_cohort, int top_n) {
  const VectorXd all = unit_cohort * unit_embedding;
  std::vector<double> s(all.data(), all.data() + all.size());
  const auto n = static_cast<std::size_t>(top_n);
  std::partial_sort(s.begin(), s.begin() + static_cast<long>(n), s.end(), std::greater<>());
  double mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) mean += s[i];
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (std::size_t i = 0; i < n; ++i) var += (s[i] - mean) * (s[i] - mean);
  var /= static_cast<double>(n);
  return {mean, std::sqrt(var)};
}

ScoreSet as_norm(const ScoreSet& raw, const EmbeddingSet& emb, const Cohort& cohort, int top_n, int jobs) {
  raw.validate();
  if (top_n < 1 || static_cast<std::size_t>(top_n) > cohort.size())
    throw ConfigError("as-norm top-n " + std::to_string(top_n) + " outside [1, cohort size " +
                      std::to_string(cohort.size()) + "]");
  if (cohort.embeddings.dim() != emb.dim()) throw DataError("cohort and embeddings differ in dimension");
  const MatrixXd unit_cohort = unit_rows(cohort.embeddings);

  // Statistics once per distinct name, in first-appearance order.
  std::vector<std::size_t> names;
  std::vector<std::size_t> slot(emb.size(), std::numeric_limits<std::size_t>::max());
  std::vector<std::size_t> es(raw.trials.size()), ts(raw.trials.size());
  auto slot_of = [&](const std::string& name) {
    const std::size_t i = emb.index_of(name);
    if (slot[i] == std::numeric_limits<std::size_t>::max()) {
      slot[i] = names.size();
      names.push_back(i);
    }
    return slot[i];
  };
  for (std::size_t k = 0; k < raw.trials.size(); ++k) {
    es[k] = slot_of(raw.trials.pairs()[k].enroll);
    ts[k] = slot_of(raw.trials.pairs()[k].test);
  }
  std::vector<CohortStats> stats(names.size());
  parallel_for(names.size(), jobs, [&](std::size_t j) {
    VectorXd v = emb.vector(names[j]).cast<double>();
    const double n = v.norm();
    if (!(n > 0.0)) throw DataError("zero-norm embedding: " + emb.name(names[j]));
    stats[j] = cohort_stats(v / n, unit_cohort, top_n);
    if (!(stats[j].stddev > 1e-12))
      throw NumericalError("as-norm: zero cohort score spread for " + emb.name(names[j]));
  });

  ScoreSet out{raw.trials, std::vector<double>(raw.scores.size())};
  for (std::size_t k = 0; k < raw.scores.size(); ++k) {
    const CohortStats& e = stats[es[k]];
    const CohortStats& t = stats[ts[k]];
    const double s = raw.scores[k];
    out.scores[k] = 0.5 * ((s - e.mean) / e.stddev + (s - t.mean) / t.stddev);
  }
  return out;
}

// ------------------------------------------------------------- calibration

VectorXd fit_logistic(const MatrixXd& x, const std::vector<int>& labels, const LogisticOptions& opts) {
  if (static_cast<std::size_t>(x.rows()) != labels.size()) throw DataError("feature rows and labels differ");
  require_both_classes(labels);
  if (!(opts.prior > 0.0 && opts.prior < 1.0)) throw ConfigError("calibration prior must be in (0, 1)");
  const auto n_tar = static_cast<double>(std::count(labels.begin(), labels.end(), 1));
  const auto n_non = static_cast<double>(labels.size()) - n_tar;
  const double offset = std::log(opts.prior / (1.0 - opts.prior));
  VectorXd c(x.rows()), y(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const bool tar = labels[static_cast<std::size_t>(i)] == 1;
    c[i] = tar ? opts.prior / n_tar : (1.0 - opts.prior) / n_non;
    y[i] = tar ? 1.0 : 0.0;
  }
  auto objective = [&](const VectorXd& w) {
    const VectorXd z = (x * w).array() + offset;
    double j = 0.5 * opts.ridge * w.squaredNorm();
    for (Eigen::Index i = 0; i < z.size(); ++i) j += c[i] * softplus(y[i] > 0 ? -z[i] : z[i]);
    return j;
  };

  const Eigen::Index p = x.cols();
  VectorXd w = VectorXd::Zero(p);
  double j = objective(w);
  for (int iter = 0; iter < opts.max_iter; ++iter) {
    const VectorXd z = (x * w).array() + offset;
    VectorXd r(z.size()), h(z.size());
    for (Eigen::Index i = 0; i < z.size(); ++i) {
      const double s = sigmoid(z[i]);
      r[i] = c[i] * (s - y[i]);
      h[i] = c[i] * s * (1.0 - s);
    }
    const VectorXd grad = x.transpose() * r + opts.ridge * w;
    if (grad.lpNorm<Eigen::Infinity>() < opts.grad_tol) return w;
    MatrixXd hess = x.transpose() * h.asDiagonal() * x;
    hess.diagonal().array() += opts.ridge;
    const VectorXd step = hess.ldlt().solve(grad);
    double t = 1.0;
    for (int ls = 0; ls < 60; ++ls, t *= 0.5) {
      const VectorXd cand = w - t * step;
      const double jc = objective(cand);
      // Near the optimum the Armijo decrease drops below the summation
      // rounding of j; a full step that does not raise j beyond it is taken.
      const bool flat = jc <= j + 1e-12 * std::abs(j);
      if (jc <= j - 1e-4 * t * grad.dot(step) || (t == 1.0 && flat) || ls == 59) {
        w = cand;
        j = jc;
        break;
      }
    }
  }
  throw NumericalError("logistic regression did not converge in " + std::to_string(opts.max_iter) + " iterations");
}

namespace {

MatrixXd design_matrix(const ScoreSet& s, const MatrixXd* quality) {
  const auto n = static_cast<Eigen::Index>(s.scores.size());
  const Eigen::Index q = quality ? quality->cols() : 0;
  if (quality && quality->rows() != n)
    throw DataError("quality features have " + std::to_string(quality->rows()) + " rows for " +
                    std::to_string(n) + " pairs");
  MatrixXd x(n, 2 + q);
  x.col(0).setOnes();
  x.col(1) = Eigen::Map<const VectorXd>(s.scores.data(), n);
  if (q > 0) x.rightCols(q) = *quality;
  return x;
}

}  // namespace

CalibrationModel train_calibration(const ScoreSet& scores, const MatrixXd* quality, const LogisticOptions& opts) {
  const std::vector<int> labels = labels_of(scores);
  CalibrationModel m;
  m.weights = fit_logistic(design_matrix(scores, quality), labels, opts);
  m.degenerate = !(m.score_coef() > opts.degenerate_tol);
  return m;
}

ScoreSet apply_calibration(const CalibrationModel& model, const ScoreSet& raw, const MatrixXd* quality) {
  raw.validate();
  const int q = quality ? static_cast<int>(quality->cols()) : 0;
  if (q != model.quality_dims())
    throw DataError("calibration model expects " + std::to_string(model.quality_dims()) +
                    " quality features, got " + std::to_string(q));
  const VectorXd out = design_matrix(raw, quality) * model.weights;
  return ScoreSet{raw.trials, std::vector<double>(out.data(), out.data() + out.size())};
}

MatrixXd duration_quality(const TrialList& trials, const std::unordered_map<std::string, double>& duration) {
  MatrixXd q(static_cast<Eigen::Index>(trials.size()), 2);
  auto log_dur = [&](const std::string& name) {
    auto it = duration.find(name);
    if (it == duration.end()) throw DataError("no duration for " + name);
    if (!(it->second > 0.0)) throw DataError("non-positive duration for " + name);
    return std::log(it->second);
  };
  for (std::size_t i = 0; i < trials.size(); ++i) {
    q(static_cast<Eigen::Index>(i), 0) = log_dur(trials.pairs()[i].enroll);
    q(static_cast<Eigen::Index>(i), 1) = log_dur(trials.pairs()[i].test);
  }
  return q;
}

void write_calibration(const CalibrationModel& model, const std::filesystem::path& path) {
  std::vector<std::pair<std::string, std::string>> kv;
  kv.emplace_back("bias", io::format_real(model.bias()));
  kv.emplace_back("score", io::format_real(model.score_coef()));
  for (int i = 0; i < model.quality_dims(); ++i)
    kv.emplace_back("quality" + std::to_string(i + 1), io::format_real(model.weights[2 + i]));
  kv.emplace_back("degenerate", model.degenerate ? "1" : "0");
  io::write_pairs(kv, path);
}

CalibrationModel read_calibration(const std::filesystem::path& path) {
  const auto kv = io::read_pairs(path);
  std::vector<double> w;
  CalibrationModel m;
  for (const auto& [k, v] : kv) {
    if (k == "degenerate") {
      m.degenerate = v == "1";
    } else {
      const std::string expect = w.empty() ? "bias" : w.size() == 1 ? "score" : "quality" + std::to_string(w.size() - 1);
      if (k != expect) throw DataError(path.string() + ": expected key " + expect + ", got " + k);
      w.push_back(io::parse_real(v, k));
    }
  }
  if (w.size() < 2) throw DataError(path.string() + ": calibration needs bias and score");
  m.weights = Eigen::Map<const VectorXd>(w.data(), static_cast<Eigen::Index>(w.size()));
  return m;
}

// ------------------------------------------------------------------ fusion

ScoreSet fuse_scores(const std::vector<ScoreSet>& sets, const std::vector<double>& weights) {
  if (sets.empty()) throw ConfigError("fusion needs at least one score set");
  if (weights.size() != sets.size())
    throw ConfigError(std::to_string(weights.size()) + " fusion weights for " + std::to_string(sets.size()) +
                      " score sets");
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw ConfigError("fusion weights must be finite and nonnegative");
    total += w;
  }
  if (!(total > 0.0)) throw ConfigError("fusion weights are all zero");
  for (std::size_t k = 0; k < sets.size(); ++k) {
    sets[k].validate();
    if (k > 0) check_same_pairs(sets[0], sets[k], k + 1);
  }
  ScoreSet out{sets[0].trials, sets[0].scores};
  for (std::size_t i = 0; i < out.scores.size(); ++i) {
    // Anchored on the first set so identical inputs come back unchanged.
    const double base = sets[0].scores[i];
    double lo = base, hi = base, acc = 0.0;
    for (std::size_t k = 1; k < sets.size(); ++k) {
      const double s = sets[k].scores[i];
      acc += weights[k] / total * (s - base);
      lo = std::min(lo, s);
      hi = std::max(hi, s);
    }
    out.scores[i] = std::clamp(base + acc, lo, hi);
  }
  return out;
}

ScoreSet fuse_scores(const std::vector<ScoreSet>& sets) {
  return fuse_scores(sets, std::vector<double>(sets.size(), 1.0));
}

std::vector<double> learn_fusion_weights(const std::vector<ScoreSet>& validation, const LogisticOptions& opts) {
  if (validation.empty()) throw ConfigError("fusion needs at least one score set");
  const std::vector<int> labels = labels_of(validation[0]);
  const auto n = static_cast<Eigen::Index>(labels.size());
  MatrixXd x(n, 1 + static_cast<Eigen::Index>(validation.size()));
  x.col(0).setOnes();
  for (std::size_t k = 0; k < validation.size(); ++k) {
    validation[k].validate();
    if (k > 0) check_same_pairs(validation[0], validation[k], k + 1);
    x.col(1 + static_cast<Eigen::Index>(k)) = Eigen::Map<const VectorXd>(validation[k].scores.data(), n);
  }
  const VectorXd w = fit_logistic(x, labels, opts);
  std::vector<double> out(validation.size());
  double total = 0.0;
  for (std::size_t k = 0; k < out.size(); ++k) {
    out[k] = std::max(0.0, w[1 + static_cast<Eigen::Index>(k)]);
    total += out[k];
  }
  if (!(total > 0.0)) return std::vector<double>(out.size(), 1.0 / static_cast<double>(out.size()));
  for (double& v : out) v /= total;
  return out;
}

// ----------------------------------------------------------------- metrics

RocPoints roc_points(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size()) throw DataError("scores and labels differ in length");
  require_both_classes(labels);
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  const auto n_tar = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
  const std::size_t n_non = labels.size() - n_tar;

  RocPoints r;
  r.p_miss.push_back(0.0);
  r.p_fa.push_back(1.0);
  r.thresholds.push_back(-std::numeric_limits<double>::infinity());
  std::size_t miss = 0, rejected_non = 0;
  for (std::size_t i = 0; i < order.size();) {
    const double s = scores[order[i]];
    for (; i < order.size() && scores[order[i]] == s; ++i) (labels[order[i]] == 1 ? miss : rejected_non)++;
    r.p_miss.push_back(static_cast<double>(miss) / static_cast<double>(n_tar));
    r.p_fa.push_back(static_cast<double>(n_non - rejected_non) / static_cast<double>(n_non));
    r.thresholds.push_back(s);
  }
  return r;
}

namespace {

void eer_from_roc(const RocPoints& r, MetricsReport* out) {
  std::size_t i = 1;
  while (r.p_miss[i] < r.p_fa[i]) ++i;  // the last point (1, 0) always stops the scan
  const double a = r.p_miss[i - 1], b = r.p_miss[i];
  const double c = r.p_fa[i - 1], d = r.p_fa[i];
  const double t = (c - a) / ((b - a) - (d - c));
  out->eer = a + t * (b - a);
  out->threshold_at_eer = r.thresholds[i];
}

double mindcf_from_roc(const RocPoints& r, const DcfParams& p) {
  if (!(p.p_target > 0.0 && p.p_target < 1.0) || !(p.c_miss > 0.0) || !(p.c_fa > 0.0))
    throw ConfigError("minDCF needs p-target in (0, 1) and positive costs");
  const double norm = std::min(p.c_miss * p.p_target, p.c_fa * (1.0 - p.p_target));
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < r.p_miss.size(); ++i)
    best = std::min(best, (p.c_miss * p.p_target * r.p_miss[i] + p.c_fa * (1.0 - p.p_target) * r.p_fa[i]) / norm);
  return best;
}

}  // namespace

MetricsReport compute_metrics(const std::vector<double>& scores, const std::vector<int>& labels,
                              const DcfParams& params) {
  const RocPoints r = roc_points(scores, labels);
  MetricsReport m;
  m.params = params;
  eer_from_roc(r, &m);
  m.min_dcf = mindcf_from_roc(r, params);
  return m;
}

double compute_eer(const std::vector<double>& scores, const std::vector<int>& labels) {
  MetricsReport m;
  eer_from_roc(roc_points(scores, labels), &m);
  return m.eer;
}

double compute_mindcf(const std::vector<double>& scores, const std::vector<int>& labels, const DcfParams& params) {
  return mindcf_from_roc(roc_points(scores, labels), params);
}

MetricsReport compute_metrics(const ScoreSet& s, const DcfParams& params) {
  return compute_metrics(s.scores, labels_of(s), params);
}
double compute_eer(const ScoreSet& s) { return compute_eer(s.scores, labels_of(s)); }
double compute_mindcf(const ScoreSet& s, const DcfParams& params) {
  return compute_mindcf(s.scores, labels_of(s), params);
}

std::string format_metrics_line(const MetricsReport& r) {
  return "EER=" + io::format_real(r.eer) + " minDCF=" + io::format_real(r.min_dcf);
}

std::string format_metrics_keyvalue(const MetricsReport& r) {
  std::string out;
  out += "eer=" + io::format_real(r.eer) + '\n';
  out += "min_dcf=" + io::format_real(r.min_dcf) + '\n';
  out += "threshold_at_eer=" + io::format_real(r.threshold_at_eer) + '\n';
  out += "p_target=" + io::format_real(r.params.p_target) + '\n';
  out += "c_miss=" + io::format_real(r.params.c_miss) + '\n';
  out += "c_fa=" + io::format_real(r.params.c_fa) + '\n';
  return out;
}

}  // namespace spkv::scoring
