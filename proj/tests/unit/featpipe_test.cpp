// tests/unit/featpipe_test.cpp

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
#include "spkv/featpipe.hpp"
#include "unit/util.hpp"

#include <cmath>
#include <numbers>

using namespace spkv;
using namespace spkv::feat;

namespace {

Waveform sine(double hz, Eigen::Index n, double amp = 0.5, int sr = 16000) {
  Waveform w{Eigen::VectorXd(n), sr};
  for (Eigen::Index i = 0; i < n; ++i) w.samples[i] = amp * std::sin(2 * std::numbers::pi * hz * i / sr);
  return w;
}

Waveform noise(Eigen::Index n, Rng& rng, double sd = 0.1) {
  return Waveform{testing::gaussian(n, 1, rng, sd), 16000};
}

}  // namespace

TEST_SUITE("featpipe") {

TEST_CASE("speed perturbation lengths and identity") {
  Rng rng(1);
  const Waveform w = noise(16000, rng);
  CHECK(speed_perturb(w, 1.0).samples == w.samples);

  const Waveform fast = speed_perturb(w, 1.1);
  CHECK(std::abs(fast.size() - 14545) <= 1);
  const Waveform slow = speed_perturb(w, 0.9);
  CHECK(std::abs(slow.size() - std::lround(16000 / 0.9)) <= 1);

  for (double r : {1.1, 0.9, 1.3, 0.77}) {
    const Waveform back = speed_perturb(speed_perturb(w, r), 1.0 / r);
    CHECK(std::abs(back.size() - w.size()) <= 2);
  }
  CHECK_THROWS_AS(speed_perturb(w, 0.0), ConfigError);
  Waveform bad = w;
  bad.samples[10] = std::nan("");
  CHECK_THROWS_AS(speed_perturb(bad, 1.1), DataError);
}

TEST_CASE("speed perturbation of a tone scales its frequency") {
  // A 440 Hz tone played 1.1x faster is a 484 Hz tone; 0.9x gives 396 Hz.
  const Waveform w = sine(440.0, 16000);
  for (double r : {1.1, 0.9}) {
    const Waveform out = speed_perturb(w, r);
    const Waveform ref = sine(440.0 * r, out.size());
    const Eigen::Index margin = 400;  // kernel support near the edges
    const double err =
        (out.samples.segment(margin, out.size() - 2 * margin) - ref.samples.segment(margin, out.size() - 2 * margin))
            .cwiseAbs()
            .maxCoeff();
    CHECK(err < 2e-3);
  }
}

TEST_CASE("derived speakers") {
  CHECK(derived_speaker_id("id001", 1.0) == "id001");
  CHECK(derived_speaker_id("id001", 1.1) == "sp1.1-id001");
  CHECK(derived_speaker_id("id001", 0.9) == "sp0.9-id001");
  const auto counts = offline_plan_counts(1092009, 5994, AugmentConfig{});
  CHECK(counts.derived_speakers == 17982);
  CHECK(counts.speed_copies == 3276027);
  CHECK(counts.total_entries == 16380135);
}

TEST_CASE("noise gains") {
  Rng rng(2);
  const Waveform w = noise(8000, rng, 0.3);
  const Waveform asset = noise(4000, rng, 0.05);
  const Waveform same = apply_noise(w, NoiseType::kNoise, asset, kInfiniteSnrDb, rng);
  CHECK((same.samples - w.samples).norm() <= 1e-6 * w.samples.norm());

  CHECK(snr_gain(2.0, 2.0, 0.0) == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(snr_gain(1.0, 1.0, 20.0) == doctest::Approx(0.1).epsilon(1e-9));

  for (NoiseType t : {NoiseType::kBabble, NoiseType::kNoise, NoiseType::kMusic}) {
    const Waveform mixed = apply_noise(w, t, asset, 5.0, rng);
    const double added = signal_power(mixed.samples - w.samples);
    CHECK(10 * std::log10(signal_power(w.samples) / added) == doctest::Approx(5.0).epsilon(1e-9));
  }
  CHECK_THROWS_AS(apply_noise(Waveform{Eigen::VectorXd::Zero(100), 16000}, NoiseType::kNoise, asset, 5.0, rng),
                  NumericalError);
  CHECK_THROWS_AS(apply_noise(w, NoiseType::kNoise, Waveform{Eigen::VectorXd::Zero(100), 16000}, 5.0, rng),
                  NumericalError);
}

TEST_CASE("reverb with a unit impulse is the identity") {
  Rng rng(4);
  const Waveform w = noise(3000, rng);
  Waveform rir{Eigen::VectorXd::Zero(200), 16000};
  rir.samples[0] = 1.0;
  const Waveform out = apply_noise(w, NoiseType::kReverb, rir, 0.0, rng);
  CHECK((out.samples - w.samples).cwiseAbs().maxCoeff() < 1e-12);

  Waveform short_rir{Eigen::VectorXd::Zero(8), 16000};
  short_rir.samples[0] = 3.0;  // normalized away
  const Waveform out2 = apply_noise(w, NoiseType::kReverb, short_rir, 0.0, rng);
  CHECK((out2.samples - w.samples).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("fbank frame count and scaling") {
  Rng rng(6);
  const Waveform w = noise(16000, rng);
  const FeatureMatrix f = fbank(w);
  CHECK(f.frames.rows() == 98);
  CHECK(f.frames.cols() == 80);

  Waveform loud = w;
  loud.samples *= 2.0;
  const FeatureMatrix g = fbank(loud);
  CHECK((g.frames.array() - f.frames.array() - std::log(4.0)).abs().maxCoeff() < 1e-4);

  const FeatureMatrix z = fbank(Waveform{Eigen::VectorXd::Zero(4000), 16000});
  CHECK((z.frames.array() - z.frames(0, 0)).abs().maxCoeff() == 0.0);
  CHECK(z.frames(0, 0) == doctest::Approx(std::log(1e-10)));

  CHECK_THROWS_AS(fbank(Waveform{Eigen::VectorXd::Zero(399), 16000}), DataError);
}

TEST_CASE("fbank is covariant under a one-frame shift") {
  Rng rng(7);
  const Waveform w = noise(8000, rng);
  const Waveform shifted{w.samples.tail(w.size() - 160), 16000};
  const MatrixXd a = fbank(w).frames;
  const MatrixXd b = fbank(shifted).frames;
  REQUIRE(b.rows() == a.rows() - 1);
  CHECK((a.bottomRows(b.rows()) - b).cwiseAbs().maxCoeff() < 1e-5);
}

TEST_CASE("sliding mean normalization") {
  Rng rng(8);
  FeatureMatrix f{testing::gaussian(120, 5, rng) * 3.0};
  f.frames.rowwise() += Eigen::RowVectorXd::LinSpaced(5, -2, 2);
  const FeatureMatrix g = sliding_cmn(f, 300);
  CHECK(g.frames.colwise().mean().cwiseAbs().maxCoeff() < 1e-6);
  const MatrixXd global = f.frames.rowwise() - f.frames.colwise().mean();
  CHECK((g.frames - global).cwiseAbs().maxCoeff() < 1e-12);

  CHECK(sliding_cmn(f, 1).frames.cwiseAbs().maxCoeff() == 0.0);
  FeatureMatrix c{MatrixXd::Constant(400, 3, 7.5)};
  CHECK(sliding_cmn(c, 300).frames.cwiseAbs().maxCoeff() < 1e-12);

  // Long input: compare against a direct window mean.
  FeatureMatrix lng{testing::gaussian(700, 2, rng)};
  const int win = 51;
  const FeatureMatrix h = sliding_cmn(lng, win);
  for (Eigen::Index t : {0, 10, 25, 26, 300, 674, 675, 699}) {
    Eigen::Index start = std::clamp<Eigen::Index>(t - win / 2, 0, 700 - win);
    const Eigen::RowVectorXd mean = lng.frames.middleRows(start, win).colwise().mean();
    CHECK((h.frames.row(t) - (lng.frames.row(t) - mean)).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("online augmentation with everything disabled is fbank + CMN of a crop") {
  Rng data_rng(9);
  const Waveform w = noise(1700, data_rng);
  AugmentConfig cfg;
  cfg.speed_ratios = {1.0};
  cfg.noise_probability = 0.0;
  cfg.segment_seconds = 0.1;
  const NoiseBank bank = NoiseBank::synthetic(1);
  Rng rng(10);
  const auto out = online_augment(w, cfg, bank, rng);
  CHECK(!out.noise);
  bool found = false;
  for (Eigen::Index start = 0; start + 1600 <= w.size() && !found; ++start) {
    const Waveform crop{w.samples.segment(start, 1600), 16000};
    const MatrixXd ref = sliding_cmn(fbank(crop), cfg.cmn_window).frames;
    found = ref.rows() == out.features.frames.rows() && ref == out.features.frames;
  }
  CHECK(found);
}

TEST_CASE("online augmentation is deterministic") {
  Rng data_rng(12);
  const Waveform w = noise(48000, data_rng);
  const AugmentConfig cfg;
  const NoiseBank bank = NoiseBank::synthetic(2);
  Rng a(99), b(99);
  const auto ra = online_augment(w, cfg, bank, a);
  const auto rb = online_augment(w, cfg, bank, b);
  CHECK(ra.features.frames == rb.features.frames);
  CHECK(ra.features.frames.cols() == 80);
  CHECK(ra.features.frames.rows() == 198);
}

TEST_CASE("offline plan sizes") {
  io::Manifest m;
  m.add({"u1", "s1", io::Domain::kSource, 4.0});
  const auto plan = offline_plan(m, AugmentConfig{});
  CHECK(plan.size() == 15);
  CHECK(plan.num_speakers() == 3);
  CHECK(plan.find("sp1.1-u1-reverb") != nullptr);
  CHECK(plan.find("sp0.9-u1")->duration == doctest::Approx(4.0 / 0.9));

  AugmentConfig one;
  one.speed_ratios = {1.0};
  CHECK(offline_plan(m, one).size() == 5);
}

}  // TEST_SUITE
