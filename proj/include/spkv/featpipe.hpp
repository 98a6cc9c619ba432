// include/spkv/featpipe.hpp

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

#include "spkv/corpus_io.hpp"
#include "spkv/types.hpp"

#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace spkv::feat {

struct Waveform {
  Eigen::VectorXd samples;
  int sample_rate = 16000;

  Eigen::Index size() const { return samples.size(); }
};

struct FeatureMatrix {
  MatrixXd frames;  // T x D
  double frame_shift_ms = 10.0;
  double frame_length_ms = 25.0;
};

enum class NoiseType { kBabble, kNoise, kMusic, kReverb };
inline constexpr std::array<NoiseType, 4> kAllNoiseTypes = {NoiseType::kBabble, NoiseType::kNoise,
                                                           NoiseType::kMusic, NoiseType::kReverb};

std::string_view to_string(NoiseType t);
NoiseType parse_noise_type(std::string_view s);

struct FbankOptions {
  int sample_rate = 16000;
  double frame_length_ms = 25.0;
  double frame_shift_ms = 10.0;
  int num_mel_bins = 80;
  double low_freq = 20.0;
  double high_freq = 7600.0;
  double log_floor = 1e-10;

  int frame_length() const;  // samples
  int frame_shift() const;   // samples
};

struct SnrRange {
  double low_db;
  double high_db;
};

struct AugmentConfig {
  std::vector<double> speed_ratios = {1.0, 1.1, 0.9};
  double noise_probability = 0.6;
  std::vector<NoiseType> noise_types = {kAllNoiseTypes.begin(), kAllNoiseTypes.end()};
  std::map<NoiseType, SnrRange> snr = {{NoiseType::kBabble, {13.0, 20.0}},
                                       {NoiseType::kNoise, {0.0, 15.0}},
                                       {NoiseType::kMusic, {5.0, 15.0}}};
  double segment_seconds = 2.0;
  int cmn_window = 300;
  FbankOptions fbank;

  void validate() const;
};

/// Resamples so the audio plays `ratio` times faster. Ratio 1 returns the
/// input unchanged. Uses Kaiser-windowed sinc interpolation with the cutoff
/// lowered when speeding up.
Waveform speed_perturb(const Waveform& w, double ratio);

/// Perturbed copies are new speakers: "sp<ratio>-<speaker>", unchanged for 1.0.
std::string derived_speaker_id(const std::string& speaker, double ratio);
std::string derived_utterance_id(const std::string& utt, double ratio);

/// Mean power of the whole signal.
double signal_power(const Eigen::Ref<const Eigen::VectorXd>& x);

/// Gain g so that 10 log10(signal_power / (g^2 noise_power)) == snr_db.
double snr_gain(double signal_power, double noise_power, double snr_db);

inline constexpr double kInfiniteSnrDb = 100.0;

/// Additive kinds mix a random (wrapped) segment of `asset` at the requested
/// SNR; snr_db >= 100 returns the input. Reverb convolves with the L2
/// normalized impulse response, aligned on its peak and truncated to len(w).
Waveform apply_noise(const Waveform& w, NoiseType kind, const Waveform& asset, double snr_db, Rng& rng);

/// Noise and impulse-response assets per type.
struct NoiseBank {
  std::map<NoiseType, std::vector<Waveform>> assets;

  /// Small generated bank: multi-talker babble from formant-like chirps,
  /// white noise, chords for music, exponentially decaying random RIRs.
  static NoiseBank synthetic(std::uint64_t seed, int sample_rate = 16000);
};

/// Log mel filterbank energies (Hamming window, power spectrum).
FeatureMatrix fbank(const Waveform& w, const FbankOptions& opts = {});

/// Subtracts from each frame the per-dimension mean of a `window`-frame
/// window centered on it. Near the edges the window is shifted to stay inside
/// the utterance, so T <= window reduces to global mean subtraction.
FeatureMatrix sliding_cmn(const FeatureMatrix& f, int window = 300);

/// Uniform random crop of `length` samples; shorter inputs are wrap padded.
Waveform crop_segment(const Waveform& w, Eigen::Index length, Rng& rng);

struct OnlineAugmentResult {
  FeatureMatrix features;
  double speed_ratio = 1.0;
  std::optional<NoiseType> noise;
  double snr_db = 0.0;
};

/// The online five-step chain: speed ratio draw, noise decision and type draw,
/// segment crop, fbank, mean normalization.
OnlineAugmentResult online_augment(const Waveform& w, const AugmentConfig& cfg, const NoiseBank& bank, Rng& rng);

/// Expands every utterance into speed_ratios x (clean + one copy per noise
/// type) entries, with derived speaker ids for perturbed copies.
io::Manifest offline_plan(const io::Manifest& m, const AugmentConfig& cfg);

struct PlanCounts {
  std::size_t speed_copies;
  std::size_t total_entries;
  std::size_t derived_speakers;
};

/// Closed-form sizes of offline_plan for a corpus of the given size.
PlanCounts offline_plan_counts(std::size_t utterances, std::size_t speakers, const AugmentConfig& cfg);

}  // namespace spkv::feat
