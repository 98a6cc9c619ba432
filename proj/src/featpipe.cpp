// src/featpipe.cpp

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

#include "spkv/featpipe.hpp"

#include "spkv/error.hpp"

#include <unsupported/Eigen/FFT>

#include <cmath>
#include <complex>
#include <numbers>
#include <unordered_set>

namespace spkv::feat {

namespace {

constexpr double kPi = std::numbers::pi;

// Zero crossings of the interpolation kernel on each side, in units of the
// (possibly lowered) cutoff period.
constexpr int kResampleZeros = 16;
constexpr double kKaiserBeta = 8.6;
constexpr int kPhases = 512;

double kaiser(double x, double half_width) {
  const double r = x / half_width;
  if (std::abs(r) >= 1.0) return 0.0;
  return std::cyl_bessel_i(0.0, kKaiserBeta * std::sqrt(1.0 - r * r)) / std::cyl_bessel_i(0.0, kKaiserBeta);
}

double sinc(double x) {
  if (x == 0.0) return 1.0;
  return std::sin(kPi * x) / (kPi * x);
}

void check_finite(const Waveform& w) {
  if (!w.samples.allFinite()) throw DataError("waveform has non-finite samples");
}

Eigen::Index next_pow2(Eigen::Index n) {
  Eigen::Index p = 1;
  while (p < n) p <<= 1;
  return p;
}

double hz_to_mel(double f) { return 1127.0 * std::log(1.0 + f / 700.0); }

// Triangular mel filters over the non-negative FFT bins, num_bins x (fft/2+1).
MatrixXd mel_banks(const FbankOptions& o, Eigen::Index fft_size) {
  const Eigen::Index bins = fft_size / 2 + 1;
  const double mel_low = hz_to_mel(o.low_freq);
  const double mel_high = hz_to_mel(o.high_freq);
  const double delta = (mel_high - mel_low) / (o.num_mel_bins + 1);
  MatrixXd banks = MatrixXd::Zero(o.num_mel_bins, bins);
  for (int m = 0; m < o.num_mel_bins; ++m) {
    const double left = mel_low + m * delta;
    const double center = left + delta;
    const double right = center + delta;
    for (Eigen::Index k = 0; k < bins; ++k) {
      const double mel = hz_to_mel(static_cast<double>(k) * o.sample_rate / static_cast<double>(fft_size));
      if (mel > left && mel < right) banks(m, k) = mel <= center ? (mel - left) / delta : (right - mel) / delta;
    }
  }
  return banks;
}

Eigen::VectorXd convolve_aligned(const Eigen::VectorXd& x, const Eigen::VectorXd& h, Eigen::Index shift) {
  const Eigen::Index n = x.size(), m = h.size();
  Eigen::VectorXd y = Eigen::VectorXd::Zero(n);
  if (m <= 64) {
    for (Eigen::Index i = 0; i < n; ++i) {
      double acc = 0.0;
      for (Eigen::Index k = 0; k < m; ++k) {
        const Eigen::Index j = i + shift - k;
        if (j >= 0 && j < n) acc += h[k] * x[j];
      }
      y[i] = acc;
    }
    return y;
  }
  const Eigen::Index size = next_pow2(n + m - 1);
  std::vector<double> xa(size, 0.0), ha(size, 0.0);
  for (Eigen::Index i = 0; i < n; ++i) xa[i] = x[i];
  for (Eigen::Index k = 0; k < m; ++k) ha[k] = h[k];
  Eigen::FFT<double> fft;
  std::vector<std::complex<double>> xf, hf;
  fft.fwd(xf, xa);
  fft.fwd(hf, ha);
  for (std::size_t i = 0; i < xf.size(); ++i) xf[i] *= hf[i];
  std::vector<double> full;
  fft.inv(full, xf);
  for (Eigen::Index i = 0; i < n; ++i) y[i] = full[i + shift];
  return y;
}

}  // namespace

std::string_view to_string(NoiseType t) {
  switch (t) {
    case NoiseType::kBabble: return "babble";
    case NoiseType::kNoise: return "noise";
    case NoiseType::kMusic: return "music";
    case NoiseType::kReverb: return "reverb";
  }
  return "?";
}

NoiseType parse_noise_type(std::string_view s) {
  for (auto t : kAllNoiseTypes)
    if (to_string(t) == s) return t;
  throw ConfigError("unknown noise type '" + std::string(s) + "'");
}

int FbankOptions::frame_length() const {
  return static_cast<int>(std::lround(sample_rate * frame_length_ms / 1000.0));
}
int FbankOptions::frame_shift() const { return static_cast<int>(std::lround(sample_rate * frame_shift_ms / 1000.0)); }

void AugmentConfig::validate() const {
  if (speed_ratios.empty()) throw ConfigError("speed-ratios must not be empty");
  for (double r : speed_ratios)
    if (!(r > 0.0)) throw ConfigError("speed ratios must be positive");
  if (!(noise_probability >= 0.0 && noise_probability <= 1.0))
    throw ConfigError("noise-probability must be in [0, 1]");
  if (noise_probability > 0.0 && noise_types.empty()) throw ConfigError("noise-types must not be empty");
  for (auto t : noise_types) {
    if (t == NoiseType::kReverb) continue;
    auto it = snr.find(t);
    if (it == snr.end()) throw ConfigError("no SNR range for " + std::string(to_string(t)));
    if (it->second.low_db > it->second.high_db) throw ConfigError("SNR range low > high");
  }
  if (!(segment_seconds > 0.0)) throw ConfigError("segment-seconds must be positive");
  if (cmn_window < 1) throw ConfigError("cmn-window must be >= 1");
  if (fbank.num_mel_bins < 1 || fbank.low_freq < 0.0 || fbank.high_freq <= fbank.low_freq ||
      fbank.high_freq > fbank.sample_rate / 2.0)
    throw ConfigError("invalid fbank options");
}

// ------------------------------------------------------------ resampling

Waveform speed_perturb(const Waveform& w, double ratio) {
  if (!(ratio > 0.0) || !std::isfinite(ratio)) throw ConfigError("speed ratio must be positive");
  check_finite(w);
  if (ratio == 1.0) return w;
  const Eigen::Index n = w.size();
  const auto out_len = static_cast<Eigen::Index>(std::llround(static_cast<double>(n) / ratio));
  const double cutoff = std::min(1.0, 1.0 / ratio);
  const double half_width = kResampleZeros / cutoff;
  // Polyphase kernel table sampled at kPhases points per input sample,
  // linearly interpolated between phases.
  const auto table_half = static_cast<Eigen::Index>(std::ceil(half_width * kPhases));
  Eigen::VectorXd table(2 * table_half + 2);
  for (Eigen::Index i = 0; i < table.size(); ++i) {
    const double d = static_cast<double>(i - table_half) / kPhases;
    table[i] = cutoff * sinc(cutoff * d) * kaiser(d, half_width);
  }
  auto kernel = [&](double d) {
    const double pos = d * kPhases + static_cast<double>(table_half);
    const auto i = static_cast<Eigen::Index>(std::floor(pos));
    if (i < 0 || i + 1 >= table.size()) return 0.0;
    const double frac = pos - static_cast<double>(i);
    return table[i] + frac * (table[i + 1] - table[i]);
  };
  Waveform out{Eigen::VectorXd::Zero(out_len), w.sample_rate};
  for (Eigen::Index j = 0; j < out_len; ++j) {
    const double t = static_cast<double>(j) * ratio;
    const auto lo = std::max<Eigen::Index>(0, static_cast<Eigen::Index>(std::ceil(t - half_width)));
    const auto hi = std::min<Eigen::Index>(n - 1, static_cast<Eigen::Index>(std::floor(t + half_width)));
    double acc = 0.0;
    for (Eigen::Index k = lo; k <= hi; ++k) acc += w.samples[k] * kernel(t - static_cast<double>(k));
    out.samples[j] = acc;
  }
  return out;
}

std::string derived_speaker_id(const std::string& speaker, double ratio) {
  if (ratio == 1.0) return speaker;
  return "sp" + io::format_real(ratio) + "-" + speaker;
}

std::string derived_utterance_id(const std::string& utt, double ratio) { return derived_speaker_id(utt, ratio); }

// ------------------------------------------------------------ noise

double signal_power(const Eigen::Ref<const Eigen::VectorXd>& x) {
  if (x.size() == 0) return 0.0;
  return x.squaredNorm() / static_cast<double>(x.size());
}

double snr_gain(double signal_power, double noise_power, double snr_db) {
  if (!(signal_power > 0.0) || !(noise_power > 0.0))
    throw NumericalError("SNR undefined for zero-power signal or noise");
  return std::sqrt(signal_power / (noise_power * std::pow(10.0, snr_db / 10.0)));
}

Waveform apply_noise(const Waveform& w, NoiseType kind, const Waveform& asset, double snr_db, Rng& rng) {
  check_finite(w);
  check_finite(asset);
  if (asset.size() == 0) throw DataError("noise asset is empty");
  if (kind == NoiseType::kReverb) {
    const double energy = asset.samples.squaredNorm();
    if (!(energy > 0.0)) throw NumericalError("impulse response has zero energy");
    Eigen::VectorXd h = asset.samples / std::sqrt(energy);
    Eigen::Index peak;
    h.cwiseAbs().maxCoeff(&peak);
    return {convolve_aligned(w.samples, h, peak), w.sample_rate};
  }
  if (!std::isfinite(snr_db)) throw ConfigError("SNR must be finite");
  const double ps = signal_power(w.samples);
  if (!(ps > 0.0)) throw NumericalError("SNR undefined for zero-power signal");
  if (snr_db >= kInfiniteSnrDb) return w;
  const Eigen::Index n = w.size(), m = asset.size();
  std::uniform_int_distribution<Eigen::Index> pick(0, m - 1);
  const Eigen::Index start = pick(rng);
  Eigen::VectorXd seg(n);
  for (Eigen::Index i = 0; i < n; ++i) seg[i] = asset.samples[(start + i) % m];
  const double g = snr_gain(ps, signal_power(seg), snr_db);
  return {w.samples + g * seg, w.sample_rate};
}

NoiseBank NoiseBank::synthetic(std::uint64_t seed, int sample_rate) {
  Rng rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  const double fs = sample_rate;
  const Eigen::Index len = sample_rate;  // one second assets
  NoiseBank bank;
  for (int copy = 0; copy < 2; ++copy) {
    Waveform babble{Eigen::VectorXd::Zero(len), sample_rate};
    for (int talker = 0; talker < 5; ++talker) {
      const double f0 = 120.0 + 130.0 * uni(rng);
      const double rate = 3.0 + 3.0 * uni(rng);
      const double phase = 2.0 * kPi * uni(rng);
      for (Eigen::Index i = 0; i < len; ++i) {
        const double t = static_cast<double>(i) / fs;
        const double env = 0.5 * (1.0 + std::sin(2.0 * kPi * rate * t + phase));
        double v = 0.0;
        for (int h = 1; h <= 6; ++h) v += std::sin(2.0 * kPi * f0 * h * t) / h;
        babble.samples[i] += env * v;
      }
    }
    bank.assets[NoiseType::kBabble].push_back(std::move(babble));

    Waveform noise{Eigen::VectorXd(len), sample_rate};
    for (Eigen::Index i = 0; i < len; ++i) noise.samples[i] = gauss(rng);
    bank.assets[NoiseType::kNoise].push_back(std::move(noise));

    Waveform music{Eigen::VectorXd::Zero(len), sample_rate};
    const double root = 220.0 * std::pow(2.0, std::floor(12.0 * uni(rng)) / 12.0);
    for (double semis : {0.0, 4.0, 7.0}) {
      const double f = root * std::pow(2.0, semis / 12.0);
      for (Eigen::Index i = 0; i < len; ++i) music.samples[i] += std::sin(2.0 * kPi * f * i / fs);
    }
    bank.assets[NoiseType::kMusic].push_back(std::move(music));

    const auto rir_len = static_cast<Eigen::Index>(0.25 * fs);
    const double decay = (0.03 + 0.05 * uni(rng)) * fs;
    Waveform rir{Eigen::VectorXd(rir_len), sample_rate};
    rir.samples[0] = 1.0;
    for (Eigen::Index i = 1; i < rir_len; ++i)
      rir.samples[i] = 0.3 * gauss(rng) * std::exp(-static_cast<double>(i) / decay);
    bank.assets[NoiseType::kReverb].push_back(std::move(rir));
  }
  return bank;
}

// ------------------------------------------------------------ features

FeatureMatrix fbank(const Waveform& w, const FbankOptions& opts) {
  check_finite(w);
  const int frame_len = opts.frame_length();
  const int shift = opts.frame_shift();
  if (frame_len < 1 || shift < 1) throw ConfigError("invalid frame length or shift");
  if (w.size() < frame_len)
    throw DataError("waveform of " + std::to_string(w.size()) + " samples is shorter than one frame (" +
                    std::to_string(frame_len) + ")");
  const Eigen::Index frames = 1 + (w.size() - frame_len) / shift;
  const Eigen::Index fft_size = next_pow2(frame_len);
  const MatrixXd banks = mel_banks(opts, fft_size);

  Eigen::VectorXd window(frame_len);
  for (int i = 0; i < frame_len; ++i)
    window[i] = frame_len > 1 ? 0.54 - 0.46 * std::cos(2.0 * kPi * i / (frame_len - 1)) : 1.0;

  FeatureMatrix out;
  out.frames.resize(frames, opts.num_mel_bins);
  out.frame_length_ms = opts.frame_length_ms;
  out.frame_shift_ms = opts.frame_shift_ms;

  Eigen::FFT<double> fft;
  std::vector<double> buf(fft_size, 0.0);
  std::vector<std::complex<double>> spec;
  Eigen::VectorXd power(fft_size / 2 + 1);
  for (Eigen::Index t = 0; t < frames; ++t) {
    const Eigen::Index start = t * shift;
    for (int i = 0; i < frame_len; ++i) buf[i] = w.samples[start + i] * window[i];
    fft.fwd(spec, buf);
    for (Eigen::Index k = 0; k < power.size(); ++k) power[k] = std::norm(spec[k]);
    const Eigen::VectorXd energies = banks * power;
    for (int m = 0; m < opts.num_mel_bins; ++m) out.frames(t, m) = std::log(std::max(energies[m], opts.log_floor));
  }
  return out;
}

FeatureMatrix sliding_cmn(const FeatureMatrix& f, int window) {
  if (window < 1) throw ConfigError("cmn window must be >= 1");
  const Eigen::Index T = f.frames.rows();
  FeatureMatrix out = f;
  if (T == 0) return out;
  for (Eigen::Index t = 0; t < T; ++t) {
    Eigen::Index start = t - window / 2;
    Eigen::Index end = start + window;
    if (start < 0) {
      end -= start;
      start = 0;
    }
    if (end > T) {
      start -= end - T;
      end = T;
    }
    start = std::max<Eigen::Index>(start, 0);
    // Direct sums: exact for window 1 and free of prefix-sum drift.
    const Eigen::RowVectorXd mean =
        f.frames.middleRows(start, end - start).colwise().sum() / static_cast<double>(end - start);
    out.frames.row(t) = f.frames.row(t) - mean;
  }
  return out;
}

// ------------------------------------------------------------ pipelines

Waveform crop_segment(const Waveform& w, Eigen::Index length, Rng& rng) {
  if (w.size() == 0) throw DataError("cannot crop an empty waveform");
  if (length < 1) throw ConfigError("segment length must be positive");
  Waveform out{Eigen::VectorXd(length), w.sample_rate};
  if (w.size() >= length) {
    std::uniform_int_distribution<Eigen::Index> pick(0, w.size() - length);
    out.samples = w.samples.segment(pick(rng), length);
  } else {
    for (Eigen::Index i = 0; i < length; ++i) out.samples[i] = w.samples[i % w.size()];
  }
  return out;
}

OnlineAugmentResult online_augment(const Waveform& w, const AugmentConfig& cfg, const NoiseBank& bank, Rng& rng) {
  cfg.validate();
  if (w.size() == 0) throw DataError("cannot augment an empty waveform");
  OnlineAugmentResult result;

  // 1. speed ratio
  std::uniform_int_distribution<std::size_t> pick_ratio(0, cfg.speed_ratios.size() - 1);
  result.speed_ratio = cfg.speed_ratios[pick_ratio(rng)];
  Waveform audio = speed_perturb(w, result.speed_ratio);

  // 2. noise decision and type
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  if (uni(rng) < cfg.noise_probability) {
    std::uniform_int_distribution<std::size_t> pick_type(0, cfg.noise_types.size() - 1);
    const NoiseType type = cfg.noise_types[pick_type(rng)];
    auto it = bank.assets.find(type);
    if (it == bank.assets.end() || it->second.empty())
      throw DataError("noise bank has no assets of type " + std::string(to_string(type)));
    std::uniform_int_distribution<std::size_t> pick_asset(0, it->second.size() - 1);
    const Waveform& asset = it->second[pick_asset(rng)];
    double snr = 0.0;
    if (type != NoiseType::kReverb) {
      const SnrRange range = cfg.snr.at(type);
      snr = std::uniform_real_distribution<double>(range.low_db, range.high_db)(rng);
    }
    audio = apply_noise(audio, type, asset, snr, rng);
    result.noise = type;
    result.snr_db = snr;
  }

  // 3. segment crop
  const auto seg_len = static_cast<Eigen::Index>(std::llround(cfg.segment_seconds * audio.sample_rate));
  audio = crop_segment(audio, seg_len, rng);

  // 4. fbank, 5. mean normalization
  result.features = sliding_cmn(fbank(audio, cfg.fbank), cfg.cmn_window);
  return result;
}

io::Manifest offline_plan(const io::Manifest& m, const AugmentConfig& cfg) {
  m.validate();
  std::vector<io::ManifestEntry> out;
  out.reserve(m.size() * cfg.speed_ratios.size() * (1 + cfg.noise_types.size()));
  for (const auto& e : m.entries()) {
    for (double ratio : cfg.speed_ratios) {
      io::ManifestEntry base = e;
      base.utt = derived_utterance_id(e.utt, ratio);
      if (e.speaker) base.speaker = derived_speaker_id(*e.speaker, ratio);
      base.duration = e.duration / ratio;
      base.speed_ratio = e.speed_ratio * ratio;
      out.push_back(base);
      for (NoiseType t : cfg.noise_types) {
        io::ManifestEntry copy = base;
        copy.utt += "-" + std::string(to_string(t));
        copy.augment = std::string(to_string(t));
        out.push_back(std::move(copy));
      }
    }
  }
  return io::Manifest(std::move(out));
}

PlanCounts offline_plan_counts(std::size_t utterances, std::size_t speakers, const AugmentConfig& cfg) {
  const std::size_t r = cfg.speed_ratios.size();
  return {utterances * r, utterances * r * (1 + cfg.noise_types.size()), speakers * r};
}

}  // namespace spkv::feat
