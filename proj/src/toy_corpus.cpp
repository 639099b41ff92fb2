/*
 * Copyright (c) 2026 The S2VC Authors
 *
 * Licensed under the Apache License, Version 2.0;
 * You may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an 'AS IS' BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "s2vc/toy_corpus.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>

namespace s2vc {

namespace fs = std::filesystem;

namespace {

struct Phone {
  std::array<double, 3> formants;
};

// Vowel-like formant targets (Hz).
constexpr std::array<Phone, 8> kPhones = {{
    {{750, 1200, 2600}},
    {{280, 2250, 2900}},
    {{320, 800, 2300}},
    {{450, 1900, 2600}},
    {{500, 900, 2500}},
    {{650, 1700, 2500}},
    {{480, 1350, 1700}},
    {{600, 1150, 2450}},
}};
constexpr std::array<double, 3> kBandwidth = {70.0, 100.0, 140.0};
constexpr std::array<double, 3> kFormantGain = {1.0, 0.6, 0.35};
constexpr double kTransition = 0.02;  // seconds

struct Segment {
  int phone;
  double start, end;  // seconds
};

// Linear blend weights between the phone at t and its neighbour around a boundary.
std::array<double, kPhones.size()> phone_weights(const std::vector<Segment>& segs, double t) {
  std::array<double, kPhones.size()> w{};
  std::size_t i = 0;
  while (i + 1 < segs.size() && t >= segs[i].end) ++i;
  w[static_cast<std::size_t>(segs[i].phone)] = 1.0;
  const double half = 0.5 * kTransition;
  if (i + 1 < segs.size() && t > segs[i].end - half) {
    const double a = std::clamp((t - (segs[i].end - half)) / kTransition, 0.0, 1.0);
    w[static_cast<std::size_t>(segs[i].phone)] -= a;
    w[static_cast<std::size_t>(segs[i + 1].phone)] += a;
  } else if (i > 0 && t < segs[i].start + half) {
    const double a = std::clamp(((segs[i].start + half) - t) / kTransition, 0.0, 1.0);
    w[static_cast<std::size_t>(segs[i].phone)] -= a;
    w[static_cast<std::size_t>(segs[i - 1].phone)] += a;
  }
  return w;
}

double spectral_envelope(double f, const std::array<double, 3>& formants, const ToySpeaker& spk) {
  double a = 0.0;
  for (std::size_t i = 0; i < 3; ++i) {
    const double x = (f - formants[i]) / kBandwidth[i];
    a += kFormantGain[i] / (1.0 + x * x);
  }
  return a * std::pow(std::max(f, 50.0) / 100.0, spk.tilt_db_per_octave / 6.0206);
}

std::vector<float> synthesize(const std::vector<Segment>& segs, const ToySpeaker& spk, std::size_t n,
                              int sample_rate, std::mt19937_64& rng) {
  constexpr std::size_t kBlock = 80;
  const double sr = static_cast<double>(sample_rate);
  const int max_harmonics = static_cast<int>(0.48 * sr / (0.8 * spk.f0));
  std::vector<double> phase(static_cast<std::size_t>(max_harmonics), 0.0);
  std::uniform_real_distribution<double> u(0.0, 2.0 * std::numbers::pi);
  for (auto& p : phase) p = u(rng);
  const double vib_phase = u(rng);
  std::normal_distribution<double> noise(0.0, 0.003);

  std::vector<double> out(n, 0.0);
  for (std::size_t b0 = 0; b0 < n; b0 += kBlock) {
    const double t = (static_cast<double>(b0) + 0.5 * kBlock) / sr;
    const auto w = phone_weights(segs, t);
    std::array<double, 3> formants{};
    for (std::size_t p = 0; p < kPhones.size(); ++p) {
      for (std::size_t k = 0; k < 3; ++k) formants[k] += w[p] * kPhones[p].formants[k] * spk.formant_scale;
    }
    const double f0 = spk.f0 * (1.0 + 0.03 * std::sin(2.0 * std::numbers::pi * 4.0 * t + vib_phase)) *
                      (1.0 - 0.08 * t);
    const std::size_t b1 = std::min(n, b0 + kBlock);
    for (int h = 1; h <= max_harmonics; ++h) {
      const double f = f0 * h;
      if (f >= 0.47 * sr) break;
      const double amp = spectral_envelope(f, formants, spk);
      const double step = 2.0 * std::numbers::pi * f / sr;
      double& ph = phase[static_cast<std::size_t>(h - 1)];
      for (std::size_t i = b0; i < b1; ++i) {
        out[i] += amp * std::sin(ph);
        ph += step;
      }
      ph = std::fmod(ph, 2.0 * std::numbers::pi);
    }
  }
  // Onset/offset ramps, light noise, peak normalisation.
  const std::size_t ramp = static_cast<std::size_t>(0.02 * sr);
  for (std::size_t i = 0; i < n; ++i) {
    double g = 1.0;
    if (i < ramp) g = static_cast<double>(i) / ramp;
    if (n - 1 - i < ramp) g = std::min(g, static_cast<double>(n - 1 - i) / ramp);
    out[i] *= g;
  }
  double peak = 0.0;
  for (double v : out) peak = std::max(peak, std::abs(v));
  std::vector<float> samples(n);
  for (std::size_t i = 0; i < n; ++i) samples[i] = static_cast<float>(0.8 * out[i] / peak + noise(rng));
  return samples;
}

}  // namespace

std::vector<ToySpeaker> toy_speakers(int n, std::uint64_t seed) {
  static const std::array<ToySpeaker, 4> kBase = {{
      {"spk0", 110.0, 0.88, -9.0},
      {"spk1", 150.0, 1.00, -6.0},
      {"spk2", 200.0, 1.10, -4.5},
      {"spk3", 250.0, 1.20, -3.0},
  }};
  std::mt19937_64 rng(seed ^ 0x70f5u);
  std::uniform_real_distribution<double> f0(100.0, 260.0), scale(0.85, 1.25), tilt(-10.0, -3.0);
  std::vector<ToySpeaker> out;
  for (int i = 0; i < n; ++i) {
    if (i < static_cast<int>(kBase.size())) {
      out.push_back(kBase[static_cast<std::size_t>(i)]);
    } else {
      out.push_back({"spk" + std::to_string(i), f0(rng), scale(rng), tilt(rng)});
    }
  }
  return out;
}

std::vector<ManifestEntry> make_toy_corpus(const fs::path& dir, const ToyCorpusOptions& options) {
  if (options.n_speakers < 1 || options.utterances_per_speaker < 1) {
    throw ConfigError("toy corpus: need at least one speaker and one utterance");
  }
  if (!(options.min_seconds > 0.05) || options.max_seconds < options.min_seconds) {
    throw ConfigError("toy corpus: invalid duration range");
  }
  const dsp::MelConfig& mel = options.mel;
  mel.validate();
  const double fps = static_cast<double>(mel.sample_rate) / mel.hop_length;
  const int n_phones = static_cast<int>(kPhones.size());

  std::mt19937_64 rng(options.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  MatrixXd phone_embedding(n_phones, options.cpc_dim);
  for (Index i = 0; i < phone_embedding.size(); ++i) phone_embedding.data()[i] = gauss(rng);

  const auto speakers = toy_speakers(options.n_speakers, options.seed);
  std::vector<RowVector<double>> offsets;
  for (std::size_t s = 0; s < speakers.size(); ++s) {
    RowVector<double> o(options.cpc_dim);
    for (Index k = 0; k < o.size(); ++k) o(k) = options.speaker_offset * gauss(rng);
    offsets.push_back(o);
  }

  MatrixXd leak_projection(mel.n_mels, options.cpc_dim);
  for (Index i = 0; i < leak_projection.size(); ++i) leak_projection.data()[i] = gauss(rng);
  leak_projection *= options.speaker_leak / std::sqrt(static_cast<double>(mel.n_mels));

  fs::create_directories(dir / "feats");
  std::vector<ManifestEntry> relative;
  std::uniform_real_distribution<double> duration(options.min_seconds, options.max_seconds);
  std::uniform_real_distribution<double> seg_len(0.10, 0.20);
  std::uniform_int_distribution<int> pick_phone(0, n_phones - 1);

  for (std::size_t s = 0; s < speakers.size(); ++s) {
    const ToySpeaker& spk = speakers[s];
    fs::create_directories(dir / "wavs" / spk.id);
    for (int u = 0; u < options.utterances_per_speaker; ++u) {
      char name[64];
      std::snprintf(name, sizeof name, "%s_u%03d", spk.id.c_str(), u);
      const std::string utt = name;

      const double total = duration(rng);
      const auto n = static_cast<std::size_t>(total * mel.sample_rate);
      std::vector<Segment> segs;
      double t = 0.0;
      int prev = -1;
      while (t < total) {
        int p = pick_phone(rng);
        while (p == prev) p = pick_phone(rng);
        const double len = seg_len(rng);
        segs.push_back({p, t, std::min(total, t + len)});
        t += len;
        prev = p;
      }
      if (segs.size() > 1 && segs.back().end - segs.back().start < 0.05) {
        segs[segs.size() - 2].end = segs.back().end;
        segs.pop_back();
      }

      dsp::AudioBuffer audio;
      audio.sample_rate = mel.sample_rate;
      audio.samples = synthesize(segs, spk, n, mel.sample_rate, rng);

      const Index frames = mel.frame_count(n);
      MatrixXd leak = MatrixXd::Zero(frames, options.cpc_dim);
      if (options.speaker_leak > 0.0) {
        MatrixXd m = extract_mel(audio, mel, utt, spk.id).frames.cast<double>();
        m.array() -= m.mean();
        const double sd = std::sqrt(m.squaredNorm() / static_cast<double>(std::max<Index>(1, m.size())));
        if (sd > 0.0) m /= sd;
        leak = m * leak_projection;
      }
      MatrixXf cpc(frames, options.cpc_dim), ppg(frames, n_phones);
      for (Index f = 0; f < frames; ++f) {
        const double centre = (static_cast<double>(f) * mel.hop_length + 0.5 * mel.win_length) / mel.sample_rate;
        const auto w = phone_weights(segs, centre);
        RowVector<double> row = offsets[s] + leak.row(f);
        double z = 0.0;
        Eigen::ArrayXd logits(n_phones);
        for (int p = 0; p < n_phones; ++p) {
          row += w[static_cast<std::size_t>(p)] * phone_embedding.row(p);
          logits(p) = 6.0 * w[static_cast<std::size_t>(p)] + 0.3 * gauss(rng);
        }
        for (Index k = 0; k < row.size(); ++k) row(k) += options.feature_noise * gauss(rng);
        cpc.row(f) = row.cast<float>();
        logits = (logits - logits.maxCoeff()).exp();
        z = logits.sum();
        ppg.row(f) = (logits / z).transpose().cast<float>();
      }

      ManifestEntry e;
      e.utterance_id = utt;
      e.speaker_id = spk.id;
      e.wav = fs::path("wavs") / spk.id / (utt + ".wav");
      dsp::write_wav(dir / e.wav, audio, dsp::WavEncoding::Pcm16);

      auto save = [&](const FeatureKind& kind, MatrixXf frames_, const std::string& ext) {
        FeatureSequence seq;
        seq.kind = kind;
        seq.frames = std::move(frames_);
        seq.fps = fps;
        seq.utterance_id = utt;
        seq.speaker_id = spk.id;
        const fs::path rel = fs::path("feats") / (utt + "." + ext + ".s2vf");
        save_feature_file(dir / rel, seq);
        e.features[kind.name()] = rel;
      };
      save(FeatureKind(FeatureKind::Id::CPC), std::move(cpc), "cpc");
      if (options.write_ppg) save(FeatureKind(FeatureKind::Id::PPG), std::move(ppg), "ppg");
      if (options.write_mel) {
        const dsp::AudioBuffer pcm = dsp::decode_wav(dsp::encode_wav(audio, dsp::WavEncoding::Pcm16));
        save(FeatureKind(FeatureKind::Id::Mel), extract_mel(pcm, mel, utt, spk.id).frames, "mel");
      }
      relative.push_back(e);
    }
  }
  write_manifest(dir / "manifest.jsonl", relative);
  return read_manifest(dir / "manifest.jsonl");
}

}  // namespace s2vc
