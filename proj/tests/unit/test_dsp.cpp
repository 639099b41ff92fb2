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

#include "doctest.h"

#include <cmath>
#include <numbers>

#include "s2vc/dsp.hpp"
#include "support.hpp"

using namespace s2vc;
using namespace s2vc::dsp;
using s2vc::testing::sine;

namespace {

Index nearest_center_bin(double hz, const MelConfig& cfg) {
  const auto centers = mel_center_frequencies(cfg);
  Index best = 0;
  for (std::size_t i = 1; i < centers.size(); ++i) {
    if (std::abs(centers[i] - hz) < std::abs(centers[static_cast<std::size_t>(best)] - hz)) best = static_cast<Index>(i);
  }
  return best;
}

Index fft_peak_bin(const std::vector<float>& samples, const MelConfig& cfg) {
  std::vector<double> x(samples.begin(), samples.end());
  const ComplexMatrix spec = stft(x, cfg);
  const Eigen::RowVectorXd mag = spec.cwiseAbs().colwise().sum();
  Index peak = 0;
  mag.maxCoeff(&peak);
  return peak;
}

}  // namespace

TEST_SUITE("dsp") {
  TEST_CASE("440 Hz sine peaks at the nearest-centre mel band") {
    const MelConfig cfg;
    const Spectrogram s = log_mel(sine(440.0, 1.0), cfg);
    REQUIRE(s.frames.rows() == cfg.frame_count(16000));
    const Eigen::RowVectorXd avg = s.frames.colwise().mean();
    Index arg = 0;
    avg.maxCoeff(&arg);
    CHECK(arg == nearest_center_bin(440.0, cfg));
  }

  TEST_CASE("Griffin-Lim recovers the 440 Hz peak within one FFT bin") {
    const MelConfig cfg;
    const AudioBuffer tone = sine(440.0, 1.0, cfg.sample_rate);
    const AudioBuffer rec = griffin_lim(log_mel(tone, cfg), {});
    const Index expected = static_cast<Index>(std::lround(440.0 * cfg.n_fft / cfg.sample_rate));
    CHECK(std::abs(fft_peak_bin(rec.samples, cfg) - expected) <= 1);
  }

  TEST_CASE("resampler passes the 1 kHz sine test") {
    for (const auto& [from, to] : {std::pair{8000, 16000}, std::pair{22050, 16000}, std::pair{48000, 16000}}) {
      CAPTURE(from);
      const AudioBuffer out = resample(sine(1000.0, 0.5, from), to);
      CHECK(out.sample_rate == to);
      CHECK(out.samples.size() == static_cast<std::size_t>(std::lround(0.5 * from * to / static_cast<double>(from))));
      double worst = 0.0;
      // Skip the filter's start-up and tail transients.
      for (std::size_t i = 64; i + 64 < out.samples.size(); ++i) {
        const double t = static_cast<double>(i) / to;
        worst = std::max(worst, std::abs(out.samples[i] - 0.5 * std::sin(2.0 * std::numbers::pi * 1000.0 * t)));
      }
      CHECK(worst < 1e-3);
    }
  }

  TEST_CASE("WAV round trips and stereo downmix") {
    AudioBuffer a = sine(300.0, 0.1);
    const AudioBuffer f32 = decode_wav(encode_wav(a, WavEncoding::Float32));
    CHECK(f32.samples == a.samples);
    const AudioBuffer pcm = decode_wav(encode_wav(a, WavEncoding::Pcm16));
    REQUIRE(pcm.samples.size() == a.samples.size());
    for (std::size_t i = 0; i < a.samples.size(); ++i) CHECK(std::abs(pcm.samples[i] - a.samples[i]) < 1.0 / 32768.0 + 1e-6);

    // Two-channel PCM16: left 0.5, right -0.25 -> mono 0.125.
    std::vector<std::uint8_t> b = encode_wav(AudioBuffer{{0.0f}, 16000}, WavEncoding::Pcm16);
    b[22] = 2;                                        // channels
    b[32] = 4;                                        // block align
    const std::uint32_t byte_rate = 16000 * 4;
    for (int i = 0; i < 4; ++i) b[28 + i] = static_cast<std::uint8_t>((byte_rate >> (8 * i)) & 0xff);
    b[40] = 4;                                        // data size
    b.resize(44);
    const std::int16_t l = 16384, r = -8192;
    for (std::int16_t s : {l, r}) {
      b.push_back(static_cast<std::uint8_t>(s & 0xff));
      b.push_back(static_cast<std::uint8_t>((s >> 8) & 0xff));
    }
    b[4] = static_cast<std::uint8_t>(b.size() - 8);
    const AudioBuffer mono = decode_wav(b);
    REQUIRE(mono.samples.size() == 1);
    CHECK(mono.samples[0] == doctest::Approx(0.125));
  }

  TEST_CASE("malformed WAV files report the failing offset") {
    const auto good = encode_wav(sine(300.0, 0.01));
    auto bad_tag = good;
    bad_tag[8] = 'X';
    CHECK_THROWS_AS(decode_wav(bad_tag), DecodeError);
    auto truncated = good;
    truncated.resize(good.size() - 3);
    try {
      decode_wav(truncated);
      FAIL("expected DecodeError");
    } catch (const DecodeError& e) {
      CHECK(e.offset() == 36);  // data chunk header
    }
    CHECK_THROWS_AS(decode_wav(std::vector<std::uint8_t>(5, 0)), DecodeError);
  }

  TEST_CASE("STFT / ISTFT reconstruct the signal") {
    const MelConfig cfg;
    const AudioBuffer a = sine(523.0, 0.3);
    std::vector<double> x(a.samples.begin(), a.samples.end());
    const auto y = istft(stft(x, cfg), cfg, x.size());
    double worst = 0.0;
    for (std::size_t i = static_cast<std::size_t>(cfg.win_length); i + cfg.win_length < x.size(); ++i) {
      worst = std::max(worst, std::abs(y(static_cast<Index>(i)) - x[i]));
    }
    CHECK(worst < 1e-9);
  }

  TEST_CASE("filterbank follows the HTK mel scale") {
    const MelConfig cfg;
    CHECK(hz_to_mel(700.0) == doctest::Approx(2595.0 * std::log10(2.0)));
    CHECK(mel_to_hz(hz_to_mel(1234.5)) == doctest::Approx(1234.5));
    const MatrixXd fb = mel_filterbank(cfg);
    CHECK(fb.rows() == cfg.n_mels);
    CHECK(fb.cols() == cfg.n_bins());
    CHECK(fb.minCoeff() >= 0.0);
    CHECK(fb.maxCoeff() <= 1.0 + 1e-12);
    for (Index m = 0; m < fb.rows(); ++m) CHECK(fb.row(m).sum() > 0.0);
  }

  TEST_CASE("hann window is periodic") {
    const auto w = hann_window(8);
    CHECK(w(0) == doctest::Approx(0.0));
    CHECK(w(4) == doctest::Approx(1.0));
    CHECK(w(1) == doctest::Approx(w(7)));
  }

  TEST_CASE("mel inversion is non-negative and consistent with the mel input") {
    const MelConfig cfg;
    AudioBuffer a = sine(220.0, 0.3);
    const AudioBuffer b = sine(1700.0, 0.3, 16000, 0.2);
    for (std::size_t i = 0; i < a.samples.size(); ++i) a.samples[i] += b.samples[i];
    const Spectrogram s = log_mel(a, cfg);
    const MatrixXd linear = mel_to_linear(s);
    CHECK(linear.rows() == s.frames.rows());
    CHECK(linear.cols() == cfg.n_bins());
    CHECK(linear.minCoeff() >= 0.0);
    const MatrixXd mel = s.frames.array().exp().matrix();
    const MatrixXd reproj = linear * mel_filterbank(cfg).transpose();
    CHECK((reproj - mel).norm() / mel.norm() < 0.05);
  }

  TEST_CASE("mel configuration invariants") {
    MelConfig c;
    c.hop_length = 500;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = MelConfig{};
    c.fmax = 9000.0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = MelConfig{};
    CHECK(c.frame_count(399) == 0);
    CHECK(c.frame_count(400) == 1);
    CHECK(c.frame_count(560) == 2);
    CHECK(MelConfig::from_json(c.to_json()).to_json() == c.to_json());
  }
}
