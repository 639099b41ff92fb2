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

#include "s2vc/dsp.hpp"

#include <Eigen/Dense>
#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <numeric>
#include <random>

namespace s2vc::dsp {

namespace {

constexpr double kPi = std::numbers::pi;

std::uint16_t read_u16(const std::vector<std::uint8_t>& b, std::size_t at) {
  return static_cast<std::uint16_t>(b[at] | (b[at + 1] << 8));
}

std::uint32_t read_u32(const std::vector<std::uint8_t>& b, std::size_t at) {
  return static_cast<std::uint32_t>(b[at]) | (static_cast<std::uint32_t>(b[at + 1]) << 8) |
         (static_cast<std::uint32_t>(b[at + 2]) << 16) |
         (static_cast<std::uint32_t>(b[at + 3]) << 24);
}

void put_u16(std::vector<std::uint8_t>& b, std::uint16_t v) {
  b.push_back(static_cast<std::uint8_t>(v & 0xff));
  b.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& b, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) b.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

void put_tag(std::vector<std::uint8_t>& b, const char* tag) {
  b.insert(b.end(), tag, tag + 4);
}

bool tag_is(const std::vector<std::uint8_t>& b, std::size_t at, const char* tag) {
  return std::memcmp(b.data() + at, tag, 4) == 0;
}

Eigen::FFT<double> make_fft() {
  Eigen::FFT<double> fft;
  fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
  return fft;
}

}  // namespace

// ---------------------------------------------------------------------------
// MelConfig

void MelConfig::validate() const {
  if (sample_rate <= 0 || n_fft <= 0 || win_length <= 0 || hop_length <= 0 || n_mels <= 0) {
    throw ConfigError("mel config: all sizes must be positive");
  }
  if (!(hop_length <= win_length && win_length <= n_fft)) {
    throw ConfigError("mel config: require hop_length <= win_length <= n_fft");
  }
  if (fmax > sample_rate / 2.0 || fmin < 0.0 || fmin >= fmax) {
    throw ConfigError("mel config: require 0 <= fmin < fmax <= sample_rate / 2");
  }
  if (log_floor <= 0.0) throw ConfigError("mel config: log_floor must be positive");
}

Index MelConfig::frame_count(std::size_t n_samples) const {
  if (n_samples < static_cast<std::size_t>(win_length)) return 0;
  return 1 + static_cast<Index>((n_samples - static_cast<std::size_t>(win_length)) /
                                static_cast<std::size_t>(hop_length));
}

nlohmann::json MelConfig::to_json() const {
  return {{"sample_rate", sample_rate}, {"n_fft", n_fft},   {"win_length", win_length},
          {"hop_length", hop_length},   {"n_mels", n_mels}, {"fmin", fmin},
          {"fmax", fmax},               {"log_floor", log_floor}};
}

MelConfig MelConfig::from_json(const nlohmann::json& j) {
  MelConfig c;
  c.sample_rate = j.value("sample_rate", c.sample_rate);
  c.n_fft = j.value("n_fft", c.n_fft);
  c.win_length = j.value("win_length", c.win_length);
  c.hop_length = j.value("hop_length", c.hop_length);
  c.n_mels = j.value("n_mels", c.n_mels);
  c.fmin = j.value("fmin", c.fmin);
  c.fmax = j.value("fmax", c.fmax);
  c.log_floor = j.value("log_floor", c.log_floor);
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// WAV

AudioBuffer decode_wav(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 12) throw DecodeError("wav: file shorter than RIFF header", bytes.size());
  if (!tag_is(bytes, 0, "RIFF")) throw DecodeError("wav: missing RIFF tag", 0);
  if (!tag_is(bytes, 8, "WAVE")) throw DecodeError("wav: missing WAVE tag", 8);

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  bool have_fmt = false;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const std::uint32_t chunk_size = read_u32(bytes, pos + 4);
    const std::size_t body = pos + 8;
    if (body + chunk_size > bytes.size()) {
      throw DecodeError("wav: chunk extends past end of file (truncated)", pos);
    }
    if (tag_is(bytes, pos, "fmt ")) {
      if (chunk_size < 16) throw DecodeError("wav: fmt chunk too small", pos);
      format = read_u16(bytes, body);
      channels = read_u16(bytes, body + 2);
      rate = read_u32(bytes, body + 4);
      bits = read_u16(bytes, body + 14);
      if (format == 0xFFFE) {
        if (chunk_size < 26) throw DecodeError("wav: extensible fmt chunk too small", pos);
        format = read_u16(bytes, body + 24);
      }
      have_fmt = true;
    } else if (tag_is(bytes, pos, "data")) {
      if (!have_fmt) throw DecodeError("wav: data chunk before fmt chunk", pos);
      if (channels != 1 && channels != 2) {
        throw DecodeError("wav: unsupported channel count " + std::to_string(channels), pos);
      }
      if (rate == 0) throw DecodeError("wav: zero sample rate", pos);
      const bool pcm16 = format == 1 && bits == 16;
      const bool f32 = format == 3 && bits == 32;
      if (!pcm16 && !f32) {
        throw DecodeError("wav: unsupported codec (format " + std::to_string(format) + ", " +
                              std::to_string(bits) + " bits)",
                          pos);
      }
      const std::size_t frame_bytes = static_cast<std::size_t>(bits / 8) * channels;
      if (chunk_size % frame_bytes != 0) {
        throw DecodeError("wav: data size is not a whole number of frames", pos);
      }
      const std::size_t n = chunk_size / frame_bytes;
      AudioBuffer out;
      out.sample_rate = static_cast<int>(rate);
      out.samples.resize(n);
      for (std::size_t i = 0; i < n; ++i) {
        double acc = 0.0;
        for (std::size_t c = 0; c < channels; ++c) {
          const std::size_t at = body + i * frame_bytes + c * (bits / 8);
          if (pcm16) {
            acc += static_cast<std::int16_t>(read_u16(bytes, at)) / 32768.0;
          } else {
            const std::uint32_t raw = read_u32(bytes, at);
            float v;
            std::memcpy(&v, &raw, sizeof v);
            if (!std::isfinite(v)) throw DecodeError("wav: non-finite float sample", at);
            acc += v;
          }
        }
        out.samples[i] = static_cast<float>(acc / channels);
      }
      return out;
    }
    pos = body + chunk_size + (chunk_size & 1u);
  }
  throw DecodeError(have_fmt ? "wav: missing data chunk" : "wav: missing fmt chunk", pos);
}

AudioBuffer read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("wav: cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return decode_wav(bytes);
}

std::vector<std::uint8_t> encode_wav(const AudioBuffer& audio, WavEncoding encoding) {
  const bool pcm16 = encoding == WavEncoding::Pcm16;
  const std::uint16_t bits = pcm16 ? 16 : 32;
  const std::uint32_t data_size = static_cast<std::uint32_t>(audio.samples.size() * (bits / 8));
  std::vector<std::uint8_t> b;
  b.reserve(44 + data_size);
  put_tag(b, "RIFF");
  put_u32(b, 36 + data_size);
  put_tag(b, "WAVE");
  put_tag(b, "fmt ");
  put_u32(b, 16);
  put_u16(b, pcm16 ? 1 : 3);
  put_u16(b, 1);
  put_u32(b, static_cast<std::uint32_t>(audio.sample_rate));
  put_u32(b, static_cast<std::uint32_t>(audio.sample_rate) * (bits / 8));
  put_u16(b, bits / 8);
  put_u16(b, bits);
  put_tag(b, "data");
  put_u32(b, data_size);
  for (float s : audio.samples) {
    if (pcm16) {
      const double scaled = std::round(static_cast<double>(s) * 32768.0);
      const auto q = static_cast<std::int16_t>(std::clamp(scaled, -32768.0, 32767.0));
      put_u16(b, static_cast<std::uint16_t>(q));
    } else {
      std::uint32_t raw;
      std::memcpy(&raw, &s, sizeof raw);
      put_u32(b, raw);
    }
  }
  return b;
}

void write_wav(const std::filesystem::path& path, const AudioBuffer& audio,
               WavEncoding encoding) {
  const auto bytes = encode_wav(audio, encoding);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("wav: cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

// ---------------------------------------------------------------------------
// Resampling

AudioBuffer resample(const AudioBuffer& audio, int target_rate) {
  if (audio.sample_rate <= 0 || target_rate <= 0) {
    throw ContractError("resample: sample rates must be positive");
  }
  if (audio.sample_rate == target_rate) return audio;

  constexpr int kTaps = 32;
  constexpr double kBeta = 8.0;
  constexpr double kHalfWidth = kTaps / 2 + 0.5;
  const long long g = std::gcd(audio.sample_rate, target_rate);
  const long long up = target_rate / g;
  const long long down = audio.sample_rate / g;
  const double cutoff = std::min(1.0, static_cast<double>(target_rate) / audio.sample_rate);
  const double i0_beta = std::cyl_bessel_i(0.0, kBeta);

  // One normalised tap set per output phase.
  Eigen::MatrixXd taps(up, kTaps);
  for (long long p = 0; p < up; ++p) {
    const double frac = static_cast<double>(p) / static_cast<double>(up);
    for (int k = 0; k < kTaps; ++k) {
      const double d = static_cast<double>(k - (kTaps / 2 - 1)) - frac;
      const double x = cutoff * d;
      const double sinc = x == 0.0 ? 1.0 : std::sin(kPi * x) / (kPi * x);
      const double r = d / kHalfWidth;
      const double window = std::cyl_bessel_i(0.0, kBeta * std::sqrt(std::max(0.0, 1.0 - r * r))) / i0_beta;
      taps(p, k) = cutoff * sinc * window;
    }
    taps.row(p) /= taps.row(p).sum();
  }

  const auto n_in = static_cast<long long>(audio.samples.size());
  const auto n_out = static_cast<long long>(
      std::llround(static_cast<double>(n_in) * target_rate / audio.sample_rate));
  AudioBuffer out;
  out.sample_rate = target_rate;
  out.samples.resize(static_cast<std::size_t>(n_out));
  for (long long n = 0; n < n_out; ++n) {
    const long long num = n * down;
    const long long base = num / up;
    const long long phase = num % up;
    double acc = 0.0;
    for (int k = 0; k < kTaps; ++k) {
      const long long idx = base + k - (kTaps / 2 - 1);
      if (idx >= 0 && idx < n_in) acc += taps(phase, k) * audio.samples[static_cast<std::size_t>(idx)];
    }
    out.samples[static_cast<std::size_t>(n)] = static_cast<float>(acc);
  }
  return out;
}

// ---------------------------------------------------------------------------
// STFT

Eigen::VectorXd hann_window(int length) {
  Eigen::VectorXd w(length);
  for (int i = 0; i < length; ++i) w(i) = 0.5 - 0.5 * std::cos(2.0 * kPi * i / length);
  return w;
}

ComplexMatrix stft(std::span<const double> signal, const MelConfig& cfg) {
  const Index frames = cfg.frame_count(signal.size());
  const Eigen::VectorXd window = hann_window(cfg.win_length);
  ComplexMatrix out(frames, cfg.n_bins());
  auto fft = make_fft();
  std::vector<double> buf(static_cast<std::size_t>(cfg.n_fft));
  std::vector<std::complex<double>> spec;
  for (Index t = 0; t < frames; ++t) {
    std::fill(buf.begin(), buf.end(), 0.0);
    const std::size_t start = static_cast<std::size_t>(t) * cfg.hop_length;
    for (int i = 0; i < cfg.win_length; ++i) buf[i] = signal[start + i] * window(i);
    fft.fwd(spec, buf);
    for (int k = 0; k < cfg.n_bins(); ++k) out(t, k) = spec[static_cast<std::size_t>(k)];
  }
  return out;
}

Eigen::VectorXd istft(const ComplexMatrix& spec, const MelConfig& cfg, std::size_t length) {
  const Eigen::VectorXd window = hann_window(cfg.win_length);
  Eigen::VectorXd out = Eigen::VectorXd::Zero(static_cast<Index>(length));
  Eigen::VectorXd norm = Eigen::VectorXd::Zero(static_cast<Index>(length));
  auto fft = make_fft();
  std::vector<std::complex<double>> half(static_cast<std::size_t>(cfg.n_bins()));
  std::vector<double> frame;
  for (Index t = 0; t < spec.rows(); ++t) {
    for (int k = 0; k < cfg.n_bins(); ++k) half[static_cast<std::size_t>(k)] = spec(t, k);
    fft.inv(frame, half, cfg.n_fft);
    const std::size_t start = static_cast<std::size_t>(t) * cfg.hop_length;
    for (int i = 0; i < cfg.win_length; ++i) {
      const std::size_t at = start + static_cast<std::size_t>(i);
      if (at >= length) break;
      out(static_cast<Index>(at)) += window(i) * frame[static_cast<std::size_t>(i)];
      norm(static_cast<Index>(at)) += window(i) * window(i);
    }
  }
  for (Index i = 0; i < out.size(); ++i) out(i) = norm(i) > 1e-10 ? out(i) / norm(i) : 0.0;
  return out;
}

// ---------------------------------------------------------------------------
// Mel

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }

double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

namespace {

std::vector<double> mel_edges(const MelConfig& cfg) {
  const double lo = hz_to_mel(cfg.fmin);
  const double hi = hz_to_mel(cfg.fmax);
  std::vector<double> edges(static_cast<std::size_t>(cfg.n_mels + 2));
  for (std::size_t i = 0; i < edges.size(); ++i) {
    edges[i] = mel_to_hz(lo + (hi - lo) * static_cast<double>(i) / (cfg.n_mels + 1));
  }
  return edges;
}

}  // namespace

std::vector<double> mel_center_frequencies(const MelConfig& cfg) {
  const auto edges = mel_edges(cfg);
  return {edges.begin() + 1, edges.end() - 1};
}

MatrixXd mel_filterbank(const MelConfig& cfg) {
  cfg.validate();
  const auto edges = mel_edges(cfg);
  MatrixXd fb = MatrixXd::Zero(cfg.n_mels, cfg.n_bins());
  for (int m = 0; m < cfg.n_mels; ++m) {
    const double left = edges[m], centre = edges[m + 1], right = edges[m + 2];
    for (int k = 0; k < cfg.n_bins(); ++k) {
      const double f = static_cast<double>(k) * cfg.sample_rate / cfg.n_fft;
      const double rise = (f - left) / (centre - left);
      const double fall = (right - f) / (right - centre);
      fb(m, k) = std::max(0.0, std::min(rise, fall));
    }
  }
  return fb;
}

Spectrogram log_mel(const AudioBuffer& audio, const MelConfig& cfg) {
  cfg.validate();
  if (audio.sample_rate != cfg.sample_rate) {
    throw ContractError("log_mel: audio is " + std::to_string(audio.sample_rate) +
                        " Hz, config expects " + std::to_string(cfg.sample_rate) + " Hz");
  }
  if (audio.samples.size() < static_cast<std::size_t>(cfg.win_length)) {
    throw ContractError("log_mel: utterance of " + std::to_string(audio.samples.size()) +
                        " samples is shorter than one window (" +
                        std::to_string(cfg.win_length) + ")");
  }
  std::vector<double> signal(audio.samples.begin(), audio.samples.end());
  const ComplexMatrix spec = stft(signal, cfg);
  const MatrixXd magnitude = spec.cwiseAbs();
  const MatrixXd fb = mel_filterbank(cfg);
  MatrixXd mel = magnitude * fb.transpose();
  Spectrogram out;
  out.frames = mel.cwiseMax(cfg.log_floor).array().log().matrix();
  out.config = cfg;
  out.kind = SpectrogramKind::LogMel;
  return out;
}

// ---------------------------------------------------------------------------
// Griffin-Lim

constexpr int kNnlsIterations = 100;

MatrixXd mel_to_linear(const Spectrogram& spec) {
  if (spec.kind != SpectrogramKind::LogMel) throw ContractError("mel_to_linear: expected log-mel input");
  const MelConfig& cfg = spec.config;
  if (spec.frames.cols() != cfg.n_mels) {
    throw DimensionError("mel_to_linear: spectrogram has " + std::to_string(spec.frames.cols()) +
                         " bands, config has " + std::to_string(cfg.n_mels));
  }
  const MatrixXd fb = mel_filterbank(cfg);
  const Eigen::MatrixXd pinv = Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd>(fb).pseudoInverse();
  const double silent = cfg.log_floor * (1.0 + 1e-6);
  MatrixXd mel = spec.frames.array().exp().matrix();
  mel = (mel.array() <= silent).select(0.0, mel);
  MatrixXd linear = (mel * pinv.transpose()).cwiseMax(0.0);

  // Non-negative least squares refinement, min ||X F^T - M|| s.t. X >= 0, by
  // accelerated projected gradient from the clipped pseudo-inverse solution.
  const double lipschitz = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(fb * fb.transpose()).eigenvalues().maxCoeff();
  if (!(lipschitz > 0.0)) return linear;
  const double step = 1.0 / lipschitz;
  MatrixXd y = linear;
  double t = 1.0;
  for (int it = 0; it < kNnlsIterations; ++it) {
    const MatrixXd next = (y - step * ((y * fb.transpose() - mel) * fb)).cwiseMax(0.0);
    const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    y = next + ((t - 1.0) / t_next) * (next - linear);
    linear = next;
    t = t_next;
  }
  return linear;
}

double spectral_inconsistency(const Eigen::VectorXd& signal, const MatrixXd& magnitude,
                              const MelConfig& cfg) {
  const ComplexMatrix x = stft(std::span<const double>(signal.data(), static_cast<std::size_t>(signal.size())), cfg);
  const Index frames = std::min<Index>(x.rows(), magnitude.rows());
  double acc = 0.0;
  for (Index t = 0; t < frames; ++t) {
    for (Index k = 0; k < magnitude.cols(); ++k) {
      const double weight = (k == 0 || k == magnitude.cols() - 1) ? 1.0 : 2.0;
      const double d = std::abs(x(t, k)) - magnitude(t, k);
      acc += weight * d * d;
    }
  }
  return std::sqrt(acc);
}

Eigen::VectorXd griffin_lim_linear(const MatrixXd& magnitude, const MelConfig& cfg,
                                   const GriffinLimOptions& options) {
  if (magnitude.cols() != cfg.n_bins()) {
    throw DimensionError("griffin_lim: magnitude has " + std::to_string(magnitude.cols()) +
                         " bins, expected " + std::to_string(cfg.n_bins()));
  }
  const Index frames = magnitude.rows();
  if (frames == 0) return Eigen::VectorXd();
  const std::size_t length =
      static_cast<std::size_t>((frames - 1) * cfg.hop_length + cfg.win_length);

  std::mt19937_64 rng(options.seed);
  std::uniform_real_distribution<double> angle(-kPi, kPi);
  ComplexMatrix estimate(frames, magnitude.cols());
  for (Index t = 0; t < frames; ++t) {
    for (Index k = 0; k < magnitude.cols(); ++k) estimate(t, k) = std::polar(magnitude(t, k), angle(rng));
  }
  Eigen::VectorXd signal = istft(estimate, cfg, length);
  for (int it = 0; it < options.iterations; ++it) {
    const ComplexMatrix rebuilt =
        stft(std::span<const double>(signal.data(), length), cfg);
    if (options.residuals != nullptr) {
      options.residuals->push_back(spectral_inconsistency(signal, magnitude, cfg));
    }
    for (Index t = 0; t < frames; ++t) {
      for (Index k = 0; k < magnitude.cols(); ++k) {
        const std::complex<double> z = rebuilt(t, k);
        const double r = std::abs(z);
        estimate(t, k) = r > 1e-12 ? magnitude(t, k) * (z / r) : std::complex<double>(magnitude(t, k), 0.0);
      }
    }
    signal = istft(estimate, cfg, length);
  }
  if (options.residuals != nullptr) {
    options.residuals->push_back(spectral_inconsistency(signal, magnitude, cfg));
  }
  return signal;
}

AudioBuffer griffin_lim(const Spectrogram& spec, const GriffinLimOptions& options) {
  const MatrixXd linear = mel_to_linear(spec);
  Eigen::VectorXd signal = griffin_lim_linear(linear, spec.config, options);
  const double peak = signal.size() > 0 ? signal.cwiseAbs().maxCoeff() : 0.0;
  if (peak > 0.0) signal *= options.peak / peak;
  AudioBuffer out;
  out.sample_rate = spec.config.sample_rate;
  out.samples.resize(static_cast<std::size_t>(signal.size()));
  for (Index i = 0; i < signal.size(); ++i) out.samples[static_cast<std::size_t>(i)] = static_cast<float>(signal(i));
  return out;
}

}  // namespace s2vc::dsp
