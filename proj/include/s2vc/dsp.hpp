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

#pragma once

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include <complex>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "s2vc/tensor.hpp"

namespace s2vc::dsp {

struct AudioBuffer {
  std::vector<float> samples;
  int sample_rate = 16000;

  double duration_seconds() const {
    return static_cast<double>(samples.size()) / static_cast<double>(sample_rate);
  }
};

struct MelConfig {
  int sample_rate = 16000;
  int n_fft = 512;
  int win_length = 400;
  int hop_length = 160;
  int n_mels = 80;
  double fmin = 0.0;
  double fmax = 8000.0;
  double log_floor = 1e-10;

  /// Throws ConfigError when the invariants hop <= win <= n_fft, fmax <= sr/2 do not hold.
  void validate() const;
  int n_bins() const { return n_fft / 2 + 1; }
  /// Frames produced for `n_samples` input samples (no centre padding).
  Index frame_count(std::size_t n_samples) const;

  nlohmann::json to_json() const;
  static MelConfig from_json(const nlohmann::json& j);
};

enum class SpectrogramKind { Linear, LogMel };

struct Spectrogram {
  MatrixXd frames;  // T x F
  MelConfig config;
  SpectrogramKind kind = SpectrogramKind::LogMel;
};

using ComplexMatrix = Eigen::Matrix<std::complex<double>, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// -- WAV ---------------------------------------------------------------------

/// Reads RIFF/WAVE PCM16 or IEEE float32, mono or stereo (averaged to mono).
AudioBuffer read_wav(const std::filesystem::path& path);
AudioBuffer decode_wav(const std::vector<std::uint8_t>& bytes);

enum class WavEncoding { Pcm16, Float32 };

void write_wav(const std::filesystem::path& path, const AudioBuffer& audio,
               WavEncoding encoding = WavEncoding::Pcm16);
std::vector<std::uint8_t> encode_wav(const AudioBuffer& audio,
                                     WavEncoding encoding = WavEncoding::Pcm16);

// -- Resampling --------------------------------------------------------------

/// Polyphase windowed-sinc resampler: Kaiser window (beta 8), 32 taps per phase,
/// anti-aliasing cutoff at the lower of the two Nyquist rates. Output length is
/// round(len * target / source).
AudioBuffer resample(const AudioBuffer& audio, int target_rate);

// -- Spectral analysis -------------------------------------------------------

/// Periodic Hann window of the given length.
Eigen::VectorXd hann_window(int length);

/// Complex STFT, frames start at t * hop, windowed by a length-win Hann window
/// zero-padded to n_fft. Returns T x (n_fft/2 + 1).
ComplexMatrix stft(std::span<const double> signal, const MelConfig& cfg);

/// Least-squares overlap-add inverse of stft() for a signal of `length` samples.
Eigen::VectorXd istft(const ComplexMatrix& spec, const MelConfig& cfg, std::size_t length);

/// n_mels x n_bins triangular filterbank on the HTK mel scale (no area normalisation).
MatrixXd mel_filterbank(const MelConfig& cfg);

double hz_to_mel(double hz);
double mel_to_hz(double mel);
/// Centre frequency of each mel band in Hz.
std::vector<double> mel_center_frequencies(const MelConfig& cfg);

/// Hann STFT magnitudes -> mel filterbank -> natural log with floor.
Spectrogram log_mel(const AudioBuffer& audio, const MelConfig& cfg = {});

struct GriffinLimOptions {
  int iterations = 60;
  std::uint64_t seed = 0;
  double peak = 0.95;
  /// Optional per-iteration inconsistency trace, || |STFT(x_i)| - S ||.
  std::vector<double>* residuals = nullptr;
};

/// Mel-domain magnitudes back to linear magnitudes: non-negative pseudo-inverse
/// of the filterbank. Entries at the log floor are treated as silence.
MatrixXd mel_to_linear(const Spectrogram& spec);

/// Griffin-Lim phase recovery from a linear magnitude spectrogram (T x n_bins).
Eigen::VectorXd griffin_lim_linear(const MatrixXd& magnitude, const MelConfig& cfg,
                                   const GriffinLimOptions& options = {});

/// Log-mel spectrogram to waveform; output is peak-normalised unless silent.
AudioBuffer griffin_lim(const Spectrogram& spec, const GriffinLimOptions& options = {});

/// Inconsistency of a magnitude estimate: weighted full-spectrum norm of |STFT(x)| - S.
double spectral_inconsistency(const Eigen::VectorXd& signal, const MatrixXd& magnitude,
                              const MelConfig& cfg);

}  // namespace s2vc::dsp
