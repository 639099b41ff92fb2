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

// Synthetic multi-speaker corpus for smoke tests and directional checks.
//
// Utterances are sequences of vowel-like phones rendered by harmonic synthesis.
// Speakers differ in pitch, formant scale and spectral tilt. Alongside the audio
// the generator writes content features standing in for an external
// self-supervised exporter: a fixed random embedding per phone, a weak
// time-invariant speaker offset, a random projection of the utterance's own
// log-mel frames (frame-level speaker leakage, as real SSL features carry) and
// frame noise ("CPC"), plus soft phone posteriors ("PPG").

#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "s2vc/features.hpp"

namespace s2vc {

struct ToyCorpusOptions {
  int n_speakers = 8;
  int utterances_per_speaker = 20;
  double min_seconds = 0.6;
  double max_seconds = 1.0;
  int cpc_dim = 256;
  double speaker_offset = 0.3;  // std of the per-speaker offset in content features
  double speaker_leak = 4.0;    // scale of the projected log-mel added to content features
  double feature_noise = 0.1;
  bool write_ppg = true;
  bool write_mel = false;  // normally produced by the feats command
  std::uint64_t seed = 0;
  dsp::MelConfig mel;
};

struct ToySpeaker {
  std::string id;
  double f0 = 120.0;
  double formant_scale = 1.0;
  double tilt_db_per_octave = -6.0;
};

std::vector<ToySpeaker> toy_speakers(int n, std::uint64_t seed);

/// Writes wavs/<speaker>/<utt>.wav, feats/<utt>.{cpc,ppg[,mel]}.s2vf and
/// manifest.jsonl (paths relative to `dir`). Returns the entries with resolved paths.
std::vector<ManifestEntry> make_toy_corpus(const std::filesystem::path& dir, const ToyCorpusOptions& options = {});

}  // namespace s2vc
