// Copyright 2026 The Lipmark Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "rng.hpp"
#include "tensor.hpp"

namespace lipmark {

inline constexpr int kNumLandmarks = 20;  // lip subset 49..68 of the 68-point convention
inline constexpr int kOuterRingSize = 12;  // points 49..60
inline constexpr int kInnerRingSize = 8;   // points 61..68

// Per-speaker appearance/articulation parameters, a pure function of
// (corpus_seed, speaker_id).
struct SpeakerProfile {
  int speaker_id = 0;
  double base_width = 40.0;   // mouth width in pixels
  double base_height = 24.0;  // mouth height scale in pixels
  double aspect_jitter = 0.0;
  double center_dx = 0.0;
  double center_dy = 0.0;
  double articulation_rate = 1.0;  // articulation strength multiplier
  double noise_level = 0.0;        // pixel noise amplitude
  double skin_level = 0.55;        // background gray level

  static SpeakerProfile derive(uint64_t corpus_seed, int speaker_id, double noise_base);
};

// Target lip pose for one character.
struct Pose {
  double opening = 0.0;   // inner gap, 0 closed .. 1 open
  double width = 1.0;     // horizontal stretch factor
  double rounding = 0.0;  // lip protrusion/pucker, narrows and thickens
};

Pose pose_for_char(char c);

// Six-slot fixed-grammar sentence.
struct Sentence {
  std::array<std::string, 6> words;
  std::string text() const;
};

const std::array<std::vector<std::string>, 6>& grammar_slots();
Sentence sample_sentence(Rng& rng);

// Landmark coordinates over time, stored in float32 like the on-disk format
// so in-memory tracks round-trip files bit-exactly.
struct LandmarkTrack {
  int64_t frames = 0;
  int64_t landmarks = 0;
  std::vector<float> xy;  // [frames][landmarks][2]

  float x(int64_t t, int64_t k) const { return xy[(t * landmarks + k) * 2]; }
  float y(int64_t t, int64_t k) const { return xy[(t * landmarks + k) * 2 + 1]; }
};

struct Sample {
  Tensor clip;  // [T,H,W] in [0,1]; empty until rendered
  LandmarkTrack track;
  std::string transcript;
  int speaker_id = 0;
  // Everything needed to re-render the clip deterministically.
  SpeakerProfile profile;
  uint64_t noise_seed = 0;
  int64_t height = 0, width = 0;
};

// Per-frame interpolated pose sequence for a transcript; requires
// T >= 2 * transcript length (capacity error otherwise).
std::vector<Pose> pose_sequence(const std::string& transcript, int64_t frames);

LandmarkTrack make_track(const SpeakerProfile& profile, const Sentence& sentence, int64_t frames,
                         int64_t height, int64_t width);

// Rasterizes the two contour rings from the track with Gaussian edge blur
// plus uniform pixel noise of the profile's amplitude.
Tensor render_clip(const LandmarkTrack& track, const SpeakerProfile& profile, int64_t height,
                   int64_t width, uint64_t noise_seed);

Sample synthesize_sample(const SpeakerProfile& profile, const Sentence& sentence, int64_t frames,
                         int64_t height, int64_t width, Rng rng);

// Renders sample.clip in place if empty.
void ensure_clip(Sample& sample);

// ---- corpus generation & splits ----

struct CorpusConfig {
  uint64_t seed = 7;
  int speakers = 8;
  int samples_per_speaker = 150;
  int64_t frames = 64;
  int64_t height = 96;
  int64_t width = 96;
  double noise = 0.02;
};

struct Corpus {
  CorpusConfig config;
  std::vector<Sample> samples;  // grouped by speaker, then sample index

  static Corpus generate(const CorpusConfig& config);
};

enum class SplitMode { kUnseen, kOverlapped };

struct DatasetSplit {
  std::vector<int> train;  // indices into Corpus::samples
  std::vector<int> test;
};

// unseen: test = all samples of held-out speakers. overlapped: per-speaker
// random test subset of fixed size (held_out ignored).
DatasetSplit split_dataset(const Corpus& corpus, SplitMode mode,
                           const std::vector<int>& held_out_speakers, int test_per_speaker);

// ---- landmark-track files & manifest ----

void write_track_file(const std::string& path, const LandmarkTrack& track,
                      const std::string& transcript, int speaker_id, int64_t height,
                      int64_t width);

struct LoadedTrack {
  LandmarkTrack track;
  std::string transcript;
  int speaker_id = 0;
  int64_t height = 0, width = 0;
};

LoadedTrack load_landmark_file(const std::string& path);

// Writes track files plus manifest.tsv (path, speaker, split) under out_dir.
void write_corpus(const Corpus& corpus, const DatasetSplit& split, const std::string& out_dir);

// Loads a corpus from a manifest written by write_corpus (or hand-built from
// externally supplied track files).
struct LoadedCorpus {
  Corpus corpus;
  DatasetSplit split;
};
LoadedCorpus load_corpus(const std::string& manifest_path);

}  // namespace lipmark
