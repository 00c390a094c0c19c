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

#include "corpus.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "error.hpp"
#include "parallel.hpp"

namespace lipmark {

namespace {
namespace fs = std::filesystem;

static_assert(std::endian::native == std::endian::little,
              "track file writer assumes a little-endian host");

// ---- lip contour template -------------------------------------------------
// Point order matches 68-point indices 49..68: outer ring 49..60 (12 points,
// clockwise from the left corner), inner ring 61..68 (8 points).
struct ContourPoint {
  double x_frac;  // [-1, 1] of the half width
  int region;     // 0 corner (midline), +1 upper, -1 lower
  double y_frac;  // fraction of lip thickness / gap
};

constexpr ContourPoint kOuter[kOuterRingSize] = {
    {-1.00, 0, 0.00}, {-0.65, +1, 0.80}, {-0.30, +1, 1.00}, {0.00, +1, 0.92},
    {0.30, +1, 1.00},  {0.65, +1, 0.80},  {1.00, 0, 0.00},   {0.60, -1, 0.78},
    {0.30, -1, 1.00},  {0.00, -1, 1.12},  {-0.30, -1, 1.00}, {-0.60, -1, 0.78},
};

constexpr ContourPoint kInner[kInnerRingSize] = {
    {-0.80, 0, 0.00}, {-0.40, +1, 0.90}, {0.00, +1, 1.00}, {0.40, +1, 0.90},
    {0.80, 0, 0.00},  {0.40, -1, 0.90},  {0.00, -1, 1.00}, {-0.40, -1, 0.90},
};

struct MouthGeometry {
  double half_width;
  double gap;         // inner opening height
  double upper_thick;
  double lower_thick;
  double y_scale;
  double cx, cy;
};

MouthGeometry geometry_for_pose(const Pose& pose, const SpeakerProfile& profile, int64_t height,
                                int64_t width) {
  MouthGeometry g;
  g.half_width = 0.5 * profile.base_width * pose.width * (1.0 - 0.25 * pose.rounding);
  double open_span = 0.30 + 0.25 * profile.articulation_rate;
  g.gap = profile.base_height * pose.opening * open_span;
  g.upper_thick = profile.base_height * (0.18 + 0.10 * pose.rounding);
  g.lower_thick = profile.base_height * (0.22 + 0.10 * pose.rounding);
  g.y_scale = 1.0 + profile.aspect_jitter;
  g.cx = static_cast<double>(width) / 2.0 + profile.center_dx;
  g.cy = static_cast<double>(height) / 2.0 + profile.center_dy;
  return g;
}

void place_ring(const ContourPoint* tpl, int n, const MouthGeometry& g, bool inner, float* out) {
  for (int i = 0; i < n; ++i) {
    double x = g.cx + tpl[i].x_frac * g.half_width;
    double y = 0.0;
    if (tpl[i].region > 0) {
      y = inner ? -(g.gap / 2.0) * tpl[i].y_frac : -(g.gap / 2.0 + g.upper_thick * tpl[i].y_frac);
    } else if (tpl[i].region < 0) {
      y = inner ? (g.gap / 2.0) * tpl[i].y_frac : (g.gap / 2.0 + g.lower_thick * tpl[i].y_frac);
    }
    out[2 * i] = static_cast<float>(x);
    out[2 * i + 1] = static_cast<float>(g.cy + y * g.y_scale);
  }
}

// ---- rasterization ----------------------------------------------------------

// Scanline fill of a closed polygon: sets pixels whose centers lie inside.
void fill_polygon(const float* pts, int n, int64_t height, int64_t width, double value,
                  double* img) {
  if (n < 3) return;
  double ymin = pts[1], ymax = pts[1];
  for (int i = 1; i < n; ++i) {
    ymin = std::min(ymin, static_cast<double>(pts[2 * i + 1]));
    ymax = std::max(ymax, static_cast<double>(pts[2 * i + 1]));
  }
  int64_t row0 = std::max<int64_t>(0, static_cast<int64_t>(std::floor(ymin)));
  int64_t row1 = std::min<int64_t>(height - 1, static_cast<int64_t>(std::ceil(ymax)));
  double xs[32];
  for (int64_t row = row0; row <= row1; ++row) {
    double yc = static_cast<double>(row) + 0.5;
    int count = 0;
    for (int i = 0; i < n; ++i) {
      double x1 = pts[2 * i], y1 = pts[2 * i + 1];
      int j = (i + 1) % n;
      double x2 = pts[2 * j], y2 = pts[2 * j + 1];
      if ((y1 <= yc && yc < y2) || (y2 <= yc && yc < y1)) {
        xs[count++] = x1 + (yc - y1) * (x2 - x1) / (y2 - y1);
      }
    }
    std::sort(xs, xs + count);
    for (int i = 0; i + 1 < count; i += 2) {
      int64_t c0 = std::max<int64_t>(0, static_cast<int64_t>(std::ceil(xs[i] - 0.5)));
      int64_t c1 = std::min<int64_t>(width - 1, static_cast<int64_t>(std::floor(xs[i + 1] - 0.5)));
      for (int64_t c = c0; c <= c1; ++c) img[row * width + c] = value;
    }
  }
}

// Separable Gaussian blur, sigma ~1, radius 3.
void gaussian_blur(double* img, int64_t height, int64_t width, std::vector<double>& scratch) {
  constexpr int kRadius = 3;
  static const std::array<double, 2 * kRadius + 1> kKernel = [] {
    std::array<double, 2 * kRadius + 1> k{};
    double sum = 0.0;
    for (int i = -kRadius; i <= kRadius; ++i) {
      k[static_cast<size_t>(i + kRadius)] = std::exp(-0.5 * i * i / (1.0 * 1.0));
      sum += k[static_cast<size_t>(i + kRadius)];
    }
    for (double& v : k) v /= sum;
    return k;
  }();
  scratch.resize(static_cast<size_t>(height * width));
  // horizontal
  for (int64_t r = 0; r < height; ++r) {
    const double* src = img + r * width;
    double* dst = scratch.data() + r * width;
    for (int64_t c = 0; c < width; ++c) {
      double acc = 0.0;
      for (int i = -kRadius; i <= kRadius; ++i) {
        int64_t cc = std::clamp<int64_t>(c + i, 0, width - 1);
        acc += kKernel[static_cast<size_t>(i + kRadius)] * src[cc];
      }
      dst[c] = acc;
    }
  }
  // vertical
  for (int64_t r = 0; r < height; ++r) {
    double* dst = img + r * width;
    for (int64_t c = 0; c < width; ++c) {
      double acc = 0.0;
      for (int i = -kRadius; i <= kRadius; ++i) {
        int64_t rr = std::clamp<int64_t>(r + i, 0, height - 1);
        acc += kKernel[static_cast<size_t>(i + kRadius)] * scratch[rr * width + c];
      }
      dst[c] = acc;
    }
  }
}

std::string zero_pad(int v, int w) {
  std::string s = std::to_string(v);
  while (static_cast<int>(s.size()) < w) s.insert(s.begin(), '0');
  return s;
}

}  // namespace

// ---- profiles, poses, grammar ----------------------------------------------

SpeakerProfile SpeakerProfile::derive(uint64_t corpus_seed, int speaker_id, double noise_base) {
  Rng rng = Rng(corpus_seed).child("profile", static_cast<uint64_t>(speaker_id));
  SpeakerProfile p;
  p.speaker_id = speaker_id;
  p.base_width = rng.uniform(34.0, 46.0);
  p.base_height = rng.uniform(20.0, 30.0);
  p.aspect_jitter = rng.uniform(-0.15, 0.15);
  p.center_dx = rng.uniform(-6.0, 6.0);
  p.center_dy = rng.uniform(-4.0, 4.0);
  p.articulation_rate = rng.uniform(0.7, 1.3);
  p.noise_level = noise_base * rng.uniform(0.5, 1.5);
  p.skin_level = rng.uniform(0.45, 0.65);
  return p;
}

Pose pose_for_char(char c) {
  // Fixed, frozen articulation table: vowels open, bilabials closed,
  // rounded vowels narrow.
  switch (c) {
    case 'a': return {1.00, 1.00, 0.00};
    case 'e': return {0.70, 1.05, 0.00};
    case 'i': return {0.50, 1.10, 0.00};
    case 'o': return {0.80, 0.75, 0.80};
    case 'u': return {0.55, 0.65, 1.00};
    case 'b':
    case 'm':
    case 'p': return {0.00, 0.95, 0.10};
    case 'f':
    case 'v': return {0.15, 0.95, 0.10};
    case 'w': return {0.30, 0.60, 1.00};
    case 'r': return {0.35, 0.80, 0.60};
    case 's':
    case 'z':
    case 't':
    case 'd':
    case 'n':
    case 'l': return {0.30, 1.00, 0.00};
    case ' ': return {0.12, 0.90, 0.10};
    default: return {0.40, 0.95, 0.10};
  }
}

std::string Sentence::text() const {
  std::string out;
  for (size_t i = 0; i < words.size(); ++i) {
    if (i) out += ' ';
    out += words[i];
  }
  return out;
}

const std::array<std::vector<std::string>, 6>& grammar_slots() {
  static const std::array<std::vector<std::string>, 6> slots = [] {
    std::array<std::vector<std::string>, 6> s;
    s[0] = {"bin", "lay", "place", "set"};
    s[1] = {"blue", "green", "red", "white"};
    s[2] = {"at", "by", "in", "with"};
    for (char c = 'a'; c <= 'z'; ++c) {
      if (c != 'w') s[3].push_back(std::string(1, c));
    }
    s[4] = {"zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine"};
    s[5] = {"again", "now", "please", "soon"};
    return s;
  }();
  return slots;
}

Sentence sample_sentence(Rng& rng) {
  const auto& slots = grammar_slots();
  Sentence s;
  for (size_t i = 0; i < slots.size(); ++i) {
    s.words[i] = slots[i][rng.below(slots[i].size())];
  }
  return s;
}

// ---- track synthesis ---------------------------------------------------------

std::vector<Pose> pose_sequence(const std::string& transcript, int64_t frames) {
  int64_t chars = static_cast<int64_t>(transcript.size());
  LIPMARK_CHECK(chars > 0, ErrorCode::kInvalidArgument, "empty transcript");
  LIPMARK_CHECK(frames >= 2 * chars, ErrorCode::kCapacity,
                "clip too short: " + std::to_string(frames) + " frames for " +
                    std::to_string(chars) + " characters (need at least 2 per character)");
  // keyframe n sits at the center of its character span; frames between
  // keyframes interpolate linearly
  std::vector<Pose> out(static_cast<size_t>(frames));
  auto key_time = [&](int64_t n) {
    return (static_cast<double>(n) + 0.5) * static_cast<double>(frames) /
           static_cast<double>(chars);
  };
  auto key_pose = [&](int64_t n) { return pose_for_char(transcript[static_cast<size_t>(n)]); };
  for (int64_t t = 0; t < frames; ++t) {
    double ft = static_cast<double>(t);
    int64_t n = static_cast<int64_t>(std::floor((ft / frames) * chars - 0.5));
    if (n < 0) {
      out[static_cast<size_t>(t)] = key_pose(0);
      continue;
    }
    if (n >= chars - 1) {
      out[static_cast<size_t>(t)] = key_pose(chars - 1);
      continue;
    }
    double t0 = key_time(n), t1 = key_time(n + 1);
    double a = (ft - t0) / (t1 - t0);
    a = std::clamp(a, 0.0, 1.0);
    Pose p0 = key_pose(n), p1 = key_pose(n + 1);
    out[static_cast<size_t>(t)] = {p0.opening + a * (p1.opening - p0.opening),
                                   p0.width + a * (p1.width - p0.width),
                                   p0.rounding + a * (p1.rounding - p0.rounding)};
  }
  return out;
}

LandmarkTrack make_track(const SpeakerProfile& profile, const Sentence& sentence, int64_t frames,
                         int64_t height, int64_t width) {
  std::vector<Pose> poses = pose_sequence(sentence.text(), frames);
  LandmarkTrack track;
  track.frames = frames;
  track.landmarks = kNumLandmarks;
  track.xy.resize(static_cast<size_t>(frames * kNumLandmarks * 2));
  for (int64_t t = 0; t < frames; ++t) {
    MouthGeometry g = geometry_for_pose(poses[static_cast<size_t>(t)], profile, height, width);
    float* row = track.xy.data() + t * kNumLandmarks * 2;
    place_ring(kOuter, kOuterRingSize, g, /*inner=*/false, row);
    place_ring(kInner, kInnerRingSize, g, /*inner=*/true, row + 2 * kOuterRingSize);
  }
  for (size_t i = 0; i < track.xy.size(); i += 2) {
    LIPMARK_CHECK(track.xy[i] >= 0.0f && track.xy[i] < static_cast<float>(width) &&
                      track.xy[i + 1] >= 0.0f && track.xy[i + 1] < static_cast<float>(height),
                  ErrorCode::kInternal, "landmark left the frame bounds");
  }
  return track;
}

Tensor render_clip(const LandmarkTrack& track, const SpeakerProfile& profile, int64_t height,
                   int64_t width, uint64_t noise_seed) {
  Tensor clip = Tensor::uninit(Shape{track.frames, height, width});
  double lip_level = std::max(0.0, profile.skin_level - 0.25);
  double mouth_level = 0.08;
  std::vector<double> scratch;
  Rng noise(noise_seed);
  for (int64_t t = 0; t < track.frames; ++t) {
    double* img = clip.data() + t * height * width;
    std::fill(img, img + height * width, profile.skin_level);
    const float* row = track.xy.data() + t * kNumLandmarks * 2;
    fill_polygon(row, kOuterRingSize, height, width, lip_level, img);
    fill_polygon(row + 2 * kOuterRingSize, kInnerRingSize, height, width, mouth_level, img);
    gaussian_blur(img, height, width, scratch);
    if (profile.noise_level > 0.0) {
      for (int64_t i = 0; i < height * width; ++i) {
        img[i] += noise.uniform(-profile.noise_level, profile.noise_level);
      }
    }
    for (int64_t i = 0; i < height * width; ++i) img[i] = std::clamp(img[i], 0.0, 1.0);
  }
  return clip;
}

Sample synthesize_sample(const SpeakerProfile& profile, const Sentence& sentence, int64_t frames,
                         int64_t height, int64_t width, Rng rng) {
  Sample s;
  s.transcript = sentence.text();
  s.speaker_id = profile.speaker_id;
  s.profile = profile;
  s.noise_seed = rng.child("render_noise").next_u64();
  s.height = height;
  s.width = width;
  s.track = make_track(profile, sentence, frames, height, width);
  s.clip = render_clip(s.track, profile, height, width, s.noise_seed);
  return s;
}

void ensure_clip(Sample& sample) {
  if (!sample.clip.empty()) return;
  sample.clip = render_clip(sample.track, sample.profile, sample.height, sample.width,
                            sample.noise_seed);
}

// ---- corpus -------------------------------------------------------------------

Corpus Corpus::generate(const CorpusConfig& config) {
  Corpus corpus;
  corpus.config = config;
  corpus.samples.resize(static_cast<size_t>(config.speakers) *
                        static_cast<size_t>(config.samples_per_speaker));
  parallel_for(static_cast<int64_t>(corpus.samples.size()), [&](int64_t lo, int64_t hi) {
    for (int64_t i = lo; i < hi; ++i) {
      int speaker = static_cast<int>(i / config.samples_per_speaker);
      int index = static_cast<int>(i % config.samples_per_speaker);
      SpeakerProfile profile = SpeakerProfile::derive(config.seed, speaker, config.noise);
      Rng rng = Rng(config.seed).child("sample", static_cast<uint64_t>(speaker),
                                       static_cast<uint64_t>(index));
      Sentence sentence = sample_sentence(rng);
      Sample s;
      s.transcript = sentence.text();
      s.speaker_id = speaker;
      s.profile = profile;
      s.noise_seed = Rng(config.seed)
                         .child("noise", static_cast<uint64_t>(speaker),
                                static_cast<uint64_t>(index))
                         .next_u64();
      s.height = config.height;
      s.width = config.width;
      s.track = make_track(profile, sentence, config.frames, config.height, config.width);
      corpus.samples[static_cast<size_t>(i)] = std::move(s);
    }
  });
  return corpus;
}

DatasetSplit split_dataset(const Corpus& corpus, SplitMode mode,
                           const std::vector<int>& held_out_speakers, int test_per_speaker) {
  DatasetSplit split;
  if (mode == SplitMode::kUnseen) {
    LIPMARK_CHECK(!held_out_speakers.empty(), ErrorCode::kInvalidArgument,
                  "unseen mode needs a nonempty held-out speaker set");
    for (int s : held_out_speakers) {
      LIPMARK_CHECK(s >= 0 && s < corpus.config.speakers, ErrorCode::kInvalidArgument,
                    "unknown speaker id in held-out set: " + std::to_string(s));
    }
    for (size_t i = 0; i < corpus.samples.size(); ++i) {
      bool held = std::find(held_out_speakers.begin(), held_out_speakers.end(),
                            corpus.samples[i].speaker_id) != held_out_speakers.end();
      (held ? split.test : split.train).push_back(static_cast<int>(i));
    }
    return split;
  }
  // overlapped: fixed-size random test subset per speaker
  LIPMARK_CHECK(test_per_speaker > 0 && test_per_speaker < corpus.config.samples_per_speaker,
                ErrorCode::kInvalidArgument, "test_per_speaker out of range");
  for (int speaker = 0; speaker < corpus.config.speakers; ++speaker) {
    std::vector<int> ids;
    for (size_t i = 0; i < corpus.samples.size(); ++i) {
      if (corpus.samples[i].speaker_id == speaker) ids.push_back(static_cast<int>(i));
    }
    Rng rng = Rng(corpus.config.seed).child("split", static_cast<uint64_t>(speaker));
    // Fisher-Yates
    for (size_t i = ids.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(rng.below(i));
      std::swap(ids[i - 1], ids[j]);
    }
    for (size_t i = 0; i < ids.size(); ++i) {
      (i < static_cast<size_t>(test_per_speaker) ? split.test : split.train).push_back(ids[i]);
    }
  }
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.test.begin(), split.test.end());
  return split;
}

// ---- files ---------------------------------------------------------------------

namespace {

constexpr char kTrackMagic[4] = {'L', 'M', 'T', 'K'};
constexpr uint32_t kTrackVersion = 1;

template <typename T>
void put(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::ifstream& in, const std::string& path, const char* what) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  LIPMARK_CHECK(in.good(), ErrorCode::kParse,
                "truncated landmark file (" + std::string(what) + "): " + path);
  return v;
}

}  // namespace

void write_track_file(const std::string& path, const LandmarkTrack& track,
                      const std::string& transcript, int speaker_id, int64_t height,
                      int64_t width) {
  std::ofstream out(path, std::ios::binary);
  LIPMARK_CHECK(out.good(), ErrorCode::kIo, "cannot write landmark file: " + path);
  out.write(kTrackMagic, sizeof(kTrackMagic));
  put<uint32_t>(out, kTrackVersion);
  put<uint32_t>(out, static_cast<uint32_t>(track.landmarks));
  put<uint32_t>(out, static_cast<uint32_t>(track.frames));
  put<uint32_t>(out, static_cast<uint32_t>(height));
  put<uint32_t>(out, static_cast<uint32_t>(width));
  put<uint32_t>(out, static_cast<uint32_t>(speaker_id));
  put<uint32_t>(out, static_cast<uint32_t>(transcript.size()));
  out.write(transcript.data(), static_cast<std::streamsize>(transcript.size()));
  out.write(reinterpret_cast<const char*>(track.xy.data()),
            static_cast<std::streamsize>(track.xy.size() * sizeof(float)));
  LIPMARK_CHECK(out.good(), ErrorCode::kIo, "failed writing landmark file: " + path);
}

LoadedTrack load_landmark_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  LIPMARK_CHECK(in.good(), ErrorCode::kIo, "cannot open landmark file: " + path);
  char magic[4];
  in.read(magic, sizeof(magic));
  LIPMARK_CHECK(in.good() && std::memcmp(magic, kTrackMagic, sizeof(kTrackMagic)) == 0,
                ErrorCode::kParse, "bad magic in landmark file: " + path);
  uint32_t version = get<uint32_t>(in, path, "version");
  LIPMARK_CHECK(version == kTrackVersion, ErrorCode::kParse,
                "unsupported landmark file version in " + path);
  uint32_t k = get<uint32_t>(in, path, "landmark count");
  LIPMARK_CHECK(k == kNumLandmarks, ErrorCode::kParse,
                "landmark count must be 20, got " + std::to_string(k) + " in " + path);
  uint32_t frames = get<uint32_t>(in, path, "frame count");
  LIPMARK_CHECK(frames >= 1 && frames < (1u << 20), ErrorCode::kParse,
                "bad frame count in " + path);
  LoadedTrack out;
  out.height = get<uint32_t>(in, path, "height");
  out.width = get<uint32_t>(in, path, "width");
  out.speaker_id = static_cast<int>(get<uint32_t>(in, path, "speaker id"));
  uint32_t text_len = get<uint32_t>(in, path, "transcript length");
  LIPMARK_CHECK(text_len < (1u << 16), ErrorCode::kParse, "bad transcript length in " + path);
  out.transcript.resize(text_len);
  in.read(out.transcript.data(), text_len);
  LIPMARK_CHECK(in.good(), ErrorCode::kParse, "truncated landmark file (transcript): " + path);
  out.track.frames = frames;
  out.track.landmarks = kNumLandmarks;
  out.track.xy.resize(static_cast<size_t>(frames) * kNumLandmarks * 2);
  in.read(reinterpret_cast<char*>(out.track.xy.data()),
          static_cast<std::streamsize>(out.track.xy.size() * sizeof(float)));
  LIPMARK_CHECK(in.good(), ErrorCode::kParse, "truncated landmark file (coordinates): " + path);
  for (size_t i = 0; i < out.track.xy.size(); ++i) {
    LIPMARK_CHECK(std::isfinite(out.track.xy[i]), ErrorCode::kParse,
                  "non-finite coordinate at record " + std::to_string(i / 2) + " in " + path);
  }
  return out;
}

void write_corpus(const Corpus& corpus, const DatasetSplit& split, const std::string& out_dir) {
  fs::create_directories(fs::path(out_dir) / "tracks");
  std::vector<std::string> split_of(corpus.samples.size(), "train");
  for (int i : split.test) split_of[static_cast<size_t>(i)] = "test";

  std::ofstream manifest(fs::path(out_dir) / "manifest.tsv");
  LIPMARK_CHECK(manifest.good(), ErrorCode::kIo, "cannot write manifest in " + out_dir);
  manifest << "# lipmark corpus manifest v1"
           << " seed=" << corpus.config.seed << " speakers=" << corpus.config.speakers
           << " samples_per_speaker=" << corpus.config.samples_per_speaker
           << " frames=" << corpus.config.frames << " height=" << corpus.config.height
           << " width=" << corpus.config.width << " noise=" << corpus.config.noise << "\n";
  for (size_t i = 0; i < corpus.samples.size(); ++i) {
    const Sample& s = corpus.samples[i];
    int index = static_cast<int>(i) % corpus.config.samples_per_speaker;
    std::string rel = "tracks/spk" + zero_pad(s.speaker_id, 2) + "_" + zero_pad(index, 4) + ".lmk";
    write_track_file((fs::path(out_dir) / rel).string(), s.track, s.transcript, s.speaker_id,
                     s.height, s.width);
    manifest << rel << "\t" << s.speaker_id << "\t" << split_of[i] << "\n";
  }
  LIPMARK_CHECK(manifest.good(), ErrorCode::kIo, "failed writing manifest in " + out_dir);
}

LoadedCorpus load_corpus(const std::string& manifest_path) {
  std::ifstream in(manifest_path);
  LIPMARK_CHECK(in.good(), ErrorCode::kIo, "cannot open manifest: " + manifest_path);
  fs::path base = fs::path(manifest_path).parent_path();

  LoadedCorpus out;
  CorpusConfig& cfg = out.corpus.config;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (line[0] == '#') {
      // metadata comment: `key=value` pairs
      std::stringstream ss(line.substr(1));
      std::string tok;
      while (ss >> tok) {
        size_t eq = tok.find('=');
        if (eq == std::string::npos) continue;
        std::string key = tok.substr(0, eq), value = tok.substr(eq + 1);
        if (key == "seed") cfg.seed = std::stoull(value);
        if (key == "speakers") cfg.speakers = std::stoi(value);
        if (key == "samples_per_speaker") cfg.samples_per_speaker = std::stoi(value);
        if (key == "frames") cfg.frames = std::stoll(value);
        if (key == "height") cfg.height = std::stoll(value);
        if (key == "width") cfg.width = std::stoll(value);
        if (key == "noise") cfg.noise = std::stod(value);
      }
      continue;
    }
    std::stringstream ss(line);
    std::string rel, speaker_str, split_name;
    LIPMARK_CHECK(std::getline(ss, rel, '\t') && std::getline(ss, speaker_str, '\t') &&
                      std::getline(ss, split_name, '\t'),
                  ErrorCode::kParse,
                  manifest_path + ":" + std::to_string(lineno) + ": expected path\\tspeaker\\tsplit");
    LoadedTrack lt = load_landmark_file((base / rel).string());
    Sample s;
    s.track = std::move(lt.track);
    s.transcript = lt.transcript;
    s.speaker_id = std::stoi(speaker_str);
    s.height = lt.height;
    s.width = lt.width;
    s.profile = SpeakerProfile::derive(cfg.seed, s.speaker_id, cfg.noise);
    // regenerate the identical per-sample noise stream used at synthesis
    int index = 0;
    {
      size_t us = rel.find_last_of('_');
      size_t dot = rel.find_last_of('.');
      if (us != std::string::npos && dot != std::string::npos && dot > us) {
        index = std::atoi(rel.substr(us + 1, dot - us - 1).c_str());
      }
    }
    s.noise_seed = Rng(cfg.seed)
                       .child("noise", static_cast<uint64_t>(s.speaker_id),
                              static_cast<uint64_t>(index))
                       .next_u64();
    int idx_global = static_cast<int>(out.corpus.samples.size());
    (split_name == "test" ? out.split.test : out.split.train).push_back(idx_global);
    out.corpus.samples.push_back(std::move(s));
  }
  LIPMARK_CHECK(!out.corpus.samples.empty(), ErrorCode::kParse,
                "manifest lists no samples: " + manifest_path);
  return out;
}

}  // namespace lipmark
