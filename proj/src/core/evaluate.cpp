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

#include "evaluate.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

namespace lipmark {

namespace fs = std::filesystem;

EvalReport evaluate_model(const LipModel& model, const Corpus& corpus,
                          const std::vector<int>& indices, int beam_width, int max_len) {
  EvalReport report;
  report.results.resize(indices.size());
  for (size_t i = 0; i < indices.size(); ++i) {
    const Sample& s = corpus.samples[static_cast<size_t>(indices[i])];
    BeamHypothesis hyp = model.decode_sample(s, beam_width, max_len);
    SampleResult r;
    r.index = indices[i];
    r.speaker = s.speaker_id;
    r.reference = s.transcript;
    r.hypothesis = model.vocab().decode(hyp.tokens);
    r.wer = edit_alignment(r.reference, r.hypothesis);
    report.results[i] = std::move(r);
  }
  for (const SampleResult& r : report.results) {
    auto add = [&](WerBreakdown& acc) {
      acc.substitutions += r.wer.substitutions;
      acc.deletions += r.wer.deletions;
      acc.insertions += r.wer.insertions;
      acc.ref_words += r.wer.ref_words;
    };
    add(report.corpus);
    add(report.per_speaker[r.speaker]);
  }
  auto finish = [](WerBreakdown& w) {
    w.wer = w.ref_words > 0
                ? 100.0 * static_cast<double>(w.errors()) / static_cast<double>(w.ref_words)
                : 0.0;
  };
  finish(report.corpus);
  for (auto& [spk, w] : report.per_speaker) finish(w);
  return report;
}

void write_decode_records(const std::string& path, const EvalReport& report) {
  std::ofstream out(path);
  LIPMARK_CHECK(out.good(), ErrorCode::kIo, "cannot write decode records: " + path);
  out << "# index\treference\thypothesis\twer\n";
  for (const SampleResult& r : report.results) {
    char wer[32];
    std::snprintf(wer, sizeof(wer), "%.4f", r.wer.wer);
    out << r.index << "\t" << r.reference << "\t" << r.hypothesis << "\t" << wer << "\n";
  }
  LIPMARK_CHECK(out.good(), ErrorCode::kIo, "failed writing decode records: " + path);
}

void write_eval_report(const std::string& out_dir, const EvalReport& report) {
  fs::create_directories(out_dir);
  write_decode_records((fs::path(out_dir) / "decodes.tsv").string(), report);
  std::ofstream out(fs::path(out_dir) / "eval.txt");
  LIPMARK_CHECK(out.good(), ErrorCode::kIo, "cannot write eval report in " + out_dir);
  char line[160];
  std::snprintf(line, sizeof(line), "corpus: wer %.4f%% (S=%lld D=%lld I=%lld N=%lld)\n",
                report.corpus.wer, static_cast<long long>(report.corpus.substitutions),
                static_cast<long long>(report.corpus.deletions),
                static_cast<long long>(report.corpus.insertions),
                static_cast<long long>(report.corpus.ref_words));
  out << line;
  for (const auto& [spk, w] : report.per_speaker) {
    std::snprintf(line, sizeof(line), "speaker %d: wer %.4f%% (S=%lld D=%lld I=%lld N=%lld)\n",
                  spk, w.wer, static_cast<long long>(w.substitutions),
                  static_cast<long long>(w.deletions), static_cast<long long>(w.insertions),
                  static_cast<long long>(w.ref_words));
    out << line;
  }
}

AblationReport run_ablation(const Config& base_cfg, const Corpus& corpus,
                            const DatasetSplit& split, const std::string& out_dir,
                            const ProgressFn& progress) {
  struct RowSpec {
    const char* label;
    bool relpos, motion, mi;
    int depth;
    bool crop;
  };
  const RowSpec specs[] = {
      {"full", true, true, true, 5, false},
      {"w/o RelPos", false, true, true, 5, false},
      {"w/o Motion", true, false, true, 5, false},
      {"w/o MI", true, true, false, 5, false},
      {"w/o RelPos&Motion", false, false, true, 5, false},
      {"w/o RelPos&MI", false, true, false, 5, false},
      {"w/o Motion&MI", true, false, false, 5, false},
      {"w/o RelPos&Motion&MI", false, false, false, 5, false},
      {"2D patch", true, true, true, 1, false},
      {"mouth crop", false, false, true, 5, true},
  };
  AblationReport report;
  if (!out_dir.empty()) fs::create_directories(out_dir);
  int beam = static_cast<int>(base_cfg.get_int("decode.beam_width"));
  int max_len = static_cast<int>(base_cfg.get_int("decode.max_len"));
  for (const RowSpec& spec : specs) {
    Config cfg = base_cfg;
    cfg.set("model.use_relpos", spec.relpos ? "true" : "false");
    cfg.set("model.use_motion", spec.motion ? "true" : "false");
    cfg.set("train.use_mi", spec.mi ? "true" : "false");
    cfg.set("model.tubelet_temporal_depth", std::to_string(spec.depth));
    cfg.set("model.mouth_crop", spec.crop ? "true" : "false");
    if (progress) progress(std::string("ablation: training '") + spec.label + "'");

    LipModel model;
    model.init(ModelConfig::from_config(cfg, corpus.config.speakers));
    Trainer trainer(model, TrainConfig::from_config(cfg), corpus, split);
    trainer.run("", "");
    if (progress) progress(std::string("ablation: evaluating '") + spec.label + "'");
    EvalReport ev = evaluate_model(model, corpus, split.test, beam, max_len);

    AblationRow row;
    row.label = spec.label;
    row.relpos = spec.relpos;
    row.motion = spec.motion;
    row.mi = spec.mi;
    row.tubelet_depth = spec.depth;
    row.mouth_crop = spec.crop;
    row.wer = ev.corpus.wer;
    report.rows.push_back(row);
    if (row.label == "full") {
      report.full_wer = row.wer;
      report.full_eval = std::move(ev);
    }
    if (row.label == "w/o MI") report.womi_wer = row.wer;
  }
  for (AblationRow& row : report.rows) row.delta_vs_full = row.wer - report.full_wer;
  if (!out_dir.empty()) {
    std::ofstream table(fs::path(out_dir) / "ablation.txt");
    table << format_ablation_table(report);
    std::ofstream records(fs::path(out_dir) / "ablation.tsv");
    records << "# label\trelpos\tmotion\tmi\ttubelet_depth\tmouth_crop\twer\tdelta_vs_full\n";
    for (const AblationRow& r : report.rows) {
      char buf[64];
      std::snprintf(buf, sizeof(buf), "%.4f\t%+.4f", r.wer, r.delta_vs_full);
      records << r.label << "\t" << (r.relpos ? 1 : 0) << "\t" << (r.motion ? 1 : 0) << "\t"
              << (r.mi ? 1 : 0) << "\t" << r.tubelet_depth << "\t" << (r.mouth_crop ? 1 : 0)
              << "\t" << buf << "\n";
    }
    write_eval_report((fs::path(out_dir) / "full_model").string(), report.full_eval);
  }
  return report;
}

std::string format_ablation_table(const AblationReport& report) {
  std::ostringstream os;
  os << "method                     | WER (%)\n";
  os << "---------------------------+--------\n";
  for (const AblationRow& r : report.rows) {
    char buf[128];
    std::snprintf(buf, sizeof(buf), "%-26s | %7.3f\n", r.label.c_str(), r.wer);
    os << buf;
  }
  char delta[128];
  std::snprintf(delta, sizeof(delta), "\nfull vs w/o MI delta: %+0.3f%% (w/o MI minus full)\n",
                report.womi_wer - report.full_wer);
  os << delta;
  return os.str();
}

void dump_attention_csv(const LipModel& model, const Sample& sample, const std::string& out_dir) {
  fs::create_directories(out_dir);
  std::vector<Tensor> maps = model.attention_maps(sample);  // per layer [T, heads, K, K]
  LIPMARK_CHECK(!maps.empty(), ErrorCode::kInternal, "no attention maps produced");
  int64_t frames = maps[0].dim(0);
  int64_t heads = maps[0].dim(1);
  int64_t k = maps[0].dim(2);

  std::ofstream raw(fs::path(out_dir) / "attention_raw.csv");
  LIPMARK_CHECK(raw.good(), ErrorCode::kIo, "cannot write attention csv in " + out_dir);
  raw << "layer,head,frame,query_landmark,key_landmark,weight\n";
  char buf[128];
  for (size_t layer = 0; layer < maps.size(); ++layer) {
    const Tensor& m = maps[layer];
    for (int64_t t = 0; t < frames; ++t) {
      for (int64_t h = 0; h < heads; ++h) {
        for (int64_t qi = 0; qi < k; ++qi) {
          for (int64_t kj = 0; kj < k; ++kj) {
            double w = m[((t * heads + h) * k + qi) * k + kj];
            std::snprintf(buf, sizeof(buf), "%zu,%lld,%lld,%lld,%lld,%.9g\n", layer,
                          static_cast<long long>(h), static_cast<long long>(t),
                          static_cast<long long>(qi + 49), static_cast<long long>(kj + 49), w);
            raw << buf;
          }
        }
      }
    }
  }

  // head/layer-averaged matrix per frame
  std::ofstream avg(fs::path(out_dir) / "attention_avg.csv");
  avg << "frame,query_landmark,key_landmark,weight\n";
  double denom = static_cast<double>(maps.size() * static_cast<size_t>(heads));
  for (int64_t t = 0; t < frames; ++t) {
    for (int64_t qi = 0; qi < k; ++qi) {
      for (int64_t kj = 0; kj < k; ++kj) {
        double acc = 0.0;
        for (const Tensor& m : maps) {
          for (int64_t h = 0; h < heads; ++h) {
            acc += m[((t * heads + h) * k + qi) * k + kj];
          }
        }
        std::snprintf(buf, sizeof(buf), "%lld,%lld,%lld,%.9g\n", static_cast<long long>(t),
                      static_cast<long long>(qi + 49), static_cast<long long>(kj + 49),
                      acc / denom);
        avg << buf;
      }
    }
  }
}

}  // namespace lipmark
