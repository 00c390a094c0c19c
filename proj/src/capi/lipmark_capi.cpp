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

#include "lipmark/lipmark.h"

#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "config.hpp"
#include "corpus.hpp"
#include "evaluate.hpp"
#include "mi.hpp"
#include "model.hpp"
#include "parallel.hpp"
#include "selftest.hpp"
#include "trainer.hpp"

namespace {

namespace fs = std::filesystem;
using namespace lipmark;

thread_local std::string t_last_error;
thread_local std::string t_get_buffer;

lm_log_fn g_log_fn = nullptr;
void* g_log_user = nullptr;

void log_line(const std::string& line) {
  if (g_log_fn != nullptr) g_log_fn(line.c_str(), g_log_user);
}

lm_status to_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return LM_ERR_INVALID_ARGUMENT;
    case ErrorCode::kIo: return LM_ERR_IO;
    case ErrorCode::kParse: return LM_ERR_PARSE;
    case ErrorCode::kDimension: return LM_ERR_DIMENSION;
    case ErrorCode::kCapacity: return LM_ERR_CAPACITY;
    case ErrorCode::kInfeasible: return LM_ERR_INFEASIBLE;
    case ErrorCode::kInternal: return LM_ERR_INTERNAL;
  }
  return LM_ERR_INTERNAL;
}

template <typename Fn>
lm_status guarded(Fn&& fn) {
  try {
    t_last_error.clear();
    fn();
    return LM_OK;
  } catch (const Error& e) {
    t_last_error = e.what();
    return to_status(e.code());
  } catch (const std::exception& e) {
    t_last_error = e.what();
    return LM_ERR_INTERNAL;
  }
}

lm_status check_args(std::initializer_list<const void*> ptrs) {
  for (const void* p : ptrs) {
    if (p == nullptr) {
      t_last_error = "null argument";
      return LM_ERR_INVALID_ARGUMENT;
    }
  }
  return LM_OK;
}

CorpusConfig corpus_config_from(const Config& cfg) {
  CorpusConfig cc;
  cc.seed = static_cast<uint64_t>(cfg.get_int("seed"));
  cc.speakers = static_cast<int>(cfg.get_int("corpus.speakers"));
  cc.samples_per_speaker = static_cast<int>(cfg.get_int("corpus.samples_per_speaker"));
  cc.frames = cfg.get_int("corpus.frames");
  cc.height = cfg.get_int("corpus.height");
  cc.width = cfg.get_int("corpus.width");
  cc.noise = cfg.get_double("corpus.noise");
  return cc;
}

DatasetSplit split_from(const Config& cfg, const Corpus& corpus) {
  std::string mode = cfg.get_string("split.mode");
  if (mode == "unseen") {
    std::vector<int> held;
    for (int64_t v : cfg.get_int_list("split.held_out")) held.push_back(static_cast<int>(v));
    return split_dataset(corpus, SplitMode::kUnseen, held, 0);
  }
  if (mode == "overlapped") {
    return split_dataset(corpus, SplitMode::kOverlapped, {},
                         static_cast<int>(cfg.get_int("split.test_per_speaker")));
  }
  throw_error(ErrorCode::kParse, "split.mode must be 'unseen' or 'overlapped', got: " + mode);
}

void apply_threads(const Config& cfg) {
  set_thread_count(static_cast<int>(cfg.get_int("threads")));
}

struct LoadedModel {
  Config cfg;
  LipModel model;
};

// Rebuilds the model recorded in a checkpoint (architecture from the embedded
// config echo) and loads its parameters.
std::unique_ptr<LoadedModel> model_from_checkpoint(const std::string& path) {
  Checkpoint ck = Checkpoint::load(path);
  auto out = std::make_unique<LoadedModel>();
  std::stringstream ss(ck.config_text);
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    out->cfg.parse_line(line, path + " (embedded config):" + std::to_string(lineno));
  }
  int speakers = static_cast<int>(out->cfg.get_int("corpus.speakers"));
  out->model.init(ModelConfig::from_config(out->cfg, speakers));
  out->model.import_params(ck.params);
  return out;
}

const std::vector<int>& pick_split(const LoadedCorpus& lc, const std::string& split) {
  if (split == "train") return lc.split.train;
  if (split == "test") return lc.split.test;
  throw_error(ErrorCode::kInvalidArgument, "split must be 'train' or 'test', got: " + split);
}

}  // namespace

extern "C" {

struct lm_config {
  Config cfg;
};

const char* lm_version(void) { return "1.0.0"; }

const char* lm_last_error(void) { return t_last_error.c_str(); }

void lm_set_logger(lm_log_fn fn, void* user) {
  g_log_fn = fn;
  g_log_user = user;
}

const char* lm_status_name(lm_status status) {
  switch (status) {
    case LM_OK: return "ok";
    case LM_ERR_INVALID_ARGUMENT: return "invalid_argument";
    case LM_ERR_IO: return "io";
    case LM_ERR_PARSE: return "parse";
    case LM_ERR_DIMENSION: return "dimension";
    case LM_ERR_CAPACITY: return "capacity";
    case LM_ERR_INFEASIBLE: return "infeasible";
    case LM_ERR_INTERNAL: return "internal";
  }
  return "unknown";
}

lm_config* lm_config_create(void) { return new lm_config(); }

void lm_config_destroy(lm_config* cfg) { delete cfg; }

lm_status lm_config_load(lm_config* cfg, const char* path) {
  lm_status st = check_args({cfg, path});
  if (st != LM_OK) return st;
  return guarded([&] { cfg->cfg.load_file(path); });
}

lm_status lm_config_set(lm_config* cfg, const char* key, const char* value) {
  lm_status st = check_args({cfg, key, value});
  if (st != LM_OK) return st;
  return guarded([&] { cfg->cfg.set(key, value); });
}

const char* lm_config_get(const lm_config* cfg, const char* key) {
  if (cfg == nullptr || key == nullptr || !cfg->cfg.has_key(key)) return nullptr;
  t_get_buffer = cfg->cfg.get_string(key);
  return t_get_buffer.c_str();
}

lm_status lm_config_write(const lm_config* cfg, const char* path) {
  lm_status st = check_args({cfg, path});
  if (st != LM_OK) return st;
  return guarded([&] { cfg->cfg.write_file(path); });
}

lm_status lm_corpus_generate(const lm_config* cfg, const char* out_dir) {
  lm_status st = check_args({cfg, out_dir});
  if (st != LM_OK) return st;
  return guarded([&] {
    apply_threads(cfg->cfg);
    Corpus corpus = Corpus::generate(corpus_config_from(cfg->cfg));
    DatasetSplit split = split_from(cfg->cfg, corpus);
    write_corpus(corpus, split, out_dir);
    log_line("wrote " + std::to_string(corpus.samples.size()) + " track files under " +
             std::string(out_dir));
  });
}

lm_status lm_train(const lm_config* cfg, const char* corpus_dir, const char* out_dir) {
  lm_status st = check_args({cfg, corpus_dir, out_dir});
  if (st != LM_OK) return st;
  return guarded([&] {
    apply_threads(cfg->cfg);
    LoadedCorpus lc = load_corpus((fs::path(corpus_dir) / "manifest.tsv").string());
    LipModel model;
    model.init(ModelConfig::from_config(cfg->cfg, lc.corpus.config.speakers));
    Trainer trainer(model, TrainConfig::from_config(cfg->cfg), lc.corpus, lc.split);
    fs::create_directories(out_dir);
    cfg->cfg.write_file((fs::path(out_dir) / "config_used.cfg").string());
    uint64_t last = 0;
    trainer.on_step = [&](const StepMetrics& m) {
      if (m.step == 0 || m.step - last >= 50) {
        last = m.step;
        char buf[160];
        std::snprintf(buf, sizeof(buf),
                      "step %llu stage %d ctc %.3f ce %.3f id %.3f spk_acc %.2f",
                      static_cast<unsigned long long>(m.step), m.stage, m.l_ctc, m.l_ce, m.l_id,
                      m.spk_acc);
        log_line(buf);
      }
    };
    RunReport rep = trainer.run(out_dir, cfg->cfg.to_text());
    log_line("training finished after " + std::to_string(rep.steps) + " steps");
  });
}

lm_status lm_decode(const lm_config* cfg, const char* checkpoint_path, const char* corpus_dir,
                    const char* split, const char* out_path) {
  lm_status st = check_args({cfg, checkpoint_path, corpus_dir, split, out_path});
  if (st != LM_OK) return st;
  return guarded([&] {
    apply_threads(cfg->cfg);
    auto lm = model_from_checkpoint(checkpoint_path);
    LoadedCorpus lc = load_corpus((fs::path(corpus_dir) / "manifest.tsv").string());
    EvalReport report = evaluate_model(lm->model, lc.corpus, pick_split(lc, split),
                                       static_cast<int>(cfg->cfg.get_int("decode.beam_width")),
                                       static_cast<int>(cfg->cfg.get_int("decode.max_len")));
    write_decode_records(out_path, report);
  });
}

lm_status lm_evaluate(const lm_config* cfg, const char* checkpoint_path, const char* corpus_dir,
                      const char* split, const char* out_dir) {
  lm_status st = check_args({cfg, checkpoint_path, corpus_dir, split, out_dir});
  if (st != LM_OK) return st;
  return guarded([&] {
    apply_threads(cfg->cfg);
    auto lm = model_from_checkpoint(checkpoint_path);
    LoadedCorpus lc = load_corpus((fs::path(corpus_dir) / "manifest.tsv").string());
    EvalReport report = evaluate_model(lm->model, lc.corpus, pick_split(lc, split),
                                       static_cast<int>(cfg->cfg.get_int("decode.beam_width")),
                                       static_cast<int>(cfg->cfg.get_int("decode.max_len")));
    write_eval_report(out_dir, report);
    char buf[96];
    std::snprintf(buf, sizeof(buf), "corpus wer %.4f%% over %lld words", report.corpus.wer,
                  static_cast<long long>(report.corpus.ref_words));
    log_line(buf);
  });
}

lm_status lm_ablate(const lm_config* cfg, const char* corpus_dir, const char* out_dir) {
  lm_status st = check_args({cfg, corpus_dir, out_dir});
  if (st != LM_OK) return st;
  return guarded([&] {
    apply_threads(cfg->cfg);
    LoadedCorpus lc = load_corpus((fs::path(corpus_dir) / "manifest.tsv").string());
    fs::create_directories(out_dir);
    cfg->cfg.write_file((fs::path(out_dir) / "config_used.cfg").string());
    AblationReport report =
        run_ablation(cfg->cfg, lc.corpus, lc.split, out_dir, [](const std::string& s) {
          log_line(s);
        });
    log_line(format_ablation_table(report));
  });
}

lm_status lm_mi_benchmark(const lm_config* cfg, const char* out_path) {
  lm_status st = check_args({cfg});
  if (st != LM_OK) return st;
  return guarded([&] {
    apply_threads(cfg->cfg);
    MiBenchResult r = mi_benchmark(cfg->cfg.get_double("mi_bench.rho"),
                                   static_cast<int>(cfg->cfg.get_int("mi_bench.batch")),
                                   static_cast<int>(cfg->cfg.get_int("mi_bench.seeds")),
                                   static_cast<int>(cfg->cfg.get_int("mi_bench.fit_steps")),
                                   cfg->cfg.get_int("mi_bench.hidden"),
                                   cfg->cfg.get_double("train.mi_lr"));
    std::ostringstream os;
    char buf[128];
    std::snprintf(buf, sizeof(buf), "true_mi %.6f band [%.6f, %.6f]\n", r.true_mi, r.lo, r.hi);
    os << buf;
    for (size_t i = 0; i < r.estimates.size(); ++i) {
      std::snprintf(buf, sizeof(buf), "seed %zu estimate %.6f %s\n", i + 1, r.estimates[i],
                    (r.estimates[i] >= r.lo && r.estimates[i] <= r.hi) ? "in-band" : "OUT");
      os << buf;
    }
    os << (r.all_in_band ? "all seeds in band\n" : "BAND VIOLATION\n");
    if (out_path != nullptr) {
      std::ofstream out(out_path);
      LIPMARK_CHECK(out.good(), ErrorCode::kIo, std::string("cannot write ") + out_path);
      out << os.str();
    } else {
      std::cout << os.str();
    }
    log_line(r.all_in_band ? "mi benchmark: all seeds in band" : "mi benchmark: band violation");
    LIPMARK_CHECK(r.all_in_band, ErrorCode::kInternal,
                  "mi benchmark produced out-of-band estimates");
  });
}

lm_status lm_dump_attention(const lm_config* cfg, const char* checkpoint_path,
                            const char* corpus_dir, int sample_index, const char* out_dir) {
  lm_status st = check_args({cfg, checkpoint_path, corpus_dir, out_dir});
  if (st != LM_OK) return st;
  return guarded([&] {
    apply_threads(cfg->cfg);
    auto lm = model_from_checkpoint(checkpoint_path);
    LoadedCorpus lc = load_corpus((fs::path(corpus_dir) / "manifest.tsv").string());
    LIPMARK_CHECK(sample_index >= 0 &&
                      sample_index < static_cast<int>(lc.corpus.samples.size()),
                  ErrorCode::kInvalidArgument,
                  "sample index out of range: " + std::to_string(sample_index));
    dump_attention_csv(lm->model, lc.corpus.samples[static_cast<size_t>(sample_index)], out_dir);
  });
}

lm_status lm_selftest(const char* out_path) {
  return guarded([&] {
    bool ok;
    if (out_path != nullptr) {
      std::ofstream out(out_path);
      LIPMARK_CHECK(out.good(), ErrorCode::kIo, std::string("cannot write ") + out_path);
      ok = run_selftest(out);
    } else {
      ok = run_selftest(std::cout);
    }
    LIPMARK_CHECK(ok, ErrorCode::kInternal, "selftest failures (see report)");
  });
}

}  // extern "C"
