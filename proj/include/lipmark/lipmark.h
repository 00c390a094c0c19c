/* Copyright 2026 The Lipmark Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

/* C API for the lipmark cross-speaker lip reading toolkit.
 *
 * Every entry point returns lm_status (LM_OK on success); lm_last_error()
 * yields a thread-local description of the most recent failure. Handles are
 * opaque and must be released with their destroy function.
 */

#ifndef LIPMARK_LIPMARK_H_
#define LIPMARK_LIPMARK_H_

#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum lm_status {
  LM_OK = 0,
  LM_ERR_INVALID_ARGUMENT = 1,
  LM_ERR_IO = 2,
  LM_ERR_PARSE = 3,
  LM_ERR_DIMENSION = 4,
  LM_ERR_CAPACITY = 5,
  LM_ERR_INFEASIBLE = 6,
  LM_ERR_INTERNAL = 7
} lm_status;

const char* lm_status_name(lm_status status);
const char* lm_version(void);

/* Description of the most recent error on this thread ("" if none). */
const char* lm_last_error(void);

/* Optional line-oriented progress logger (pass fn=NULL to disable). */
typedef void (*lm_log_fn)(const char* line, void* user);
void lm_set_logger(lm_log_fn fn, void* user);

/* ---- configuration ---- */

typedef struct lm_config lm_config;

lm_config* lm_config_create(void);                       /* built-in defaults */
void lm_config_destroy(lm_config* cfg);
lm_status lm_config_load(lm_config* cfg, const char* path);
lm_status lm_config_set(lm_config* cfg, const char* key, const char* value);
/* Returns NULL for unknown keys; the string lives until the next call. */
const char* lm_config_get(const lm_config* cfg, const char* key);
lm_status lm_config_write(const lm_config* cfg, const char* path);

/* ---- corpus ---- */

/* Generates the synthetic corpus (landmark-track files plus manifest)
 * under out_dir according to cfg. */
lm_status lm_corpus_generate(const lm_config* cfg, const char* out_dir);

/* ---- pipeline operations (file-to-file) ---- */

lm_status lm_train(const lm_config* cfg, const char* corpus_dir, const char* out_dir);
lm_status lm_decode(const lm_config* cfg, const char* checkpoint_path, const char* corpus_dir,
                    const char* split, const char* out_path);
lm_status lm_evaluate(const lm_config* cfg, const char* checkpoint_path, const char* corpus_dir,
                      const char* split, const char* out_dir);
lm_status lm_ablate(const lm_config* cfg, const char* corpus_dir, const char* out_dir);
lm_status lm_mi_benchmark(const lm_config* cfg, const char* out_path);
lm_status lm_dump_attention(const lm_config* cfg, const char* checkpoint_path,
                            const char* corpus_dir, int sample_index, const char* out_dir);

/* Runs the built-in numeric self-checks; writes one pass/fail line per check
 * to out_path (or stdout when NULL). Fails if any check fails. */
lm_status lm_selftest(const char* out_path);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* LIPMARK_LIPMARK_H_ */
