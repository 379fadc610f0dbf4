/* Copyright (c) 2026, The coqg Authors
 * SPDX-License-Identifier: Apache-2.0
 *
 * C interface to the coqg library: experiment protocols, metric scoring,
 * vocabulary handling and inference with trained checkpoints.
 *
 * Every function returns a coqg_status. On failure a thread-local message
 * is available from coqg_last_error_message() until the next call on the
 * same thread. Strings returned through char** out-parameters are owned by
 * the caller and released with coqg_string_free().
 */
#ifndef COQG_COQG_H
#define COQG_COQG_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  if defined(COQG_BUILDING_LIBRARY)
#    define COQG_API __declspec(dllexport)
#  else
#    define COQG_API __declspec(dllimport)
#  endif
#else
#  define COQG_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum coqg_status {
    COQG_OK = 0,
    COQG_INVALID_ARGUMENT = 1,
    COQG_DIMENSION = 2,
    COQG_NUMERIC = 3,
    COQG_IO = 4,
    COQG_FORMAT = 5,
    COQG_INVARIANT = 6,
    COQG_INTERNAL = 7
} coqg_status;

typedef struct coqg_vocab coqg_vocab;
typedef struct coqg_decoder coqg_decoder;
typedef struct coqg_qa coqg_qa;

COQG_API const char* coqg_version_string(void);
COQG_API const char* coqg_last_error_message(void);
COQG_API const char* coqg_status_name(coqg_status status);
COQG_API void coqg_string_free(char* s);

/* Experiment protocols. protocol is one of pretrain, collab, generate,
 * surrogate, semisup, ablation, metrics, synth-data. Any field may be NULL
 * or unset; set fields override the config document. */
typedef struct coqg_run_options {
    const char* config_json; /* JSON config document, NULL for defaults */
    const char* out_dir;
    const char* corpus_path;
    uint64_t seed;
    int has_seed;
} coqg_run_options;

/* Writes the resolved config (JSON) without running anything. */
COQG_API coqg_status coqg_resolve_config(const char* protocol, const coqg_run_options* options, char** resolved_json);
COQG_API coqg_status coqg_run_protocol(const char* protocol, const coqg_run_options* options, char** report_json);

/* Scores line-delimited pairs, each {"generated","gold"} or
 * {"predicted","gold"|"golds"}; returns the metric report JSON. */
COQG_API coqg_status coqg_metrics_evaluate(const char* pairs_jsonl, char** report_json);

COQG_API coqg_status coqg_vocab_load(const char* path, coqg_vocab** out);
COQG_API void coqg_vocab_free(coqg_vocab* vocab);
COQG_API size_t coqg_vocab_size(const coqg_vocab* vocab);
/* Writes up to capacity ids; *count receives the full token count. */
COQG_API coqg_status coqg_vocab_encode(const coqg_vocab* vocab, const char* text, uint32_t* ids, size_t capacity,
                                       size_t* count);

COQG_API coqg_status coqg_decoder_load(const char* path, coqg_decoder** out);
COQG_API void coqg_decoder_free(coqg_decoder* decoder);
/* Generates a question for the answer occupying context words
 * [answer_start, answer_end]. k = 1 is greedy. */
COQG_API coqg_status coqg_generate_question(const coqg_decoder* decoder, const coqg_vocab* vocab, const char* context,
                                            size_t answer_start, size_t answer_end, size_t k, uint64_t seed,
                                            char** question);

COQG_API coqg_status coqg_qa_load(const char* path, coqg_qa** out);
COQG_API void coqg_qa_free(coqg_qa* qa);
/* Predicted answer as context word indices plus its text. */
COQG_API coqg_status coqg_answer_question(const coqg_qa* qa, const coqg_vocab* vocab, const char* context,
                                          const char* question, size_t* start, size_t* end, char** answer);

/* FNV-1a hash over parameter names, shapes and values of a checkpoint. */
COQG_API coqg_status coqg_checkpoint_hash(const char* path, uint64_t* hash);

#ifdef __cplusplus
}
#endif

#endif /* COQG_COQG_H */
