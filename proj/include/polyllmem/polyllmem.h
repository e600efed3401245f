/* Copyright (c) 2026, PolyLLMem developers
 * SPDX-License-Identifier: Apache-2.0
 *
 * C interface to the PolyLLMem library.
 *
 * Every function returns a plm_status. On failure, plm_last_error() returns a
 * message for the calling thread. Strings returned through `char**` outputs
 * are owned by the caller and released with plm_string_free(). Handles are
 * released with their matching *_free function; passing NULL is allowed.
 */
#ifndef POLYLLMEM_H
#define POLYLLMEM_H

#include <stddef.h>
#include <stdint.h>

#if defined(POLYLLMEM_BUILDING_LIBRARY)
#define PLM_API __attribute__((visibility("default")))
#else
#define PLM_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum plm_status {
    PLM_OK = 0,
    PLM_INVALID_ARGUMENT,
    PLM_IO,
    PLM_BAD_MAGIC,
    PLM_VERSION_MISMATCH,
    PLM_TRUNCATED,
    PLM_TRAILING_BYTES,
    PLM_NON_FINITE,
    PLM_SHAPE_MISMATCH,
    PLM_DUPLICATE_ID,
    PLM_INVALID_PSMILES,
    PLM_LEXING,
    PLM_ALIGNMENT_MISMATCH,
    PLM_NONPOSITIVE_LOG_INPUT,
    PLM_ZERO_VARIANCE,
    PLM_ZERO_REFERENCE,
    PLM_MISSING_EMBEDDING,
    PLM_MISSING_COLUMN,
    PLM_DEGENERATE_FOLD,
    PLM_EMPTY_INPUT,
    PLM_SINGULAR,
    PLM_NUMERICAL,
    PLM_INTERNAL
} plm_status;

typedef enum plm_modality { PLM_MODALITY_TEXT = 0, PLM_MODALITY_STRUCTURE = 1 } plm_modality;

typedef struct plm_dataset plm_dataset;
typedef struct plm_embeddings plm_embeddings;
typedef struct plm_token_embeddings plm_token_embeddings;
typedef struct plm_model plm_model;

PLM_API const char* plm_version(void);
PLM_API const char* plm_last_error(void);
/* Stable upper-case identifier such as "BAD_MAGIC". */
PLM_API const char* plm_status_name(plm_status status);
/* Process exit code: 0 success, 1 usage error, 2 data error, 3 numerical failure. */
PLM_API int plm_exit_code(plm_status status);
PLM_API void plm_string_free(char* s);

/* PSMILES */
PLM_API plm_status plm_psmiles_cap(const char* psmiles, char** out);
/* JSON array of {"text","begin","end","kind"}. */
PLM_API plm_status plm_psmiles_tokenize(const char* psmiles, char** out_json);
/* JSON array of {"offset","message"}; empty when valid. */
PLM_API plm_status plm_psmiles_validate(const char* psmiles, char** out_json);
/* Both arguments are JSON arrays of token strings; returns the merge map as JSON. */
PLM_API plm_status plm_merge_map(const char* raw_tokens_json, const char* target_tokens_json, char** out_json);

/* Datasets (CSV or JSON-lines, chosen by content). Warnings are a JSON array of strings. */
PLM_API plm_status plm_dataset_load(const char* path, plm_dataset** out, char** warnings_json);
PLM_API plm_status plm_dataset_write_jsonl(const plm_dataset* dataset, const char* path);
PLM_API plm_status plm_dataset_jsonl(const plm_dataset* dataset, char** out);
PLM_API plm_status plm_dataset_summary(const plm_dataset* dataset, char** out_json);
PLM_API size_t plm_dataset_size(const plm_dataset* dataset);
PLM_API void plm_dataset_free(plm_dataset* dataset);
/* Split of the records carrying `property` (all records when NULL). */
PLM_API plm_status plm_split(const plm_dataset* dataset, const char* property, uint64_t seed, char** out_json);

/* Pooled embeddings (PLYE) */
PLM_API plm_status plm_embeddings_read(const char* path, plm_embeddings** out);
PLM_API plm_status plm_embeddings_write(const plm_embeddings* embeddings, const char* path);
PLM_API plm_status plm_embeddings_info(const plm_embeddings* embeddings, char** out_json);
PLM_API void plm_embeddings_free(plm_embeddings* embeddings);
/* plant_k = 0 disables planted features. */
PLM_API plm_status plm_embeddings_synth(const plm_dataset* dataset, plm_modality modality, uint32_t dim,
                                        uint64_t seed, uint32_t plant_k, const char* source_tag,
                                        plm_embeddings** out);

/* Token-level embeddings (PLYT) */
PLM_API plm_status plm_tokens_read(const char* path, plm_token_embeddings** out);
PLM_API plm_status plm_tokens_write(const plm_token_embeddings* tokens, const char* path);
PLM_API plm_status plm_tokens_info(const plm_token_embeddings* tokens, char** out_json);
PLM_API void plm_tokens_free(plm_token_embeddings* tokens);
PLM_API plm_status plm_tokens_synth(const plm_dataset* dataset, uint32_t dim, uint64_t seed, uint32_t plant_k,
                                    const char* source_tag, plm_token_embeddings** out);

/* Validates a PLYE or PLYT file; the JSON report names the kind and metadata. */
PLM_API plm_status plm_embed_validate(const char* path, char** out_json);

/* Training. `config_json` may be NULL for defaults. `checkpoint_dir` may be NULL. */
PLM_API plm_status plm_train(const plm_dataset* dataset, const plm_embeddings* llm, const plm_embeddings* uni,
                             const char* property, const char* config_json, size_t threads,
                             const char* checkpoint_dir, char** report_json);
PLM_API plm_status plm_gridsearch(const plm_dataset* dataset, const plm_embeddings* llm, const plm_embeddings* uni,
                                  const char* property, const char* grid_json, size_t threads,
                                  char** result_json);
/* `lambdas_json` is a JSON array of penalties or NULL for the default ladder. */
PLM_API plm_status plm_baseline_ridge(const plm_dataset* dataset, const plm_embeddings* llm,
                                      const plm_embeddings* uni, const char* property, uint64_t seed,
                                      const char* lambdas_json, char** report_json);

/* Reports */
PLM_API plm_status plm_report_csv(const char* report_json, char** out_csv);
PLM_API plm_status plm_report_merge(const char* const* report_jsons, size_t count, char** out_csv);

/* Checkpoints */
PLM_API plm_status plm_model_load(const char* path, plm_model** out);
PLM_API plm_status plm_model_info(const plm_model* model, char** out_json);
PLM_API void plm_model_free(plm_model* model);
/* Predictions in original units for every id present in both embedding sets. */
PLM_API plm_status plm_model_predict(const plm_model* model, const plm_embeddings* llm, const plm_embeddings* uni,
                                     char** out_json);
/* Metrics over the dataset records that carry the checkpoint's property. */
PLM_API plm_status plm_model_evaluate(const plm_model* model, const plm_dataset* dataset,
                                      const plm_embeddings* llm, const plm_embeddings* uni, char** out_json);

/* Attribution and analysis. `polymer_id` NULL means every record. `merge_dataset`
 * may be NULL; when given, token scores are merged onto the tokens of each
 * record's PSMILES. */
PLM_API plm_status plm_attribute(const plm_model* model, const plm_token_embeddings* tokens,
                                 const plm_embeddings* uni, const char* polymer_id, size_t steps,
                                 const plm_dataset* merge_dataset, size_t threads, char** out_json);
PLM_API plm_status plm_similarity(const plm_token_embeddings* tokens, const char* polymer_id, double threshold,
                                  char** out_json);
PLM_API plm_status plm_pca(const plm_embeddings* embeddings, size_t k, char** out_json);

#ifdef __cplusplus
}
#endif

#endif /* POLYLLMEM_H */
