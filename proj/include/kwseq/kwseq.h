/* C interface to the KW-Seq2Seq library. All strings are UTF-8. Strings
 * returned through `char**` out-parameters are owned by the caller and must
 * be released with kwseq_string_free. On failure a function returns a
 * non-zero status and kwseq_last_error() describes the problem. */
#ifndef KWSEQ_H
#define KWSEQ_H

#ifdef __cplusplus
extern "C" {
#endif

#if defined(_WIN32)
#define KWSEQ_API __declspec(dllexport)
#else
#define KWSEQ_API __attribute__((visibility("default")))
#endif

typedef enum kwseq_status {
  KWSEQ_OK = 0,
  KWSEQ_ERR_INVALID_ARGUMENT = 1,
  KWSEQ_ERR_IO = 2,
  KWSEQ_ERR_SHAPE = 3,
  KWSEQ_ERR_NUMERIC = 4,
  KWSEQ_ERR_INTERNAL = 5
} kwseq_status;

typedef struct kwseq_model kwseq_model;

/* Called after every optimizer step with one JSON log row. */
typedef void (*kwseq_progress_fn)(const char* row_json, void* user_data);

KWSEQ_API const char* kwseq_version(void);
/* Message of the last failure on the calling thread ("" if none). */
KWSEQ_API const char* kwseq_last_error(void);
KWSEQ_API void kwseq_string_free(char* s);

/* config_json: {"recipe": "overfit"?, "model": {...}, "train": {...}}; may be
 * NULL. Writes metrics.csv and checkpoint/ under out_dir. `summary_json`
 * may be NULL. */
KWSEQ_API kwseq_status kwseq_train(const char* corpus_path, const char* config_json,
                                   const char* out_dir, kwseq_progress_fn progress,
                                   void* user_data, char** summary_json);

KWSEQ_API kwseq_status kwseq_model_open(const char* checkpoint_dir, kwseq_model** out);
KWSEQ_API void kwseq_model_close(kwseq_model* model);
/* The /healthz document. */
KWSEQ_API kwseq_status kwseq_model_info(const kwseq_model* model, char** info_json);

/* request_json uses the /chat request schema; result uses the /chat reply
 * schema. A rejected request returns KWSEQ_ERR_INVALID_ARGUMENT. */
KWSEQ_API kwseq_status kwseq_generate(const kwseq_model* model, const char* request_json,
                                      char** result_json);

/* options_json: {"mode": "generated-keywords" | "ground-truth-keywords",
 * "vectors": path?, "predictions": path?, "report": path?,
 * "keyword_ratio": number?}. The result holds "report" and "table". */
KWSEQ_API kwseq_status kwseq_evaluate(const kwseq_model* model, const char* dataset_path,
                                      const char* options_json, char** result_json);

/* Routes one HTTP request; always yields a status and a JSON body. */
KWSEQ_API kwseq_status kwseq_handle_http(const kwseq_model* model, const char* method,
                                         const char* path, const char* content_type,
                                         const char* body, int* http_status,
                                         char** response_body);

#ifdef __cplusplus
}
#endif

#endif /* KWSEQ_H */
