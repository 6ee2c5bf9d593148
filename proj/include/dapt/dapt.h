/* dapt - domain-adaptive post-training pipeline, C interface.
 *
 * All functions are thread-compatible: distinct handles may be used from
 * distinct threads, but a single handle must not be shared without external
 * synchronization. Error messages are per-thread; after any call returns a
 * nonzero status, dapt_last_error() describes the failure until the next
 * failing call on the same thread.
 *
 * Buffers returned through out-parameters are heap-allocated by the library
 * and must be released with dapt_free(). Strings returned directly (version,
 * last error) are owned by the library and must not be freed.
 */
#ifndef DAPT_H
#define DAPT_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum dapt_status {
  DAPT_OK = 0,
  DAPT_ERR_USAGE = 1,    /* bad arguments to the API itself (null handle, ...) */
  DAPT_ERR_CONFIG = 2,   /* invalid configuration or option values */
  DAPT_ERR_DATA = 3,     /* unreadable / malformed / missing input artifacts */
  DAPT_ERR_INTERNAL = 4, /* invariant violation inside the library */
} dapt_status;

/* Library semantic version, e.g. "0.1.0". Static storage; do not free. */
const char* dapt_version(void);

/* Message for the most recent failure on the calling thread, or "" if none.
 * Thread-local storage; do not free. */
const char* dapt_last_error(void);

/* Releases any buffer returned through an out-parameter. NULL is a no-op. */
void dapt_free(void* ptr);

/* ---- pipeline context ------------------------------------------------- */

/* A context holds layered settings (defaults < config file < explicit
 * options) and runs pipeline commands against them. */
typedef struct dapt_context dapt_context;

/* Receives command output incrementally. `text` is not NUL-terminated and is
 * only valid for the duration of the call. */
typedef void (*dapt_write_fn)(const char* text, size_t len, void* user_data);

/* Creates a context with built-in defaults. If the environment variable
 * DAPT_OUT_DIR is set, it seeds the default output directory (a config file
 * or explicit option still overrides it). */
dapt_status dapt_context_create(dapt_context** out_ctx);
void dapt_context_destroy(dapt_context* ctx);

/* Loads a sectioned key=value config file into the middle settings layer.
 * Replaces any previously loaded file. */
dapt_status dapt_context_load_config(dapt_context* ctx, const char* path);

/* Sets one option in the top (highest-precedence) layer. `dotted_key` is
 * "section.key", e.g. "posttrain.epochs". */
dapt_status dapt_context_set_option(dapt_context* ctx, const char* dotted_key,
                                    const char* value);

/* Routes command output to `fn` (NULL restores the default, stdout). */
dapt_status dapt_context_set_writer(dapt_context* ctx, dapt_write_fn fn,
                                    void* user_data);

/* Runs one pipeline command: clean-corpus, train-tokenizer, pretrain,
 * posttrain, finetune, sweep, evaluate, report, or stats. Unknown settings
 * keys are rejected. On success a run manifest is written into the output
 * directory. */
dapt_status dapt_context_run(dapt_context* ctx, const char* command);

/* Newline-separated list of recognized commands. Free with dapt_free(). */
dapt_status dapt_commands(char** out_text);

/* ---- vocabulary ------------------------------------------------------- */

typedef struct dapt_vocab dapt_vocab;

dapt_status dapt_vocab_open(const char* path, dapt_vocab** out_vocab);
void dapt_vocab_close(dapt_vocab* vocab);

/* Number of tokens, or -1 if `vocab` is NULL. */
int32_t dapt_vocab_size(const dapt_vocab* vocab);

/* Segments `text` into a fixed-length id sequence with [CLS]/[SEP] framing
 * and [PAD] fill. `*out_ids` receives exactly `max_len` ids (free with
 * dapt_free); `*out_live_len` receives the count before padding. */
dapt_status dapt_vocab_encode(const dapt_vocab* vocab, const char* text,
                              int32_t max_len, int32_t** out_ids,
                              int32_t* out_live_len);

/* Reassembles text from ids, dropping special tokens and merging
 * continuation pieces. Free `*out_text` with dapt_free(). */
dapt_status dapt_vocab_decode(const dapt_vocab* vocab, const int32_t* ids,
                              int32_t count, char** out_text);

/* ---- model checkpoints ------------------------------------------------ */

typedef struct dapt_model dapt_model;

/* Opens a checkpoint file and reconstructs the model (architecture check
 * included). */
dapt_status dapt_model_open(const char* path, dapt_model** out_model);
void dapt_model_close(dapt_model* model);

/* Total trainable parameter count, or -1 if `model` is NULL. */
int64_t dapt_model_parameter_count(const dapt_model* model);

/* Architecture description as "key=value" lines. Free with dapt_free(). */
dapt_status dapt_model_describe(const dapt_model* model, char** out_text);

#ifdef __cplusplus
}
#endif

#endif /* DAPT_H */
