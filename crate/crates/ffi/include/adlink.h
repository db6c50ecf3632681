#ifndef ADLINK_H
#define ADLINK_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum AdlinkStatus {
  ADLINK_STATUS_OK = 0,
  ADLINK_STATUS_NULL_POINTER = 1,
  ADLINK_STATUS_INVALID_UTF8 = 2,
  ADLINK_STATUS_IO = 3,
  ADLINK_STATUS_FORMAT = 4,
  ADLINK_STATUS_INVALID_ARGUMENT = 5,
  ADLINK_STATUS_NUMERICAL = 6,
  ADLINK_STATUS_BUFFER_TOO_SMALL = 7,
  ADLINK_STATUS_PANIC = 8,
} AdlinkStatus;

/**
 * A mean-pooled sentence encoder bound to its vocabulary.
 */
typedef struct AdlinkEncoder AdlinkEncoder;

/**
 * A fitted TF-IDF model.
 */
typedef struct AdlinkTfidf AdlinkTfidf;

/**
 * A WordPiece vocabulary.
 */
typedef struct AdlinkVocab AdlinkVocab;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null after a
 * successful one. Valid until the next call into this library.
 */
const char *adlink_last_error(void);

/**
 * Library version as a static string.
 */
const char *adlink_version(void);

/**
 * Loads a vocabulary file (one token per line).
 *
 * # Safety
 * `path` must be a nul-terminated string and `out` writable.
 */
enum AdlinkStatus adlink_vocab_load(const char *path, struct AdlinkVocab **out);

/**
 * # Safety
 * `vocab` must come from [`adlink_vocab_load`] and `out` be writable.
 */
enum AdlinkStatus adlink_vocab_size(const struct AdlinkVocab *vocab, size_t *out);

/**
 * Encodes `text` into exactly `max_len` ids (`[CLS] ... [SEP]` then
 * padding). `attention` may be null; otherwise it receives `max_len`
 * mask bytes. `n_attended` may be null.
 *
 * # Safety
 * `ids` must hold `max_len` values, as must `attention` when non-null.
 */
enum AdlinkStatus adlink_vocab_encode(const struct AdlinkVocab *vocab,
                                      const char *text,
                                      size_t max_len,
                                      uint32_t *ids,
                                      uint8_t *attention,
                                      size_t *n_attended);

/**
 * # Safety
 * `vocab` must be null or come from [`adlink_vocab_load`], and not be
 * used afterwards.
 */
void adlink_vocab_free(struct AdlinkVocab *vocab);

/**
 * Loads a TF-IDF model saved as JSON.
 *
 * # Safety
 * `path` must be a nul-terminated string and `out` writable.
 */
enum AdlinkStatus adlink_tfidf_load(const char *path, struct AdlinkTfidf **out);

/**
 * Cosine similarity of the TF-IDF vectors of two texts.
 *
 * # Safety
 * Strings must be nul-terminated and `out` writable.
 */
enum AdlinkStatus adlink_tfidf_similarity(const struct AdlinkTfidf *model,
                                          const char *a,
                                          const char *b,
                                          double *out);

/**
 * # Safety
 * `model` must be null or come from [`adlink_tfidf_load`], and not be
 * used afterwards.
 */
void adlink_tfidf_free(struct AdlinkTfidf *model);

/**
 * Loads an encoder checkpoint. The checkpoint must have been trained with
 * `vocab`; the encoder keeps its own copy, so `vocab` may be freed.
 *
 * # Safety
 * `path` must be a nul-terminated string and `out` writable.
 */
enum AdlinkStatus adlink_encoder_load(const char *path,
                                      const struct AdlinkVocab *vocab,
                                      struct AdlinkEncoder **out);

/**
 * Embedding width.
 *
 * # Safety
 * `encoder` must come from [`adlink_encoder_load`] and `out` be writable.
 */
enum AdlinkStatus adlink_encoder_dim(const struct AdlinkEncoder *encoder, size_t *out);

/**
 * Writes the sentence embedding of `text` to `out`, which holds `len`
 * values. Fails with `ADLINK_STATUS_BUFFER_TOO_SMALL` when `len` is below
 * the embedding width.
 *
 * # Safety
 * `out` must hold `len` doubles.
 */
enum AdlinkStatus adlink_encoder_embed(const struct AdlinkEncoder *encoder,
                                       const char *text,
                                       double *out,
                                       size_t len);

/**
 * Cosine similarity of two sentence embeddings.
 *
 * # Safety
 * Strings must be nul-terminated and `out` writable.
 */
enum AdlinkStatus adlink_encoder_similarity(const struct AdlinkEncoder *encoder,
                                            const char *a,
                                            const char *b,
                                            double *out);

/**
 * # Safety
 * `encoder` must be null or come from [`adlink_encoder_load`], and not be
 * used afterwards.
 */
void adlink_encoder_free(struct AdlinkEncoder *encoder);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ADLINK_H */
