#ifndef KUZDIFF_H
#define KUZDIFF_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every FFI entry point.
 */
typedef enum KzStatus {
  Ok = 0,
  NullPointer = 1,
  BadKey = 2,
  BadRounds = 3,
  NotAPermutation = 4,
  BadConfig = 5,
  Internal = 6,
} KzStatus;

/**
 * Opaque handle owning a key schedule.
 */
typedef struct KzCipher KzCipher;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Create a cipher handle from a 32-byte master key.
 *
 * # Safety
 * `key` must point to 32 readable bytes; `out` must be a valid pointer.
 */
enum KzStatus kz_cipher_new(const uint8_t *key, struct KzCipher **out);

/**
 * Release a cipher handle. Passing null is a no-op.
 *
 * # Safety
 * `handle` must be null or a pointer obtained from [`kz_cipher_new`].
 */
void kz_cipher_free(struct KzCipher *handle);

/**
 * Encrypt one 16-byte block with the given number of rounds (1..=9).
 *
 * # Safety
 * `input` must point to 16 readable bytes, `output` to 16 writable bytes.
 */
enum KzStatus kz_encrypt(const struct KzCipher *handle,
                         uint32_t rounds,
                         const uint8_t *input,
                         uint8_t *output);

/**
 * Decrypt one 16-byte block with the given number of rounds (1..=9).
 *
 * # Safety
 * `input` must point to 16 readable bytes, `output` to 16 writable bytes.
 */
enum KzStatus kz_decrypt(const struct KzCipher *handle,
                         uint32_t rounds,
                         const uint8_t *input,
                         uint8_t *output);

/**
 * Exhaustive inner c-differential uniformity spectrum of a 256-entry
 * permutation; writes 255 values (c = 1..=255) to `out`.
 *
 * # Safety
 * `table` must point to 256 readable bytes, `out` to 255 writable u32s.
 */
enum KzStatus kz_inner_spectrum(const uint8_t *table, uint32_t *out);

/**
 * Exhaustive outer c-differential uniformity spectrum; same layout as
 * [`kz_inner_spectrum`].
 *
 * # Safety
 * `table` must point to 256 readable bytes, `out` to 255 writable u32s.
 */
enum KzStatus kz_outer_spectrum(const uint8_t *table, uint32_t *out);

/**
 * Run a full sampling + analysis pipeline.
 *
 * `config_json` is a serialized experiment configuration (the same schema the
 * CLI consumes); the result document is returned as a JSON string in `out`,
 * to be released with [`kz_string_free`].
 *
 * # Safety
 * `config_json` must be a valid NUL-terminated string; `out` a valid pointer.
 */
enum KzStatus kz_analyze_json(const char *config_json, uint32_t workers, char **out);

/**
 * Release a string returned by this library. Passing null is a no-op.
 *
 * # Safety
 * `s` must be null or a pointer returned by [`kz_analyze_json`].
 */
void kz_string_free(char *s);

/**
 * Library version as a static NUL-terminated string; do not free.
 */
const char *kz_version(void);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* KUZDIFF_H */
