/* C interface to the reconstruction toolkit.
 *
 * All functions return BDGD_OK (0) on success or a nonzero status code; the
 * message for the most recent failure on the calling thread is available via
 * bdgd_last_error(). Configuration lives behind an opaque handle populated
 * from key=value settings or a config file; the run functions execute the
 * pipeline stages against it, writing artifacts under the configured output
 * directory and progress lines to stdout.
 */
#ifndef BDGD_H
#define BDGD_H

#include <stddef.h>

#if defined(_WIN32)
#define BDGD_API __declspec(dllexport)
#else
#define BDGD_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

enum {
    BDGD_OK = 0,
    BDGD_ERR_INVALID_ARGUMENT = 1,
    BDGD_ERR_RUNTIME = 2
};

/* Message for the most recent failure on this thread; empty string if none. */
BDGD_API const char* bdgd_last_error(void);

/* Opaque experiment configuration. */
typedef struct bdgd_config bdgd_config;

/* Fresh configuration holding the desk-scale defaults; NULL on allocation
 * failure. Destroy with bdgd_config_destroy (NULL is a no-op). */
BDGD_API bdgd_config* bdgd_config_create(void);
BDGD_API void bdgd_config_destroy(bdgd_config* cfg);

/* Applies one key=value setting. Keys: image_size, num_dirs, angle_start,
 * angle_end, train_count, test_count, noise_level, method, num_blocks,
 * epochs, batch_size, lr, mc_samples, tv_lambda, seed, out_dir. */
BDGD_API int bdgd_config_set(bdgd_config* cfg, const char* key,
                             const char* value);

/* Replaces the configuration with the contents of a key=value file. */
BDGD_API int bdgd_config_load(bdgd_config* cfg, const char* path);

/* Writes the resolved configuration as key=value text. */
BDGD_API int bdgd_config_save(const bdgd_config* cfg, const char* path);

/* Pipeline stages. See the configured out_dir for the artifacts each one
 * produces; prerequisites missing on disk yield BDGD_ERR_RUNTIME with a
 * message naming the absent artifact. */
BDGD_API int bdgd_generate_data(const bdgd_config* cfg);
BDGD_API int bdgd_train(const bdgd_config* cfg);
BDGD_API int bdgd_reconstruct(const bdgd_config* cfg);

/* Scores every method with stored reconstructions and writes results.txt and
 * results.csv. When table is non-NULL, copies the text table into it
 * (NUL-terminated, truncated to table_size). */
BDGD_API int bdgd_evaluate(const bdgd_config* cfg, char* table,
                           size_t table_size);

/* Writes predictive mean / epistemic / aleatoric / total maps for one test
 * sample, or for the out-of-distribution probe when sample_index < 0. */
BDGD_API int bdgd_decompose(const bdgd_config* cfg, int sample_index);

/* Peak signal-to-noise ratio in dB between two buffers of n_pixels values;
 * identical buffers return the 200 dB cap. */
BDGD_API int bdgd_psnr(const double* x, const double* ref, int n_pixels,
                       double peak, double* out_db);

#ifdef __cplusplus
}
#endif

#endif /* BDGD_H */
