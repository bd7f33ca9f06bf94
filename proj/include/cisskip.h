/* cisskip — reconfigurable CMOS image sensor skipping simulator.
 *
 * C API for the shared library. All functions return csk_status; on any
 * failure csk_last_error() holds a thread-local message describing it.
 * Handles are opaque and freed with their matching *_free function.
 */
#ifndef CISSKIP_H
#define CISSKIP_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define CSK_API __declspec(dllexport)
#else
#define CSK_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum csk_status {
  CSK_OK = 0,
  CSK_ERR_USAGE = 1,   /* bad arguments, shapes, ranges, states, paths */
  CSK_ERR_FORMAT = 2,  /* malformed files or serialized data */
  CSK_ERR_NUMERIC = 3, /* non-finite values */
} csk_status;

typedef enum csk_mode {
  CSK_MODE_STANDARD = 0,
  CSK_MODE_ROW_SKIP = 1,
  CSK_MODE_REGION_SKIP = 2,
} csk_mode;

CSK_API const char* csk_version(void);

/* Message for the calling thread's most recent failure ("" if none). */
CSK_API const char* csk_last_error(void);

/* ---- pipeline -------------------------------------------------------- */

/* Runs one pipeline command (gen, train, mask, simulate, energy, sweep,
 * calibrate) with the given JSON configuration document. On success,
 * *summary_json receives a malloc'd JSON summary string; release it with
 * csk_string_free. */
CSK_API csk_status csk_run(const char* verb, const char* config_json, char** summary_json);

CSK_API void csk_string_free(char* s);

/* ---- mask generator network ------------------------------------------ */

typedef struct csk_mgn csk_mgn; /* opaque */

typedef struct csk_mgn_config {
  int32_t input_h;
  int32_t input_w;
  int32_t channels;
  int32_t patch;
  int32_t embed_dim;
  int32_t heads;
  int32_t ffn_dim;
} csk_mgn_config;

CSK_API csk_status csk_mgn_create(const csk_mgn_config* config, uint64_t seed, csk_mgn** out);
CSK_API csk_status csk_mgn_load(const char* path, csk_mgn** out);
CSK_API csk_status csk_mgn_save(const csk_mgn* mgn, const char* path);
CSK_API void csk_mgn_free(csk_mgn* mgn);

CSK_API csk_status csk_mgn_get_config(const csk_mgn* mgn, csk_mgn_config* out);
CSK_API int64_t csk_mgn_param_count(const csk_mgn* mgn);
CSK_API int64_t csk_mgn_flop_estimate(const csk_mgn* mgn);

/* Scores one image. `image` holds channels*input_h*input_w doubles in
 * [0, 1], channel-planar row-major. `scores` receives
 * (input_h/patch)*(input_w/patch) sigmoid scores. */
CSK_API csk_status csk_mgn_score(const csk_mgn* mgn, const double* image, int64_t image_len,
                                 double* scores, int64_t scores_len);

/* ---- masking ---------------------------------------------------------- */

/* bits = 1 where score > t_reg; arrays are gh*gw, row-major. */
CSK_API csk_status csk_region_mask(const double* scores, int32_t gh, int32_t gw, double t_reg,
                                   uint8_t* bits);

/* Region-grid row activity: active iff the active fraction exceeds t_row. */
CSK_API csk_status csk_row_activity(const uint8_t* region_bits, int32_t gh, int32_t gw,
                                    double t_row, uint8_t* row_bits);

/* Nearest-neighbor mapping onto the (rows/p_s) x (cols/p_s) sensor grid. */
CSK_API csk_status csk_map_to_sensor(const uint8_t* bits, int32_t gh, int32_t gw,
                                     int32_t sensor_rows, int32_t sensor_cols, int32_t p_s,
                                     uint8_t* out_bits);

/* Two-class mean IoU of binary grids of n cells. */
CSK_API csk_status csk_miou(const uint8_t* pred, const uint8_t* gt, int64_t n, double* out);

/* ---- sensor ------------------------------------------------------------ */

typedef struct csk_sensor_config {
  int32_t rows;
  int32_t cols;
  int32_t bit_depth; /* 8 or 10 */
  int32_t patch;     /* region patch side */
  int32_t mode;      /* csk_mode */
} csk_sensor_config;

typedef struct csk_ledger {
  int64_t n_rows_driven;
  int64_t n_rows_ramp_active;
  int64_t n_rows_fully_gated;
  int64_t n_px_read;
  int64_t n_px_skip_in_active_row;
  int64_t n_px_skip_in_gated_row;
  int64_t n_adc_clock_cycles;
} csk_ledger;

/* Reads one frame (rows*cols doubles in [0,1)) under the configured mode.
 * row_mask (rows bits) and region_mask ((rows/patch)*(cols/patch) bits) may
 * be NULL for all-ones. codes receives rows*cols N-bit values; skipped
 * pixels are 0. ledger may be NULL. */
CSK_API csk_status csk_sensor_read(const csk_sensor_config* config, const double* frame,
                                   const uint8_t* row_mask, const uint8_t* region_mask,
                                   uint16_t* codes, csk_ledger* ledger);

/* ---- energy model ------------------------------------------------------ */

typedef struct csk_energy_params {
  double e_sense_r, e_adc_r;           /* per conventional pixel read */
  double e_sense_s_row, e_adc_s_row;   /* per pixel in a fully gated row */
  double e_sense_s_reg, e_adc_s_reg;   /* per gated pixel in an active row */
  double e_mem_frac, e_com_frac, e_mgn_frac; /* fractions of a full-frame read */
} csk_energy_params;

CSK_API void csk_energy_params_default(csk_energy_params* out);

/* Masked-frame energy from a readout ledger, in pixel-read units. */
CSK_API csk_status csk_mode_energy(const csk_ledger* ledger, const csk_energy_params* params,
                                   int32_t mode, double* out);

/* (e_base + e_mem + (P-1) * e_mode) / P + e_mgn. */
CSK_API csk_status csk_average_energy(double e_base, double e_mem, double e_mode, int32_t period,
                                      double e_mgn, double* out);

/* Closed-form energy at a skip ratio, normalized to the standard baseline. */
CSK_API csk_status csk_normalized_energy(double skip_ratio, int32_t mode, int32_t period,
                                         const csk_energy_params* params, double* out);

#ifdef __cplusplus
}
#endif

#endif /* CISSKIP_H */
