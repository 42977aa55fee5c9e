#ifndef VFPP_VFPP_H
#define VFPP_VFPP_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#if defined(VFPP_BUILDING)
#define VFPP_API __declspec(dllexport)
#else
#define VFPP_API __declspec(dllimport)
#endif
#else
#define VFPP_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

/* Values match the library's internal error codes. */
typedef enum vfpp_status {
  VFPP_OK = 0,
  VFPP_ERR_INVALID_ARGUMENT = 1,
  VFPP_ERR_POINT_AT_INFINITY = 2,
  VFPP_ERR_RANK_DEFICIENT = 3,
  VFPP_ERR_DIMENSION_MISMATCH = 4,
  VFPP_ERR_FRAME_COUNT_MISMATCH = 5,
  VFPP_ERR_PATTERN_EXCEEDS_PLANE = 6,
  VFPP_ERR_GRID_NOT_FOUND = 7,
  VFPP_ERR_AMBIGUOUS_ORIENTATION = 8,
  VFPP_ERR_CENTER_MASKED = 9,
  VFPP_ERR_DEGENERATE_CONFIGURATION = 10,
  VFPP_ERR_NON_CONVERGENCE = 11,
  VFPP_ERR_INCONSISTENT_POSE_COUNT = 12,
  VFPP_ERR_SINGULAR_GEOMETRY = 13,
  VFPP_ERR_EMPTY_MASK = 14,
  VFPP_ERR_DEGENERATE_CORRESPONDENCES = 15,
  VFPP_ERR_NO_VALID_MODEL = 16,
  VFPP_ERR_IO = 17,
  VFPP_ERR_CONFIG = 18,
  VFPP_ERR_THRESHOLD_EXCEEDED = 19,
  VFPP_ERR_INTERNAL = 100
} vfpp_status;

VFPP_API const char* vfpp_version(void);
VFPP_API const char* vfpp_status_name(vfpp_status status);
/* Message of the last failed call on this thread ("" after success). */
VFPP_API const char* vfpp_last_error(void);
/* Caps worker threads; 0 restores the hardware default. */
VFPP_API void vfpp_set_threads(int n);

/* ---- pipeline ---------------------------------------------------------- */

typedef struct vfpp_config vfpp_config;

/* Relative paths inside the config resolve against its directory. */
VFPP_API vfpp_status vfpp_config_load(const char* path, vfpp_config** out);
/* `base_dir` may be NULL (current directory). */
VFPP_API vfpp_status vfpp_config_parse(const char* json_text, const char* base_dir, vfpp_config** out);
VFPP_API void vfpp_config_free(vfpp_config* config);
/* Canonical JSON of the config; the string lives until the handle is freed. */
VFPP_API const char* vfpp_config_json(const vfpp_config* config);

typedef void (*vfpp_log_fn)(const char* line, void* user);

/* Runs "all" or a comma list of patterns,board,capture,calibrate,
 * reconstruct,validate,twin. `exit_code` receives 0, 2 (config), 3 (stage
 * failure) or 4 (acceptance threshold). The return value is VFPP_OK whenever
 * the run itself completed, failed stages included; see vfpp_last_error for
 * the failure message. */
VFPP_API vfpp_status vfpp_pipeline_run(const vfpp_config* config, const char* stages, vfpp_log_fn log, void* user,
                                       int* exit_code);

/* ---- rendering --------------------------------------------------------- */

/* Renders one 16-bit frame of a scene file. A NULL pattern switches the
 * projector off. */
VFPP_API vfpp_status vfpp_render_frame(const char* scene_path, const char* pattern_path, const char* out_path);

/* ---- point clouds ------------------------------------------------------ */

typedef struct vfpp_cloud vfpp_cloud;

VFPP_API vfpp_status vfpp_cloud_create(const double* xyz, size_t count, vfpp_cloud** out);
VFPP_API vfpp_status vfpp_cloud_load(const char* ply_path, vfpp_cloud** out);
VFPP_API vfpp_status vfpp_cloud_save(const vfpp_cloud* cloud, const char* ply_path, int ascii);
VFPP_API size_t vfpp_cloud_size(const vfpp_cloud* cloud);
/* Copies 3 * size doubles. */
VFPP_API vfpp_status vfpp_cloud_points(const vfpp_cloud* cloud, double* xyz);
VFPP_API void vfpp_cloud_free(vfpp_cloud* cloud);

typedef struct vfpp_sphere_fit {
  double center[3];
  double radius;
  size_t inliers;
  size_t total;
  int trials;
} vfpp_sphere_fit;

VFPP_API vfpp_status vfpp_fit_sphere(const vfpp_cloud* cloud, double inlier_threshold_mm, int max_trials,
                                     uint64_t seed, vfpp_sphere_fit* out);

typedef struct vfpp_c2m_summary {
  double mean;
  double rms;
  double max;
  size_t count;
} vfpp_c2m_summary;

/* Point-to-triangle distances against a PLY mesh. `json_path` and `csv_path`
 * (histogram) are optional. */
VFPP_API vfpp_status vfpp_cloud_to_mesh(const vfpp_cloud* cloud, const char* mesh_ply, int bins, const char* json_path,
                                        const char* csv_path, vfpp_c2m_summary* out);

typedef struct vfpp_icp_summary {
  double rotation[9]; /* row-major, source to target */
  double translation[3];
  double rms;
  int iterations;
} vfpp_icp_summary;

/* Registers `source` onto `target` points. `aligned` may be NULL; otherwise it
 * receives a new cloud the caller frees. */
VFPP_API vfpp_status vfpp_icp(const vfpp_cloud* source, const vfpp_cloud* target, int max_iterations,
                              double tolerance, vfpp_icp_summary* out, vfpp_cloud** aligned);

/* ---- digital twin ------------------------------------------------------ */

typedef struct vfpp_extent {
  double z_mm;
  double width_mm;
  double height_mm;
} vfpp_extent;

/* k = {fx, fy, ox, oy}; mext is a row-major 3x4 [R|t] in millimeters. */
VFPP_API vfpp_status vfpp_projected_extent(const double k[4], int res_u, int res_v, const double mext[12], double z_mm,
                                           vfpp_extent* out);

/* Projector model read from a calibration JSON, evaluated at every z. The
 * JSON report and CSV table are optional. `out` may be NULL or hold `count`
 * entries. */
VFPP_API vfpp_status vfpp_twin_extent_file(const char* calibration_json, const double* z_mm, size_t count,
                                           const char* json_path, const char* csv_path, vfpp_extent* out);

/* f = (fx + fy) / 2 * s, apertures = W * s and H * s. out = {f, A_h, A_v}. */
VFPP_API vfpp_status vfpp_camera_to_sim(double fx, double fy, int width, int height, double pixel_size_mm,
                                        double out[3]);

#ifdef __cplusplus
}
#endif

#endif
