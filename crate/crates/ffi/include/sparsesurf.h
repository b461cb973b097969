#ifndef SPARSESURF_H
#define SPARSESURF_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result codes.
typedef enum SsStatus {
  SS_STATUS_OK = 0,
  SS_STATUS_NULL_ARGUMENT = 1,
  SS_STATUS_INVALID_ARGUMENT = 2,
  SS_STATUS_IO = 3,
  SS_STATUS_CONFIG = 4,
  SS_STATUS_SCENE_LOAD = 5,
  SS_STATUS_INVALID_CAMERA = 6,
  SS_STATUS_FORMAT = 7,
  SS_STATUS_NUMERICAL = 8,
  SS_STATUS_BACKEND = 9,
  SS_STATUS_BUFFER_TOO_SMALL = 10,
  SS_STATUS_PANIC = 11,
} SsStatus;

typedef struct SsCloud SsCloud;

typedef struct SsMesh SsMesh;

typedef struct SsScene SsScene;

typedef struct SsTrainer SsTrainer;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failure on this thread, or null. The pointer stays
// valid until the next failing call on this thread.
const char *ss_last_error(void);

// Static NUL-terminated version string.
const char *ss_version(void);

// Load a scene directory or manifest.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a valid pointer.
enum SsStatus ss_scene_load(const char *path, struct SsScene **out);

// # Safety
// `scene` must be null or a handle from [`ss_scene_load`] not yet freed.
void ss_scene_free(struct SsScene *scene);

// Number of views and how many of them are training views.
//
// # Safety
// `scene` must be a live handle; the outputs may be null.
enum SsStatus ss_scene_view_count(const struct SsScene *scene, size_t *views, size_t *train);

// Image size of view `view`.
//
// # Safety
// `scene` must be a live handle; `width` and `height` valid pointers.
enum SsStatus ss_scene_image_size(const struct SsScene *scene,
                                  size_t view,
                                  size_t *width,
                                  size_t *height);

// Create a trainer on the training views of `scene`. `config_path` may be
// null for defaults.
//
// # Safety
// `scene` must be a live handle, `config_path` null or NUL-terminated, and
// `out` a valid pointer.
enum SsStatus ss_trainer_new(const struct SsScene *scene,
                             const char *config_path,
                             struct SsTrainer **out);

// # Safety
// `trainer` must be null or a handle from [`ss_trainer_new`] not yet freed.
void ss_trainer_free(struct SsTrainer *trainer);

// Run up to `iterations` steps, stopping early when training is complete.
// `total_loss` (nullable) receives the loss of the last step taken.
//
// # Safety
// `trainer` must be a live handle.
enum SsStatus ss_trainer_step(struct SsTrainer *trainer, size_t iterations, double *total_loss);

// Completed iterations, total iterations and current primitive count.
//
// # Safety
// `trainer` must be a live handle; the outputs may be null.
enum SsStatus ss_trainer_progress(const struct SsTrainer *trainer,
                                  size_t *iter,
                                  size_t *total,
                                  size_t *primitives);

// Copy of the trainer's current primitives.
//
// # Safety
// `trainer` must be a live handle and `out` a valid pointer.
enum SsStatus ss_trainer_cloud(const struct SsTrainer *trainer, struct SsCloud **out);

// Write a checkpoint of the trainer, including optimizer state.
//
// # Safety
// `trainer` must be a live handle and `path` NUL-terminated.
enum SsStatus ss_trainer_save(const struct SsTrainer *trainer, const char *path);

// Load the primitives of a checkpoint.
//
// # Safety
// `path` must be NUL-terminated and `out` a valid pointer.
enum SsStatus ss_cloud_load(const char *path, struct SsCloud **out);

// # Safety
// `cloud` must be null or a live handle not yet freed.
void ss_cloud_free(struct SsCloud *cloud);

// Number of primitives.
//
// # Safety
// `cloud` must be a live handle and `len` a valid pointer.
enum SsStatus ss_cloud_len(const struct SsCloud *cloud, size_t *len);

// Render `cloud` at camera `view` of `scene` into `rgb`, row-major
// `height × width × 3`. `capacity` is the length of `rgb` in elements.
//
// # Safety
// Handles must be live and `rgb` must point to `capacity` writable doubles.
enum SsStatus ss_cloud_render(const struct SsCloud *cloud,
                              const struct SsScene *scene,
                              size_t view,
                              double *rgb,
                              size_t capacity);

// Fuse depths rendered at the training views into a mesh. `voxel` is a
// fraction of the scene radius; pass 0 for the default.
//
// # Safety
// Handles must be live and `out` a valid pointer.
enum SsStatus ss_mesh_extract(const struct SsCloud *cloud,
                              const struct SsScene *scene,
                              double voxel,
                              struct SsMesh **out);

// # Safety
// `mesh` must be null or a live handle not yet freed.
void ss_mesh_free(struct SsMesh *mesh);

// Vertex and triangle counts.
//
// # Safety
// `mesh` must be a live handle; the outputs may be null.
enum SsStatus ss_mesh_counts(const struct SsMesh *mesh, size_t *vertices, size_t *triangles);

// Write the mesh as PLY, binary little-endian unless `ascii` is true.
//
// # Safety
// `mesh` must be a live handle and `path` NUL-terminated.
enum SsStatus ss_mesh_write_ply(const struct SsMesh *mesh, const char *path, bool ascii);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SPARSESURF_H */
