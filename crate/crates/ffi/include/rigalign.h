#ifndef RIGALIGN_H
#define RIGALIGN_H

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

// Result code of every call.
typedef enum RigStatus {
  RIG_STATUS_OK = 0,
  RIG_STATUS_NULL_ARGUMENT = 1,
  RIG_STATUS_INVALID_ARGUMENT = 2,
  RIG_STATUS_INVALID_CONFIG = 3,
  RIG_STATUS_FRAME_MISMATCH = 4,
  RIG_STATUS_OUT_OF_RANGE = 5,
  RIG_STATUS_DOMAIN = 6,
  RIG_STATUS_INSUFFICIENT_POINTS = 7,
  RIG_STATUS_SCENE_MISMATCH = 8,
  RIG_STATUS_IO = 9,
  RIG_STATUS_FORMAT = 10,
  RIG_STATUS_INTERNAL = 11,
} RigStatus;

typedef enum RigStrategy {
  RIG_STRATEGY_STAMP = 0,
  RIG_STRATEGY_FRAME = 1,
  RIG_STRATEGY_TARGET = 2,
} RigStrategy;

// Opaque simulated or loaded recording.
typedef struct RigRecording RigRecording;

// Axis-aligned image box in pixels.
typedef struct RigBox2D {
  double min_x;
  double min_y;
  double max_x;
  double max_y;
} RigBox2D;

// Rigid transform: unit quaternion (w, x, y, z) and translation in meters.
typedef struct RigTransform {
  double rotation_wxyz[4];
  double translation[3];
} RigTransform;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or NULL after a success.
// The pointer stays valid until the next call on the same thread.
const char *rig_last_error_message(void);

// Library version as a static NUL-terminated string.
const char *rig_version(void);

// # Safety
// `s` must come from this library and not have been freed; NULL is ignored.
void rig_string_free(char *s);

// Intersection over union of two boxes.
//
// # Safety
// `a`, `b` and `out` must be valid pointers.
enum RigStatus rig_iou(const struct RigBox2D *a, const struct RigBox2D *b, double *out);

// Acquisition time of a clockwise azimuth (radians, `[0, 2π)`).
//
// # Safety
// `out` must be a valid pointer.
enum RigStatus rig_point_timestamp(double scan_start, double azimuth, double period, double *out);

// `out = a ∘ b` (apply `b` first).
//
// # Safety
// All pointers must be valid; `out` may alias an input.
enum RigStatus rig_transform_compose(const struct RigTransform *a,
                                     const struct RigTransform *b,
                                     struct RigTransform *out);

// # Safety
// Both pointers must be valid; `out` may alias `t`.
enum RigStatus rig_transform_inverse(const struct RigTransform *t, struct RigTransform *out);

// Initial guess mapping vehicle-2 LiDAR points into vehicle-1 LiDAR
// coordinates: `inv(ins1←lidar1) · inv(world←ins1) · (world←ins2) · (ins2←lidar2)`.
//
// # Safety
// All pointers must be valid.
enum RigStatus rig_chain_initial_transform(const struct RigTransform *ins1_from_lidar1,
                                           const struct RigTransform *world_from_ins1,
                                           const struct RigTransform *world_from_ins2,
                                           const struct RigTransform *ins2_from_lidar2,
                                           struct RigTransform *out);

// Simulates a scene from a JSON scene config (`"{}"` for defaults).
//
// # Safety
// `config_json` must be a NUL-terminated string and `out` a valid pointer.
enum RigStatus rig_recording_simulate(const char *config_json, struct RigRecording **out);

// Loads a recording directory written by `rig_recording_write` or the CLI.
//
// # Safety
// `dir` must be a NUL-terminated string and `out` a valid pointer.
enum RigStatus rig_recording_open(const char *dir, struct RigRecording **out);

// Writes the recording (binary scans) to `dir`.
//
// # Safety
// `recording` must be a live handle and `dir` a NUL-terminated string.
enum RigStatus rig_recording_write(const struct RigRecording *recording, const char *dir);

// # Safety
// `recording` must be a handle from this library, not freed before; NULL is
// ignored.
void rig_recording_free(struct RigRecording *recording);

// # Safety
// `recording` must be a live handle and `out` a valid pointer.
enum RigStatus rig_recording_vehicle_count(const struct RigRecording *recording, size_t *out);

// # Safety
// `recording` must be a live handle and `out` a valid pointer.
enum RigStatus rig_recording_scan_count(const struct RigRecording *recording,
                                        size_t vehicle,
                                        size_t *out);

// Content hash of the recording as a new string.
//
// # Safety
// `recording` must be a live handle and `out` a valid pointer.
enum RigStatus rig_recording_id(const struct RigRecording *recording, char **out);

// Mean object misplacement (meters) of one vehicle's points under its
// reported timestamps; `*has_objects` is false when no point hit an object.
//
// # Safety
// `recording` must be a live handle; `out` and `has_objects` valid pointers.
enum RigStatus rig_sync_misalignment(const struct RigRecording *recording,
                                     size_t vehicle,
                                     double *out,
                                     bool *has_objects);

// Aligns every scan with one strategy; `*out_json` receives the run as JSON.
//
// # Safety
// `recording` must be a live handle and `out_json` a valid pointer.
enum RigStatus rig_align(const struct RigRecording *recording,
                         enum RigStrategy strategy,
                         char **out_json);

// Runs all three strategies and evaluates them against ground truth.
// `options_json` may be NULL for defaults. `*out_table` receives the text
// table, `*out_json` (if not NULL) the structured table.
//
// # Safety
// `recording` must be a live handle, `options_json` NULL or a NUL-terminated
// string, `out_table` a valid pointer and `out_json` NULL or valid.
enum RigStatus rig_evaluate(const struct RigRecording *recording,
                            const char *options_json,
                            char **out_table,
                            char **out_json);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RIGALIGN_H */
