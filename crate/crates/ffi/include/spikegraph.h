#ifndef SPIKEGRAPH_H
#define SPIKEGRAPH_H

/* Generated by cbindgen from src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum SgStatus {
  SG_OK = 0,
  SG_NULL_POINTER = 1,
  SG_INVALID_ARGUMENT = 2,
  SG_IO = 3,
  SG_MODEL = 4,
  SG_SIMULATION = 5,
  SG_ESTIMATION = 6,
  SG_PANIC = 7,
} SgStatus;

/**
 * Classification of one ordered pair.
 */
typedef enum SgDecision {
  SG_EXCITATORY = 0,
  SG_INHIBITORY = 1,
  SG_ABSENT = 2,
  SG_INSUFFICIENT_DATA = 3,
} SgDecision;

/**
 * A validated network together with its simulation settings.
 */
typedef struct SgNetwork SgNetwork;

typedef struct SgRecording SgRecording;

typedef struct SgReport SgReport;

/**
 * One row of an estimation report.
 */
typedef struct SgPair {
  uint32_t from;
  uint32_t to;
  double r;
  double g;
  double diff;
  double xi1;
  double xi2;
  enum SgDecision decision;
  /**
   * Nonzero when both ratios reached their stopping count.
   */
  int sufficient;
} SgPair;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message describing the last failure on this thread, or null. The
 * pointer stays valid until the next library call on the same thread.
 */
const char *sg_last_error(void);

/**
 * Library version as a static string.
 */
const char *sg_version(void);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not have been freed.
 */
void sg_string_free(char *s);

/**
 * Parses a TOML configuration (the text, not a path) into a network.
 *
 * # Safety
 * `toml` must be a nul-terminated string; `out` must be writable.
 */
enum SgStatus sg_network_from_toml(const char *toml, struct SgNetwork **out);

/**
 * Reads a TOML configuration file into a network.
 *
 * # Safety
 * `path` must be a nul-terminated string; `out` must be writable.
 */
enum SgStatus sg_network_from_config(const char *path, struct SgNetwork **out);

/**
 * Number of neurons, or 0 for null.
 *
 * # Safety
 * `net` must be null or a live handle.
 */
size_t sg_network_len(const struct SgNetwork *net);

/**
 * Horizon declared in the configuration.
 *
 * # Safety
 * `net` must be null or a live handle.
 */
double sg_network_horizon(const struct SgNetwork *net);

/**
 * Slot length `delta_star` of the network, or NaN when undefined.
 *
 * # Safety
 * `net` must be null or a live handle.
 */
double sg_network_delta_star(const struct SgNetwork *net);

/**
 * # Safety
 * `net` must be null or a handle not yet freed.
 */
void sg_network_free(struct SgNetwork *net);

/**
 * Simulates `net` over `(0, horizon]`. A horizon `<= 0` uses the
 * configured one.
 *
 * # Safety
 * `net` must be a live handle; `out` must be writable.
 */
enum SgStatus sg_simulate(const struct SgNetwork *net,
                          double horizon,
                          uint64_t seed,
                          struct SgRecording **out);

/**
 * Seed stored in the network's configuration.
 *
 * # Safety
 * `net` must be null or a live handle.
 */
uint64_t sg_network_seed(const struct SgNetwork *net);

/**
 * Reads a spike file; the format follows the content.
 *
 * # Safety
 * `path` must be a nul-terminated string; `out` must be writable.
 */
enum SgStatus sg_recording_read(const char *path, struct SgRecording **out);

/**
 * Writes a spike file; `.spk1` paths get the binary format, others CSV.
 *
 * # Safety
 * `rec` must be a live handle; `path` a nul-terminated string.
 */
enum SgStatus sg_recording_write(const struct SgRecording *rec, const char *path);

/**
 * Total number of spikes, or 0 for null.
 *
 * # Safety
 * `rec` must be null or a live handle.
 */
size_t sg_recording_spike_count(const struct SgRecording *rec);

/**
 * # Safety
 * `rec` must be null or a live handle.
 */
double sg_recording_horizon(const struct SgRecording *rec);

/**
 * Replaces the horizon of a recording (CSV files do not store one).
 *
 * # Safety
 * `rec` must be a live handle.
 */
enum SgStatus sg_recording_set_horizon(struct SgRecording *rec, double horizon);

/**
 * # Safety
 * `rec` must be null or a handle not yet freed.
 */
void sg_recording_free(struct SgRecording *rec);

/**
 * Estimates the graph using the constants of a known network. `delta <= 0`
 * selects `delta_star`; larger slots need `heuristic != 0`.
 *
 * # Safety
 * `rec` and `net` must be live handles; `out` must be writable.
 */
enum SgStatus sg_estimate(const struct SgRecording *rec,
                          const struct SgNetwork *net,
                          double delta,
                          int heuristic,
                          struct SgReport **out);

/**
 * Estimates the graph from asserted rate bounds.
 *
 * # Safety
 * `rec` must be a live handle; `out` must be writable.
 */
enum SgStatus sg_estimate_with_bounds(const struct SgRecording *rec,
                                      double alpha,
                                      double beta,
                                      double rate_gap,
                                      size_t in_degree,
                                      double delta,
                                      int heuristic,
                                      struct SgReport **out);

/**
 * Number of ordered pairs in the report, or 0 for null.
 *
 * # Safety
 * `report` must be null or a live handle.
 */
size_t sg_report_pair_count(const struct SgReport *report);

/**
 * Copies pair `index` into `out`.
 *
 * # Safety
 * `report` must be a live handle; `out` must be writable.
 */
enum SgStatus sg_report_pair(const struct SgReport *report, size_t index, struct SgPair *out);

/**
 * The full report as JSON. Release with `sg_string_free`.
 *
 * # Safety
 * `report` must be a live handle; `out` must be writable.
 */
enum SgStatus sg_report_to_json(const struct SgReport *report, char **out);

/**
 * # Safety
 * `report` must be null or a handle not yet freed.
 */
void sg_report_free(struct SgReport *report);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SPIKEGRAPH_H */
