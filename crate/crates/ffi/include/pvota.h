#ifndef PVOTA_H
#define PVOTA_H

/* Generated by cbindgen from the pvota-ffi crate; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

// Status codes returned by fallible entry points.
typedef enum PvotaStatus {
  PVOTA_STATUS_OK = 0,
  PVOTA_STATUS_NULL_ARGUMENT = 1,
  PVOTA_STATUS_INVALID_UTF8 = 2,
  PVOTA_STATUS_ANALYSIS_FAILED = 3,
} PvotaStatus;

// Opaque handle to one completed analysis.
typedef struct PvotaAnalysis PvotaAnalysis;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Run the full pipeline on a case directory (`field.csv`, `network.csv`,
// `app.log`, `events.csv`; `config.json` is searched beside it unless
// `config_path` is given). On success writes a handle to `out_analysis`.
//
// # Safety
// `case_dir` must be a valid NUL-terminated string; `config_path` may be
// null; `out_analysis` must be a valid pointer; `out_error` may be null.
enum PvotaStatus pvota_analyze_case(const char *case_dir,
                                    const char *config_path,
                                    struct PvotaAnalysis **out_analysis,
                                    char **out_error);

// Concluded cause class: 0 benign/inconclusive, 10 system fault, 20 false
// data injection, 30 memory corruption, 40 suspected log manipulation,
// 41 suspected dispatch manipulation; -1 on a null handle.
//
// # Safety
// `ptr` must be null or a handle from [`pvota_analyze_case`].
int pvota_analysis_cause_code(const struct PvotaAnalysis *ptr);

// Verdict as JSON. Returns null on a null handle; free with
// [`pvota_string_free`].
//
// # Safety
// `ptr` must be null or a handle from [`pvota_analyze_case`].
char *pvota_analysis_verdict_json(const struct PvotaAnalysis *ptr);

// Human-readable analysis report (markdown). Returns null on a null
// handle; free with [`pvota_string_free`].
//
// # Safety
// `ptr` must be null or a handle from [`pvota_analyze_case`].
char *pvota_analysis_report_markdown(const struct PvotaAnalysis *ptr);

// Simplified dependency graph as JSON. Returns null on a null handle; free
// with [`pvota_string_free`].
//
// # Safety
// `ptr` must be null or a handle from [`pvota_analyze_case`].
char *pvota_analysis_graph_json(const struct PvotaAnalysis *ptr);

// Simplified dependency graph as DOT. Returns null on a null handle; free
// with [`pvota_string_free`].
//
// # Safety
// `ptr` must be null or a handle from [`pvota_analyze_case`].
char *pvota_analysis_graph_dot(const struct PvotaAnalysis *ptr);

// Pattern-match ledger as JSON. Returns null on a null handle; free with
// [`pvota_string_free`].
//
// # Safety
// `ptr` must be null or a handle from [`pvota_analyze_case`].
char *pvota_analysis_matches_json(const struct PvotaAnalysis *ptr);

// Pruning report as JSON. Returns null on a null handle; free with
// [`pvota_string_free`].
//
// # Safety
// `ptr` must be null or a handle from [`pvota_analyze_case`].
char *pvota_analysis_prune_report_json(const struct PvotaAnalysis *ptr);

// Release an analysis handle.
//
// # Safety
// `ptr` must be null or a handle from [`pvota_analyze_case`], not yet
// freed.
void pvota_analysis_free(struct PvotaAnalysis *ptr);

// Release a string returned by any accessor.
//
// # Safety
// `ptr` must be null or a string returned by this library, not yet freed.
void pvota_string_free(char *ptr);

// Library version as a static string; do not free.
const char *pvota_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PVOTA_H */
