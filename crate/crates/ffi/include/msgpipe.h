#ifndef MSGPIPE_H
#define MSGPIPE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes for every fallible entry point.
 */
typedef enum MsgpipeStatus {
  MsgpipeStatus_Ok = 0,
  /**
   * A required pointer argument was NULL.
   */
  MsgpipeStatus_NullArgument = 1,
  /**
   * A string argument was not valid UTF-8.
   */
  MsgpipeStatus_InvalidUtf8 = 2,
  /**
   * Move source or rule text failed to parse.
   */
  MsgpipeStatus_ParseError = 3,
  /**
   * The named target/module does not exist in the workspace.
   */
  MsgpipeStatus_NotFound = 4,
  /**
   * Verification or coverage machinery failed.
   */
  MsgpipeStatus_ProverError = 5,
  /**
   * A panic or other internal fault; details via last_error_message.
   */
  MsgpipeStatus_Internal = 6,
} MsgpipeStatus;

/**
 * Opaque handle over a parsed workspace.
 */
typedef struct MsgpipeWorkspace MsgpipeWorkspace;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Detail text for the most recent failure on this thread. Borrowed; valid
 * until the next failing call on the same thread. Never NULL.
 */
const char *msgpipe_last_error_message(void);

/**
 * Parse Move source (one or more modules) into a workspace handle.
 *
 * # Safety
 * `source` must be a NUL-terminated string; `out` must be a valid pointer.
 */
enum MsgpipeStatus msgpipe_workspace_parse(const char *source, struct MsgpipeWorkspace **out);

/**
 * Release a workspace handle. NULL is a no-op.
 *
 * # Safety
 * `ws` must be a pointer previously returned by `msgpipe_workspace_parse`
 * and not yet freed.
 */
void msgpipe_workspace_free(struct MsgpipeWorkspace *ws);

/**
 * Number of modules held by the workspace.
 *
 * # Safety
 * `ws` must be a live workspace handle.
 */
unsigned long long msgpipe_workspace_module_count(const struct MsgpipeWorkspace *ws);

/**
 * Render the dependency-closure report for `target` (`module::function`).
 *
 * # Safety
 * `ws` must be a live workspace handle; `target` NUL-terminated; `out` valid.
 */
enum MsgpipeStatus msgpipe_analyze(const struct MsgpipeWorkspace *ws,
                                   const char *target,
                                   char **out);

/**
 * Best-effort inline `target` and return report text plus the inlined
 * function source.
 *
 * # Safety
 * `ws` must be a live workspace handle; `target` NUL-terminated; `out` valid.
 */
enum MsgpipeStatus msgpipe_inline(const struct MsgpipeWorkspace *ws,
                                  const char *target,
                                  char **out);

/**
 * Canonically pretty-print the module named `module_name`.
 *
 * # Safety
 * `ws` must be a live workspace handle; `module_name` NUL-terminated;
 * `out` valid.
 */
enum MsgpipeStatus msgpipe_pretty_print_module(const struct MsgpipeWorkspace *ws,
                                               const char *module_name,
                                               char **out);

/**
 * Verify Move source with the mock prover. `rules` holds
 * `pattern<TAB>verdict<TAB>diagnostic` lines; pass an empty string for the
 * default everything-passes ruleset. The verdict line plus diagnostics are
 * returned as text.
 *
 * # Safety
 * `source` and `rules` must be NUL-terminated; `out` valid.
 */
enum MsgpipeStatus msgpipe_verify_mock(const char *source, const char *rules, char **out);

/**
 * Mutation coverage of a spec (snippet syntax) for `target`, scored with the
 * mock prover; returns the rendered report.
 *
 * # Safety
 * `ws` must be a live workspace handle; `target`, `spec_text`, and `rules`
 * NUL-terminated; `out` valid.
 */
enum MsgpipeStatus msgpipe_coverage(const struct MsgpipeWorkspace *ws,
                                    const char *target,
                                    const char *spec_text,
                                    const char *rules,
                                    unsigned long long seed,
                                    unsigned long long mutants,
                                    char **out);

/**
 * Release a string returned by any msgpipe call. NULL is a no-op.
 *
 * # Safety
 * `s` must be a pointer previously returned through a msgpipe out-parameter
 * and not yet freed.
 */
void msgpipe_string_free(char *s);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* MSGPIPE_H */
