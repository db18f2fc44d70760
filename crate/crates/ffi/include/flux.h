#ifndef FLUX_H
#define FLUX_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

typedef enum FluxStatus {
  FLUX_STATUS_OK = 0,
  FLUX_STATUS_NULL_POINTER = 1,
  FLUX_STATUS_INDEX_OUT_OF_RANGE = 2,
  FLUX_STATUS_TERMINAL_STATE = 3,
  FLUX_STATUS_CODE_OUT_OF_RANGE = 4,
  FLUX_STATUS_INVALID_ARGUMENT = 5,
  FLUX_STATUS_FORMAT = 6,
  FLUX_STATUS_IO = 7,
  FLUX_STATUS_UNKNOWN_STATE = 8,
  FLUX_STATUS_CONFIG = 9,
  FLUX_STATUS_BUFFER_TOO_SMALL = 10,
  FLUX_STATUS_PANIC = 11,
} FluxStatus;

typedef enum FluxOutcome {
  FLUX_OUTCOME_ONGOING = 0,
  FLUX_OUTCOME_SHRINKER_SINGLE_CELL = 1,
  FLUX_OUTCOME_SHRINKER_TIEBREAK = 2,
  FLUX_OUTCOME_AMPLIFIER_SUM_EXCEEDED = 3,
  FLUX_OUTCOME_AMPLIFIER_TIEBREAK = 4,
} FluxOutcome;

typedef enum FluxRole {
  FLUX_ROLE_SHRINKER = 0,
  FLUX_ROLE_AMPLIFIER = 1,
} FluxRole;

/**
 * Trained Q-table, read-only.
 */
typedef struct FluxQTable FluxQTable;

/**
 * Solved game plus the random-play probabilities for every state.
 */
typedef struct FluxSolved FluxSolved;

/**
 * Game position.
 */
typedef struct FluxState FluxState;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until the
 * next failing call on the same thread.
 */
const char *flux_last_error(void);

/**
 * Static description of a status code.
 */
const char *flux_status_message(enum FluxStatus status);

/**
 * The opening position `[2,1,3,1,2]`, no moves played.
 */
struct FluxState *flux_state_new_initial(void);

enum FluxStatus flux_state_from_cells(const uint32_t *cells,
                                      size_t len,
                                      uint32_t moves_played,
                                      struct FluxState **out_state);

void flux_state_free(struct FluxState *state);

struct FluxState *flux_state_clone(const struct FluxState *state);

/**
 * Number of cells; 0 for a null handle.
 */
size_t flux_state_len(const struct FluxState *state);

uint32_t flux_state_moves_played(const struct FluxState *state);

uint32_t flux_state_sum(const struct FluxState *state);

enum FluxStatus flux_state_cells(const struct FluxState *state,
                                 uint32_t *out,
                                 size_t cap,
                                 size_t *out_len);

enum FluxStatus flux_state_outcome(const struct FluxState *state, enum FluxOutcome *out_outcome);

/**
 * Role to move under the given first mover; fails on terminal states.
 */
enum FluxStatus flux_state_role_to_move(const struct FluxState *state,
                                        enum FluxRole first_mover,
                                        enum FluxRole *out_role);

/**
 * Encoded legal actions in ascending order.
 */
enum FluxStatus flux_state_legal_actions(const struct FluxState *state,
                                         uint32_t *out,
                                         size_t cap,
                                         size_t *out_len);

/**
 * Applies an encoded action, producing a new handle. The input is untouched.
 */
enum FluxStatus flux_state_apply(const struct FluxState *state,
                                 int64_t code,
                                 struct FluxState **out_next,
                                 enum FluxOutcome *out_outcome);

/**
 * Canonical key such as `2,1,3,1,2|0`. Free with [`flux_string_free`].
 */
char *flux_state_key(const struct FluxState *state);

enum FluxStatus flux_state_from_key(const char *key, struct FluxState **out_state);

void flux_string_free(char *s);

/**
 * `2 * index + 1` for a drain, `2 * index` for an amplify.
 */
uint32_t flux_encode_action(uint32_t index, bool drain);

enum FluxStatus flux_decode_action(int64_t code,
                                   size_t row_len,
                                   uint32_t *out_index,
                                   bool *out_drain);

enum FluxStatus flux_heuristic_action(const struct FluxState *state,
                                      enum FluxRole role,
                                      uint32_t *out_code);

enum FluxStatus flux_qtable_load(const char *path, struct FluxQTable **out_table);

void flux_qtable_free(struct FluxQTable *table);

/**
 * Number of states in the table; 0 for a null handle.
 */
size_t flux_qtable_len(const struct FluxQTable *table);

enum FluxStatus flux_qtable_role(const struct FluxQTable *table, enum FluxRole *out_role);

/**
 * Greedy move for `state`. When the state is not in the table a uniform
 * random legal move drawn from `seed` is returned and `out_fallback` is set.
 */
enum FluxStatus flux_qtable_greedy_action(const struct FluxQTable *table,
                                          const struct FluxState *state,
                                          uint64_t seed,
                                          uint32_t *out_code,
                                          bool *out_fallback);

/**
 * Solves every position reachable under `first_mover`.
 */
struct FluxSolved *flux_solve(enum FluxRole first_mover);

void flux_solved_free(struct FluxSolved *solved);

size_t flux_solved_len(const struct FluxSolved *solved);

/**
 * Winner under optimal play and the number of plies it takes.
 */
enum FluxStatus flux_solved_value(const struct FluxSolved *solved,
                                  const struct FluxState *state,
                                  enum FluxRole *out_winner,
                                  uint32_t *out_depth);

enum FluxStatus flux_solved_optimal_action(const struct FluxSolved *solved,
                                           const struct FluxState *state,
                                           uint32_t *out_code);

/**
 * Shrinker win probability when both sides move uniformly at random.
 */
enum FluxStatus flux_solved_random_win_prob(const struct FluxSolved *solved,
                                            const struct FluxState *state,
                                            double *out_prob);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FLUX_H */
