#ifndef EXPERT_ADVICE_H
#define EXPERT_ADVICE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every call.
 */
typedef enum EaStatus {
  EA_STATUS_OK = 0,
  EA_STATUS_NULL_POINTER = 1,
  EA_STATUS_INVALID_ARGUMENT = 2,
  EA_STATUS_DIMENSION_MISMATCH = 3,
  /**
   * Substitution, realizability or solver failure.
   */
  EA_STATUS_NUMERICAL = 4,
  EA_STATUS_UNSUPPORTED = 5,
  /**
   * `observe` without a pending prediction.
   */
  EA_STATUS_WRONG_STATE = 6,
  EA_STATUS_PANIC = 7,
} EaStatus;

/**
 * Aggregating algorithm session.
 */
typedef struct EaAaSession EaAaSession;

/**
 * Defensive forecasting session.
 */
typedef struct EaDfaSession EaDfaSession;

/**
 * A game: outcomes, decisions and a loss.
 */
typedef struct EaGame EaGame;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the calling thread's last error message into `buf` as a
 * NUL-terminated string, truncated to `len` bytes. Returns the length of
 * the full message without the terminator.
 *
 * # Safety
 * `buf` must be null or valid for `len` bytes.
 */
size_t ea_last_error_message(char *buf, size_t len);

/**
 * Creates a built-in game by name (`log`, `square`, `absolute`, `brier`,
 * `hellinger`, `simple`, ...) with `outcomes` outcomes.
 *
 * # Safety
 * `name` must be a NUL-terminated string; `out` must be valid for a write.
 */
enum EaStatus ea_game_new(const char *name, size_t outcomes, struct EaGame **out);

/**
 * # Safety
 * `game` must be null or a handle from [`ea_game_new`] not yet freed.
 */
void ea_game_free(struct EaGame *game);

/**
 * Number of outcomes and length of a decision.
 *
 * # Safety
 * `game` must be a live handle; outputs must be valid for writes.
 */
enum EaStatus ea_game_dims(const struct EaGame *game, size_t *outcomes, size_t *decision_dim);

/**
 * Loss of `decision` (length `dim`) when `outcome` happens. May be `+inf`.
 *
 * # Safety
 * `game` must be a live handle, `decision` valid for `dim` reads, `out` for a write.
 */
enum EaStatus ea_game_loss(const struct EaGame *game,
                           const double *decision,
                           size_t dim,
                           size_t outcome,
                           double *out);

/**
 * Largest learning rate at which the game is mixable; `Unsupported` when it is not mixable.
 *
 * # Safety
 * `game` must be a live handle; `out` valid for a write.
 */
enum EaStatus ea_game_max_learning_rate(const struct EaGame *game, double *out);

/**
 * Smallest `c` for which the game is realizable at learning rate `eta`.
 *
 * # Safety
 * `game` must be a live handle; `out` valid for a write.
 */
enum EaStatus ea_game_realizability_constant(const struct EaGame *game, double eta, double *out);

/**
 * Starts an aggregating algorithm session over `experts` experts.
 * `prior` holds `experts` weights, or is null for the uniform prior.
 *
 * # Safety
 * `game` must be a live handle; `prior` null or valid for `experts` reads; `out` valid for a write.
 */
enum EaStatus ea_aa_new(const struct EaGame *game,
                        double c,
                        double eta,
                        size_t experts,
                        const double *prior,
                        struct EaAaSession **out);

/**
 * # Safety
 * `session` must be null or a handle from [`ea_aa_new`] not yet freed.
 */
void ea_aa_free(struct EaAaSession *session);

/**
 * Computes the Learner's decision from the experts' decisions, given row
 * by row in `decisions` (`experts` times the decision dimension).
 * Replaces any pending prediction.
 *
 * # Safety
 * `session` must be a live handle; `decisions` valid for its reads;
 * `decision_out` valid for `capacity` writes.
 */
enum EaStatus ea_aa_predict(struct EaAaSession *session,
                            const double *decisions,
                            size_t experts,
                            double *decision_out,
                            size_t capacity);

/**
 * Settles the pending round with `outcome`.
 *
 * # Safety
 * `session` must be a live handle.
 */
enum EaStatus ea_aa_observe(struct EaAaSession *session, size_t outcome);

/**
 * Cumulative losses: the Learner's, and each expert's into `expert_out` (length `experts`).
 *
 * # Safety
 * `session` must be a live handle; `learner_out` valid for a write;
 * `expert_out` null or valid for `experts` writes.
 */
enum EaStatus ea_aa_losses(const struct EaAaSession *session,
                           double *learner_out,
                           double *expert_out,
                           size_t experts);

/**
 * Starts a defensive forecasting session with the game's default proper loss and solver settings.
 *
 * # Safety
 * As for [`ea_aa_new`].
 */
enum EaStatus ea_dfa_new(const struct EaGame *game,
                         double c,
                         double eta,
                         size_t experts,
                         const double *prior,
                         struct EaDfaSession **out);

/**
 * # Safety
 * `session` must be null or a handle from [`ea_dfa_new`] not yet freed.
 */
void ea_dfa_free(struct EaDfaSession *session);

/**
 * As [`ea_aa_predict`]. When `pi_out` is not null it receives the chosen
 * outcome distribution (one entry per outcome).
 *
 * # Safety
 * As for [`ea_aa_predict`]; `pi_out` null or valid for one write per outcome.
 */
enum EaStatus ea_dfa_predict(struct EaDfaSession *session,
                             const double *decisions,
                             size_t experts,
                             double *decision_out,
                             size_t capacity,
                             double *pi_out);

/**
 * # Safety
 * `session` must be a live handle.
 */
enum EaStatus ea_dfa_observe(struct EaDfaSession *session, size_t outcome);

/**
 * # Safety
 * As for [`ea_aa_losses`].
 */
enum EaStatus ea_dfa_losses(const struct EaDfaSession *session,
                            double *learner_out,
                            double *expert_out,
                            size_t experts);

/**
 * Natural log of the defensive forecaster's test supermartingale.
 *
 * # Safety
 * `session` must be a live handle; `out` valid for a write.
 */
enum EaStatus ea_dfa_log_supermartingale(const struct EaDfaSession *session, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* EXPERT_ADVICE_H */
