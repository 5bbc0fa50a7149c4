/* Generated by cbindgen. Do not edit. */

#ifndef HYBRID_OSC_H
#define HYBRID_OSC_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every entry point.
 */
typedef enum HoStatus {
  HO_STATUS_OK = 0,
  HO_STATUS_NULL_POINTER = 1,
  HO_STATUS_INVALID_PARAMETER = 2,
  HO_STATUS_NOT_STABLE = 3,
  HO_STATUS_SINGULAR_SYSTEM = 4,
  HO_STATUS_COUPLING_ZERO = 5,
  HO_STATUS_POLE_ON_AXIS = 6,
  HO_STATUS_DEGENERATE_POLES = 7,
  HO_STATUS_CLASSIFICATION_FAILURE = 8,
  HO_STATUS_OVERDAMPED_UNSUPPORTED = 9,
  HO_STATUS_NOT_IDENTICAL = 10,
  HO_STATUS_PERFECT_CORRELATION = 11,
  HO_STATUS_TRADEOFF_VIOLATION = 12,
  HO_STATUS_STEP_SIZE = 13,
  HO_STATUS_CONFIG = 14,
  HO_STATUS_BUFFER_TOO_SMALL = 15,
  HO_STATUS_PANIC = 99,
} HoStatus;

/**
 * Order of the perturbative pole expansion.
 */
typedef enum HoOrder {
  HO_ORDER_FIRST = 1,
  HO_ORDER_SECOND = 2,
} HoOrder;

/**
 * Correlator evaluation route on a caller-supplied grid.
 */
typedef enum HoMethod {
  HO_METHOD_EXACT = 0,
  HO_METHOD_SMALL_LAMBDA = 1,
} HoMethod;

/**
 * Two-point function selector.
 */
typedef enum HoPair {
  HO_PAIR_Q1Q1 = 0,
  HO_PAIR_Q2Q2 = 1,
  HO_PAIR_Q1Q2 = 2,
  HO_PAIR_Q1R1 = 3,
  HO_PAIR_Q2R2 = 4,
  HO_PAIR_Q2R1 = 5,
} HoPair;

/**
 * Route for the correlation coefficient behind the mutual information.
 */
typedef enum HoRoute {
  HO_ROUTE_SMALL_LAMBDA = 0,
  HO_ROUTE_EXACT = 1,
} HoRoute;

/**
 * Classical-quantum parameter set.
 */
typedef struct HoCq HoCq;

/**
 * Ensemble statistics from a simulation.
 */
typedef struct HoEnsemble HoEnsemble;

/**
 * Coupled classical system `(m, k, alpha, D)` per oscillator and `lambda`.
 */
typedef struct HoSystem HoSystem;

/**
 * Stability summary.
 */
typedef struct HoStability {
  double min_real_part;
  bool routh_hurwitz_pass;
  double eigen_re[4];
  double eigen_im[4];
} HoStability;

/**
 * Complex pole pair `omega1`, `omega2`.
 */
typedef struct HoPoles {
  double omega1_re;
  double omega1_im;
  double omega2_re;
  double omega2_im;
} HoPoles;

/**
 * Simulation settings.
 */
typedef struct HoSimOptions {
  double dt;
  double t_final;
  uint64_t n_trajectories;
  uint64_t seed;
  /**
   * Steps between recorded rows; the final step is always recorded.
   */
  uint64_t stride;
  /**
   * Start from the stationary Gaussian instead of the origin.
   */
  bool stationary;
} HoSimOptions;

/**
 * One recorded ensemble row.
 */
typedef struct HoEnsembleRow {
  double t;
  double mean[4];
  double cov[16];
  double energy;
  double energy_stderr;
} HoEnsembleRow;

/**
 * Occupation `N` and temperature `T_C`.
 */
typedef struct HoOccupation {
  double n;
  double t_c;
} HoOccupation;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer
 * stays valid until the next call into this library on the same thread.
 */
const char *ho_last_error_message(void);

/**
 * Static NUL-terminated library version.
 */
const char *ho_version(void);

/**
 * Builds a coupled system. Oscillator 2 is frictionless.
 *
 * # Safety
 * `out` must be a valid pointer to a handle slot.
 */
enum HoStatus ho_system_new(double m1,
                            double k1,
                            double alpha,
                            double d1,
                            double m2,
                            double k2,
                            double d2,
                            double lambda,
                            struct HoSystem **out_system);

/**
 * Releases a system handle. Null is ignored.
 *
 * # Safety
 * `system` must come from [`ho_system_new`] and not be freed twice.
 */
void ho_system_free(struct HoSystem *system);

/**
 * Drift matrix `theta` of `dz = -theta z dt + sigma dW`.
 *
 * # Safety
 * `system` must be a live handle and `out_theta` must hold 16 doubles.
 */
enum HoStatus ho_drift_matrix(const struct HoSystem *system, double *out_theta);

/**
 * Eigenvalues and Routh-Hurwitz verdict of the drift matrix.
 *
 * # Safety
 * `system` must be a live handle and `out_report` valid.
 */
enum HoStatus ho_stability(const struct HoSystem *system, struct HoStability *out_report);

/**
 * Stationary covariance from the Lyapunov equation.
 *
 * # Safety
 * `system` must be a live handle and `out_cov` must hold 16 doubles.
 */
enum HoStatus ho_steady_covariance(const struct HoSystem *system, double *out_cov);

/**
 * Stationary covariance from the closed-form expressions.
 *
 * # Safety
 * `system` must be a live handle and `out_cov` must hold 16 doubles.
 */
enum HoStatus ho_closed_form_covariance(const struct HoSystem *system, double *out_cov);

/**
 * Mean and covariance at time `t` from `(mean0, cov0)` at `t = 0`.
 *
 * # Safety
 * `system` must be a live handle; `cov0`/`out_cov` hold 16 doubles and
 * `mean0`/`out_mean` hold 4.
 */
enum HoStatus ho_evolve_moments(const struct HoSystem *system,
                                const double *cov0,
                                const double *mean0,
                                double t,
                                double *out_cov,
                                double *out_mean);

/**
 * Rate of change of the mean conservative energy for a covariance.
 *
 * # Safety
 * `system` must be a live handle and `cov` must hold 16 doubles.
 */
enum HoStatus ho_energy_drift(const struct HoSystem *system, const double *cov, double *out_rate);

/**
 * Exact complex poles of the response functions.
 *
 * # Safety
 * `system` must be a live handle and `out_poles` valid.
 */
enum HoStatus ho_poles(const struct HoSystem *system, struct HoPoles *out_poles);

/**
 * Poles expanded to first or second order in the coupling.
 *
 * # Safety
 * `system` must be a live handle and `out_poles` valid.
 */
enum HoStatus ho_perturbative_poles(const struct HoSystem *system,
                                    enum HoOrder order,
                                    struct HoPoles *out_poles);

/**
 * One correlator on a caller-supplied time grid.
 *
 * # Safety
 * `system` must be a live handle; `times` and `out_values` hold `n` doubles.
 */
enum HoStatus ho_correlator(const struct HoSystem *system,
                            enum HoMethod method,
                            enum HoPair pair,
                            const double *times,
                            size_t n,
                            double *out_values);

/**
 * A symmetric correlator on `|t| <= t_max` by FFT quadrature. The grid is
 * chosen by the library; `out_len` receives its length. Returns
 * `BufferTooSmall` with `out_len` set when `capacity` is insufficient.
 *
 * # Safety
 * `system` must be a live handle; `out_times` and `out_values` hold
 * `capacity` doubles.
 */
enum HoStatus ho_correlator_fft(const struct HoSystem *system,
                                enum HoPair pair,
                                double t_max,
                                double *out_times,
                                double *out_values,
                                size_t capacity,
                                size_t *out_len);

/**
 * Mutual information of a position pair at lag `t`.
 *
 * # Safety
 * `system` must be a live handle and `out_value` valid.
 */
enum HoStatus ho_mutual_information(const struct HoSystem *system,
                                    enum HoPair pair,
                                    double t,
                                    enum HoRoute route,
                                    double *out_value);

/**
 * Leading-order ratio of position spreads `sigma1/sigma2`.
 *
 * # Safety
 * `system` must be a live handle and `out_value` valid.
 */
enum HoStatus ho_sigma_ratio(const struct HoSystem *system, double *out_value);

/**
 * Default simulation settings.
 */
struct HoSimOptions ho_sim_options_default(void);

/**
 * Runs an Euler-Maruyama ensemble and stores its statistics.
 *
 * # Safety
 * `system` must be a live handle, `options` valid and `out_ensemble` a
 * valid handle slot.
 */
enum HoStatus ho_simulate(const struct HoSystem *system,
                          const struct HoSimOptions *options,
                          struct HoEnsemble **out_ensemble);

/**
 * Number of recorded rows.
 *
 * # Safety
 * `ensemble` must be a live handle and `out_len` valid.
 */
enum HoStatus ho_ensemble_len(const struct HoEnsemble *ensemble, size_t *out_len);

/**
 * Recorded row `index`.
 *
 * # Safety
 * `ensemble` must be a live handle and `out_row` valid.
 */
enum HoStatus ho_ensemble_row(const struct HoEnsemble *ensemble,
                              size_t index,
                              struct HoEnsembleRow *out_row);

/**
 * Releases an ensemble handle. Null is ignored.
 *
 * # Safety
 * `ensemble` must come from [`ho_simulate`] and not be freed twice.
 */
void ho_ensemble_free(struct HoEnsemble *ensemble);

/**
 * Builds a classical-quantum parameter set. A non-positive `d0` selects
 * the saturated trade-off `D0 = 1/(4D)`.
 *
 * # Safety
 * `out_cq` must be a valid handle slot.
 */
enum HoStatus ho_cq_new(double m_c,
                        double k_c,
                        double alpha,
                        double d,
                        double m_q,
                        double k_q,
                        double lambda,
                        double d0,
                        double hbar,
                        struct HoCq **out_cq);

/**
 * Releases a classical-quantum handle. Null is ignored.
 *
 * # Safety
 * `cq` must come from [`ho_cq_new`] and not be freed twice.
 */
void ho_cq_free(struct HoCq *cq);

/**
 * Classical system equivalent to the hybrid one, as a new handle.
 *
 * # Safety
 * `cq` must be a live handle and `out_system` a valid handle slot.
 */
enum HoStatus ho_cq_map_to_classical(const struct HoCq *cq, struct HoSystem **out_system);

/**
 * Occupation number and temperature of the quantum oscillator.
 *
 * # Safety
 * `cq` must be a live handle and `out_occupation` valid.
 */
enum HoStatus ho_cq_occupation(const struct HoCq *cq, struct HoOccupation *out_occupation);

/**
 * Occupation from the stationary second moments of the quantum oscillator.
 *
 * # Safety
 * `cq` must be a live handle and `out_value` valid.
 */
enum HoStatus ho_cq_keldysh_occupation(const struct HoCq *cq, double *out_value);

/**
 * Equal-time hybrid covariance in `(q, p, Q, P)` order.
 *
 * # Safety
 * `cq` must be a live handle and `out_cov` must hold 16 doubles.
 */
enum HoStatus ho_cq_equal_time(const struct HoCq *cq, double *out_cov);

/**
 * Hybrid two-point functions for identical underdamped oscillators on a
 * time grid. Each output holds `n` doubles: `<<q q>>`, the Keldysh
 * function, the classical response and the imaginary quantum response.
 *
 * # Safety
 * `cq` must be a live handle; `times` and every output hold `n` doubles.
 */
enum HoStatus ho_cq_correlators(const struct HoCq *cq,
                                const double *times,
                                size_t n,
                                double *out_qq,
                                double *out_keldysh,
                                double *out_classical_response,
                                double *out_quantum_response_imag);

/**
 * Deviation of the hybrid stationary state from the classical Gibbs state
 * at `T_C`, in the scaled covariance metric.
 *
 * # Safety
 * `cq` must be a live handle and `out_value` valid.
 */
enum HoStatus ho_cq_gibbs_deviation(const struct HoCq *cq, double *out_value);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HYBRID_OSC_H */
