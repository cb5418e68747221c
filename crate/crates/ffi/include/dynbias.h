#ifndef DYNBIAS_H
#define DYNBIAS_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum DbStatus {
  DB_STATUS_OK = 0,
  DB_STATUS_NULL_POINTER = 1,
  DB_STATUS_INVALID_ARGUMENT = 2,
  DB_STATUS_DIVERGED = 3,
  DB_STATUS_BUFFER_TOO_SMALL = 4,
  DB_STATUS_INTERNAL = 5,
} DbStatus;

// Dynamical system plus time discretization.
typedef struct DbEncoder DbEncoder;

// Encoded trajectory of shape features × frames × 3.
typedef struct DbTrajectory DbTrajectory;

typedef struct DbSpectrum {
  double centroid;
  double entropy;
  double dominant_freq;
} DbSpectrum;

typedef struct DbLyapunov {
  // Sorted descending.
  double exponents[3];
  double sum;
  bool converged;
  // True when the orbit from the mapped state diverged and the origin was used.
  bool used_origin;
} DbLyapunov;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or NULL. Valid until the
// next call into this library from the same thread.
const char *db_last_error(void);

// Library version as a static NUL-terminated string.
const char *db_version(void);

// Duffing encoder with damping `delta`, evolved for `t_total` over `n_steps` frames.
enum DbStatus db_encoder_new_duffing(double delta,
                                     double t_total,
                                     uintptr_t n_steps,
                                     struct DbEncoder **out);

enum DbStatus db_encoder_new_lorenz(double rho,
                                    double t_total,
                                    uintptr_t n_steps,
                                    struct DbEncoder **out);

enum DbStatus db_encoder_new_thomas(double b,
                                    double t_total,
                                    uintptr_t n_steps,
                                    struct DbEncoder **out);

// Releases an encoder. NULL is ignored.
void db_encoder_free(struct DbEncoder *enc);

// Frames per encoded feature.
uintptr_t db_encoder_frames(const struct DbEncoder *enc);

// Encodes `d` features into a new trajectory handle.
enum DbStatus db_encode(const struct DbEncoder *enc,
                        const double *x,
                        uintptr_t d,
                        struct DbTrajectory **out);

// Releases a trajectory. NULL is ignored.
void db_trajectory_free(struct DbTrajectory *traj);

// Writes the feature and frame counts; the state dimension is always 3.
enum DbStatus db_trajectory_shape(const struct DbTrajectory *traj,
                                  uintptr_t *features,
                                  uintptr_t *frames);

// Copies the row-major (feature, frame, dim) data into `out`, which must
// hold features × frames × 3 values.
enum DbStatus db_trajectory_copy(const struct DbTrajectory *traj, double *out, uintptr_t len);

// Active information storage in bits with `bins` equal-width bins.
enum DbStatus db_trajectory_ais(const struct DbTrajectory *traj, uintptr_t bins, double *out);

// Welch spectral centroid, normalized entropy and dominant frequency,
// averaged over features and the three dimensions.
enum DbStatus db_trajectory_spectrum(const struct DbTrajectory *traj, struct DbSpectrum *out);

// Lyapunov spectrum of the Duffing system from the state mapped from `x`,
// with the default integration settings.
enum DbStatus db_lyapunov_duffing(double delta, double x, struct DbLyapunov *out);

// KL(q ‖ p) in nats between a diagonal Gaussian q and the isotropic prior N(0, var_p).
enum DbStatus db_kl_gaussian(const double *mu,
                             const double *var_q,
                             uintptr_t n,
                             double var_p,
                             double *out);

// McAllester bound on the true error.
enum DbStatus db_pac_bound(double train_error,
                           double kl,
                           uintptr_t m,
                           double delta_conf,
                           double *out);

// Variance of the dynamics-induced prior for damping `delta`.
double db_prior_variance(double delta);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DYNBIAS_H */
