#pragma once

#include <string>
#include <vector>

#include "qrlob/core.hpp"
#include "qrlob/law.hpp"

namespace qrlob {

/// Closed-form invariant law of one independent queue (birth-death balance):
/// the odds ratio at size n is arrival(n) / departure(n + 1). Truncates when
/// the residual tail falls below `tail_tol` or at `n_trunc`, whichever comes
/// first. Throws NonErgodic when the partial sums diverge.
StationaryLaw invariant_model_I(const IntensityModel& model, int distance, int n_trunc = 4096,
                                double tail_tol = 1e-12);

/// Level/phase rate blocks of the first-two-queues chain: the first queue'
/// size is the level, the second queue's size the phase (0..n_phase-1).
/// Level moves use the size-averaged first-queue rates; the boundary block
/// uses the first-queue-empty intensities of the second queue. Phase outflow
/// past the truncation is redirected to the first column of its block.
struct QbdBlocks {
  int n_phase = 0;
  double lambda1 = 0;  // averaged arrival rate at the first queue
  double mu1 = 0;      // averaged departure rate at the first queue
  std::vector<double> a0;       // level up, n_phase x n_phase, row-major
  std::vector<double> a1;       // within-level, levels >= 1
  std::vector<double> a1_boundary;  // within-level at level 0
  std::vector<double> a2;       // level down
};

QbdBlocks build_qbd_blocks(const IntensityModel& model, int n_phase = 60);

struct QbdDiagnostics {
  int iterations = 0;
  double residual = 0;          // sup-norm of pi * Q on the truncated chain
  double spectral_radius = 0;   // of the rate matrix R
  double tail_mass = 0;         // level mass dropped by truncation
};

/// Matrix-geometric solve of the level/phase chain. Returns the joint law of
/// (first queue, second queue) truncated to the returned shape.
StationaryLaw solve_qbd(const QbdBlocks& blocks, double tol = 1e-12, int max_iters = 100000,
                        QbdDiagnostics* diag = nullptr);

struct McConfig {
  double horizon_s = 3600;
  double burn_in_s = -1;        // < 0 means 10% of the horizon
  int n_paths = 1;
  uint64_t seed = 0;
  int jobs = 1;
  int hist_cap = 256;           // histogram support cap per axis
  LobState initial;             // default: empty book
};

struct McInvariantResult {
  std::vector<StationaryLaw> marginal;  // per distance, both sides pooled
  StationaryLaw joint12;                // (first, second) queue, sides pooled
  StationaryLaw joint_m11;              // (bid-1, ask-1)
  double ess = 0;                       // batch-means effective sample size
  int64_t n_events = 0;
};

/// Occupation-time estimate of the invariant law from simulated paths.
McInvariantResult invariant_monte_carlo(const IntensityModel& model, const McConfig& cfg);

std::string dump_qbd_diagnostics(const QbdDiagnostics& d);

}  // namespace qrlob
