#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "qrlob/simulate.hpp"

namespace qrlob {

struct SurfaceNode {
  double theta = 0;
  double theta_reinit = 0;
  double vol = 0;        // reference-price return std per bin, path mean
  double vol_se = 0;
  double eta = 0;        // NaN when no path produced a defined ratio
  double eta_se = 0;
  int64_t n_paths = 0;
};

struct CalibrationSurface {
  std::vector<double> thetas;
  std::vector<double> theta_reinits;
  std::vector<SurfaceNode> nodes;  // row-major over (theta, theta_reinit)

  const SurfaceNode& at(int i, int j) const {
    return nodes[static_cast<size_t>(i) * theta_reinits.size() + j];
  }
};

struct SurfaceConfig {
  std::vector<double> thetas;
  std::vector<double> theta_reinits;
  double horizon_s = 28800;
  double bin_s = 600;
  int64_t n_paths = 200;
};

/// Ensemble statistics of (vol, eta) per grid node. Paths start from a book
/// drawn from the invariant laws and are keyed (seed, path index), so node
/// columns share innovations.
CalibrationSurface build_surface(const IntensityModel& model, const QueueReactiveParams& base,
                                 const SurfaceConfig& cfg, uint64_t seed, int jobs = 1);

struct InversionResult {
  double theta = 0;
  double theta_reinit = 0;
  double vol = 0;
  double eta = 0;
  double residual = 0;    // squared relative error at the optimum
  bool out_of_range = false;
  std::string warning;
};

/// Bilinear interpolation of the surface, minimizing the squared relative
/// error against the targets over a fine mesh; exact node hits win.
InversionResult invert(const CalibrationSurface& surface, double target_vol, double target_eta);

struct MechanicalVol {
  double vol = 0;
  double vol_se = 0;
  double mean_pref_changes = 0;
  int64_t n_paths = 0;
};

/// Volatility ceiling of pure order-flow randomness: theta = 1 with no
/// reinitialization.
MechanicalVol mechanical_volatility(const IntensityModel& model, const QueueReactiveParams& base,
                                    const SurfaceConfig& cfg, uint64_t seed, int jobs = 1);

/// theta,theta_reinit,vol,vol_se,eta,eta_se,n_paths
std::string dump_surface_csv(const CalibrationSurface& surface);
CalibrationSurface parse_surface_csv(const std::string& text);
std::string dump_inversion_json(const InversionResult& r);

}  // namespace qrlob
