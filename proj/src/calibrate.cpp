#include "qrlob/calibrate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "json.hpp"
#include "qrlob/csv.hpp"

namespace qrlob {

namespace {

constexpr int64_t kAnchorPrefHalf = 2001;

struct Moments {
  double mean = std::numeric_limits<double>::quiet_NaN();
  double se = std::numeric_limits<double>::quiet_NaN();
  int64_t n = 0;
};

Moments finite_moments(const std::vector<double>& xs) {
  Moments m;
  double sum = 0;
  for (double x : xs)
    if (std::isfinite(x)) {
      sum += x;
      ++m.n;
    }
  if (m.n == 0) return m;
  m.mean = sum / static_cast<double>(m.n);
  if (m.n == 1) {
    m.se = 0;
    return m;
  }
  double ss = 0;
  for (double x : xs)
    if (std::isfinite(x)) ss += (x - m.mean) * (x - m.mean);
  m.se = std::sqrt(ss / static_cast<double>(m.n - 1) / static_cast<double>(m.n));
  return m;
}

SurfaceNode run_node(const IntensityModel& model, const QueueReactiveParams& base, double theta,
                     double theta_reinit, const SurfaceConfig& cfg, uint64_t seed, int jobs,
                     double* mean_pref_changes = nullptr) {
  QueueReactiveParams params = base;
  params.theta = theta;
  params.theta_reinit = theta_reinit;
  const auto samplers = make_samplers(params.invariant_laws);

  std::vector<double> vols(cfg.n_paths), etas(cfg.n_paths);
  std::vector<int64_t> moves(cfg.n_paths);
  parallel_for(cfg.n_paths, jobs, [&](int64_t p) {
    Rng rng(seed, static_cast<uint64_t>(p));
    const LobState initial = draw_from_laws(model.K, samplers, kAnchorPrefHalf, rng);
    SimRecording rec;
    rec.mid = false;
    const SimPath path = simulate_queue_reactive(initial, model, params, cfg.horizon_s, rng, rec);
    const PathStats stats = path_stats(path, cfg.bin_s, model.tick_value);
    vols[p] = stats.vol_pref;
    etas[p] = stats.eta;
    moves[p] = stats.n_pref_changes;
  });

  SurfaceNode node;
  node.theta = theta;
  node.theta_reinit = theta_reinit;
  node.n_paths = cfg.n_paths;
  const Moments mv = finite_moments(vols);
  node.vol = mv.mean;
  node.vol_se = mv.se;
  const Moments me = finite_moments(etas);
  node.eta = me.mean;
  node.eta_se = me.se;
  if (mean_pref_changes) {
    double acc = 0;
    for (int64_t n : moves) acc += static_cast<double>(n);
    *mean_pref_changes = acc / static_cast<double>(cfg.n_paths);
  }
  return node;
}

}  // namespace

CalibrationSurface build_surface(const IntensityModel& model, const QueueReactiveParams& base,
                                 const SurfaceConfig& cfg, uint64_t seed, int jobs) {
  if (cfg.thetas.empty() || cfg.theta_reinits.empty())
    throw InputError("the calibration grid must be nonempty");
  for (double v : cfg.thetas)
    if (!(v >= 0 && v <= 1)) throw InputError("grid theta values must lie in [0, 1]");
  for (double v : cfg.theta_reinits)
    if (!(v >= 0 && v <= 1)) throw InputError("grid theta_reinit values must lie in [0, 1]");
  if (cfg.n_paths < 1) throw InputError("need at least one path per node");
  if (cfg.bin_s <= 0 || cfg.horizon_s < cfg.bin_s)
    throw InputError("horizon must cover at least one volatility bin");

  CalibrationSurface surface;
  surface.thetas = cfg.thetas;
  surface.theta_reinits = cfg.theta_reinits;
  surface.nodes.reserve(cfg.thetas.size() * cfg.theta_reinits.size());
  for (double theta : cfg.thetas)
    for (double tr : cfg.theta_reinits)
      surface.nodes.push_back(run_node(model, base, theta, tr, cfg, seed, jobs));
  return surface;
}

MechanicalVol mechanical_volatility(const IntensityModel& model, const QueueReactiveParams& base,
                                    const SurfaceConfig& cfg, uint64_t seed, int jobs) {
  if (cfg.n_paths < 1) throw InputError("need at least one path per node");
  if (cfg.bin_s <= 0 || cfg.horizon_s < cfg.bin_s)
    throw InputError("horizon must cover at least one volatility bin");
  MechanicalVol out;
  const SurfaceNode node = run_node(model, base, 1.0, 0.0, cfg, seed, jobs, &out.mean_pref_changes);
  out.vol = node.vol;
  out.vol_se = node.vol_se;
  out.n_paths = cfg.n_paths;
  return out;
}

namespace {

// Squared relative misfit; absolute when the target is zero, dropped when the
// target itself is missing.
double misfit(double value, double target) {
  if (std::isnan(target)) return 0;
  if (std::isnan(value)) return std::numeric_limits<double>::infinity();
  const double d = value - target;
  return target != 0 ? (d / target) * (d / target) : d * d;
}

}  // namespace

InversionResult invert(const CalibrationSurface& surface, double target_vol, double target_eta) {
  const int ni = static_cast<int>(surface.thetas.size());
  const int nj = static_cast<int>(surface.theta_reinits.size());
  if (ni == 0 || nj == 0 || static_cast<int>(surface.nodes.size()) != ni * nj)
    throw InputError("surface grid is empty or not rectangular");

  InversionResult best;
  best.residual = std::numeric_limits<double>::infinity();
  auto consider = [&](double theta, double tr, double vol, double eta) {
    const double obj = misfit(vol, target_vol) + misfit(eta, target_eta);
    if (obj < best.residual) {
      best.residual = obj;
      best.theta = theta;
      best.theta_reinit = tr;
      best.vol = vol;
      best.eta = eta;
    }
  };

  for (int i = 0; i < ni; ++i)
    for (int j = 0; j < nj; ++j) {
      const SurfaceNode& n = surface.at(i, j);
      consider(n.theta, n.theta_reinit, n.vol, n.eta);
    }

  constexpr int kSub = 20;  // per-cell subdivisions of the bilinear patch
  const bool need_eta = !std::isnan(target_eta);
  for (int i = 0; i < std::max(1, ni - 1); ++i)
    for (int j = 0; j < std::max(1, nj - 1); ++j) {
      const int i1 = std::min(i + 1, ni - 1);
      const int j1 = std::min(j + 1, nj - 1);
      const SurfaceNode& n00 = surface.at(i, j);
      const SurfaceNode& n10 = surface.at(i1, j);
      const SurfaceNode& n01 = surface.at(i, j1);
      const SurfaceNode& n11 = surface.at(i1, j1);
      if (need_eta && (std::isnan(n00.eta) || std::isnan(n10.eta) || std::isnan(n01.eta) ||
                       std::isnan(n11.eta)))
        continue;
      for (int a = 0; a <= kSub; ++a)
        for (int b = 0; b <= kSub; ++b) {
          const double s = static_cast<double>(a) / kSub;
          const double u = static_cast<double>(b) / kSub;
          auto lerp2 = [&](double v00, double v10, double v01, double v11) {
            return (1 - s) * (1 - u) * v00 + s * (1 - u) * v10 + (1 - s) * u * v01 +
                   s * u * v11;
          };
          consider((1 - s) * n00.theta + s * n10.theta,
                   (1 - u) * n00.theta_reinit + u * n01.theta_reinit,
                   lerp2(n00.vol, n10.vol, n01.vol, n11.vol),
                   lerp2(n00.eta, n10.eta, n01.eta, n11.eta));
        }
    }

  double vol_lo = std::numeric_limits<double>::infinity(), vol_hi = -vol_lo;
  double eta_lo = vol_lo, eta_hi = -vol_lo;
  for (const SurfaceNode& n : surface.nodes) {
    if (std::isfinite(n.vol)) {
      vol_lo = std::min(vol_lo, n.vol);
      vol_hi = std::max(vol_hi, n.vol);
    }
    if (std::isfinite(n.eta)) {
      eta_lo = std::min(eta_lo, n.eta);
      eta_hi = std::max(eta_hi, n.eta);
    }
  }
  if (!std::isnan(target_vol) && std::isfinite(vol_hi)) {
    if (target_vol > vol_hi) {
      best.out_of_range = true;
      best.warning = "target volatility " + csv::fmt(target_vol) +
                     " exceeds the maximal attainable (mechanical) volatility " +
                     csv::fmt(vol_hi) + " on this surface; returning the boundary fit";
    } else if (target_vol < vol_lo) {
      best.out_of_range = true;
      best.warning = "target volatility " + csv::fmt(target_vol) +
                     " lies below the smallest surface value " + csv::fmt(vol_lo) +
                     "; returning the boundary fit";
    }
  }
  if (!std::isnan(target_eta) && std::isfinite(eta_hi) &&
      (target_eta > eta_hi || target_eta < eta_lo)) {
    best.out_of_range = true;
    if (!best.warning.empty()) best.warning += "; ";
    best.warning += "target mean-reversion ratio " + csv::fmt(target_eta) +
                    " lies outside the surface range [" + csv::fmt(eta_lo) + ", " +
                    csv::fmt(eta_hi) + "]";
  }
  return best;
}

std::string dump_surface_csv(const CalibrationSurface& surface) {
  std::string out = "theta,theta_reinit,vol,vol_se,eta,eta_se,n_paths\n";
  for (const SurfaceNode& n : surface.nodes)
    out += csv::fmt(n.theta) + ',' + csv::fmt(n.theta_reinit) + ',' + csv::fmt(n.vol) + ',' +
           csv::fmt(n.vol_se) + ',' + csv::fmt(n.eta) + ',' + csv::fmt(n.eta_se) + ',' +
           csv::fmt(n.n_paths) + '\n';
  return out;
}

CalibrationSurface parse_surface_csv(const std::string& text) {
  const auto rows = csv::lines(text);
  if (rows.empty() || rows[0] != "theta,theta_reinit,vol,vol_se,eta,eta_se,n_paths")
    throw InputError("surface csv: unexpected header");
  std::map<std::pair<double, double>, SurfaceNode> by_key;
  for (size_t r = 1; r < rows.size(); ++r) {
    const auto f = csv::split(rows[r]);
    if (f.size() != 7) throw InputError("surface csv row " + std::to_string(r + 1) +
                                        ": expected 7 fields");
    SurfaceNode n;
    const std::string tag = "surface csv row " + std::to_string(r + 1);
    n.theta = csv::to_double(f[0], tag);
    n.theta_reinit = csv::to_double(f[1], tag);
    n.vol = csv::to_double(f[2], tag);
    n.vol_se = csv::to_double(f[3], tag);
    n.eta = csv::to_double(f[4], tag);
    n.eta_se = csv::to_double(f[5], tag);
    n.n_paths = csv::to_i64(f[6], tag);
    by_key[{n.theta, n.theta_reinit}] = n;
  }
  CalibrationSurface surface;
  for (const auto& [key, node] : by_key) {
    if (surface.thetas.empty() || surface.thetas.back() != key.first)
      surface.thetas.push_back(key.first);
  }
  std::sort(surface.thetas.begin(), surface.thetas.end());
  surface.thetas.erase(std::unique(surface.thetas.begin(), surface.thetas.end()),
                       surface.thetas.end());
  for (const auto& [key, node] : by_key) surface.theta_reinits.push_back(key.second);
  std::sort(surface.theta_reinits.begin(), surface.theta_reinits.end());
  surface.theta_reinits.erase(
      std::unique(surface.theta_reinits.begin(), surface.theta_reinits.end()),
      surface.theta_reinits.end());
  if (by_key.size() != surface.thetas.size() * surface.theta_reinits.size())
    throw InputError("surface csv: grid is not rectangular");
  for (double theta : surface.thetas)
    for (double tr : surface.theta_reinits) {
      const auto it = by_key.find({theta, tr});
      if (it == by_key.end()) throw InputError("surface csv: grid is not rectangular");
      surface.nodes.push_back(it->second);
    }
  return surface;
}

std::string dump_inversion_json(const InversionResult& r) {
  nlohmann::json j;
  j["theta"] = r.theta;
  j["theta_reinit"] = r.theta_reinit;
  j["vol"] = r.vol;
  j["eta"] = std::isnan(r.eta) ? nlohmann::json() : nlohmann::json(r.eta);
  j["residual"] = r.residual;
  j["out_of_range"] = r.out_of_range;
  j["warning"] = r.warning;
  return j.dump(2) + "\n";
}

}  // namespace qrlob
