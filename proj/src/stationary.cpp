#include "qrlob/stationary.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "json.hpp"
#include "qrlob/rng.hpp"

namespace qrlob {

namespace {
constexpr auto L = EventType::LimitInsert;
constexpr auto C = EventType::Cancel;
constexpr auto M = EventType::MarketOrder;
}  // namespace

StationaryLaw invariant_model_I(const IntensityModel& model, int distance, int n_trunc,
                                double tail_tol) {
  if (distance < 1 || distance > model.K)
    throw InputError("invariant law: distance out of range");
  if (model.kind != ModelKind::ModelI && model.kind != ModelKind::PoissonBaseline)
    throw InputError("invariant law: closed form needs per-queue tables");

  auto arrival = [&](int n) { return model.rate(distance, 0, L, n); };
  auto departure = [&](int n) {
    return model.rate(distance, 0, C, n) + model.rate(distance, 0, M, n);
  };

  std::vector<double> w;
  w.reserve(std::min(n_trunc, 1024));
  w.push_back(1.0);
  double acc = 1.0;
  double tail = 0.0;
  std::string method = "n_trunc";

  for (int n = 1; n < n_trunc; ++n) {
    const double f = arrival(n - 1);
    if (f == 0.0) {
      method = "absorbed";
      break;
    }
    const double g = departure(n);
    if (!(g > 0)) throw NonErgodic("invariant law: zero departure rate at size " + std::to_string(n));
    const double rho = f / g;
    const double next = w.back() * rho;
    if (!std::isfinite(next) || next > 1e250)
      throw NonErgodic("invariant law: partial sums diverge");
    w.push_back(next);
    acc += next;
    if (n >= model.cap) {
      const double rho_inf = arrival(model.cap) / departure(model.cap);
      if (rho_inf >= 1.0)
        throw NonErgodic("invariant law: odds ratio at the cap is " + std::to_string(rho_inf));
      tail = next * rho_inf / (1.0 - rho_inf);
      if (tail <= tail_tol * (acc + tail)) {
        method = "tail_tol";
        break;
      }
    }
  }

  int last = static_cast<int>(w.size()) - 1;
  while (last > 0 && w[last] == 0.0) --last;

  StationaryLaw law = StationaryLaw::zeros(last + 1);
  for (int i = 0; i <= last; ++i) law.ref(i) = w[i];
  law.normalize();
  law.meta.n_trunc = last + 1;
  law.meta.method = method;
  law.meta.tail_mass = tail / (acc + tail);
  return law;
}

QbdBlocks build_qbd_blocks(const IntensityModel& model, int n_phase) {
  if (model.kind != ModelKind::ModelIIa)
    throw InputError("level/phase blocks need a first-queue-switching model");
  if (model.K < 2) throw InputError("level/phase blocks need K >= 2");
  if (n_phase < 2) throw InputError("level/phase blocks need at least 2 phases");

  QbdBlocks b;
  b.n_phase = n_phase;

  double lam = 0;
  for (int k = 0; k <= model.cap; ++k) lam += model.rate(1, 0, L, k);
  b.lambda1 = lam / (model.cap + 1);

  double mu = 0;
  for (int k = 1; k <= model.cap; ++k)
    mu += model.rate(1, 0, C, k) + model.rate(1, 0, M, k);
  b.mu1 = mu / model.cap;

  if (!(b.lambda1 < b.mu1))
    throw AssumptionViolated("averaged first-queue arrival rate " + std::to_string(b.lambda1) +
                             " is not below the departure rate " + std::to_string(b.mu1));

  const int n = n_phase;
  b.a0.assign(static_cast<size_t>(n) * n, 0.0);
  b.a2.assign(static_cast<size_t>(n) * n, 0.0);
  b.a1.assign(static_cast<size_t>(n) * n, 0.0);
  b.a1_boundary.assign(static_cast<size_t>(n) * n, 0.0);
  auto at = [n](std::vector<double>& m, int i, int j) -> double& {
    return m[static_cast<size_t>(i) * n + j];
  };

  for (int j = 0; j < n; ++j) {
    at(b.a0, j, j) = b.lambda1;
    at(b.a2, j, j) = b.mu1;

    // Interior levels: second-queue flow in the first-queue-occupied regime.
    {
      const double up = model.rate(2, 1, L, j);
      const double down = j > 0 ? model.rate(2, 1, C, j) : 0.0;
      at(b.a1, j, j) -= b.lambda1 + b.mu1 + up + down;
      at(b.a1, j, j + 1 < n ? j + 1 : 0) += up;  // redirect past the truncation
      if (j > 0) at(b.a1, j, j - 1) += down;
    }
    // Boundary level: first queue empty, market orders reach the second queue.
    {
      const double up = model.rate(2, 0, L, j);
      const double down = j > 0 ? model.rate(2, 0, C, j) + model.rate(2, 0, M, j) : 0.0;
      at(b.a1_boundary, j, j) -= b.lambda1 + up + down;
      at(b.a1_boundary, j, j + 1 < n ? j + 1 : 0) += up;
      if (j > 0) at(b.a1_boundary, j, j - 1) += down;
    }
  }
  return b;
}

StationaryLaw solve_qbd(const QbdBlocks& blocks, double tol, int max_iters, QbdDiagnostics* diag) {
  using Eigen::MatrixXd;
  using Eigen::VectorXd;
  const int n = blocks.n_phase;
  auto as_matrix = [n](const std::vector<double>& v) {
    MatrixXd m(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) m(i, j) = v[static_cast<size_t>(i) * n + j];
    return m;
  };
  const MatrixXd A0 = as_matrix(blocks.a0);
  const MatrixXd A1 = as_matrix(blocks.a1);
  const MatrixXd A1b = as_matrix(blocks.a1_boundary);
  const MatrixXd A2 = as_matrix(blocks.a2);

  const MatrixXd A1inv = A1.partialPivLu().inverse();

  MatrixXd R = MatrixXd::Zero(n, n);
  int iters = 0;
  double delta = 0;
  for (; iters < max_iters; ++iters) {
    const MatrixXd next = -(A0 + R * R * A2) * A1inv;
    delta = (next - R).cwiseAbs().maxCoeff();
    R = next;
    if (delta < tol) break;
  }
  if (delta >= tol)
    throw NoConvergence("rate-matrix iteration stalled at delta " + std::to_string(delta));

  const double spectral = R.eigenvalues().cwiseAbs().maxCoeff();
  if (spectral >= 1.0)
    throw Unstable("rate matrix spectral radius " + std::to_string(spectral));

  // Boundary balance: [pi0 pi1] * [[A1b, A0], [A2, A1 + R A2]] = 0, with the
  // normalization pi0 * 1 + pi1 * (I - R)^-1 * 1 = 1 replacing one equation.
  const MatrixXd geom = (MatrixXd::Identity(n, n) - R).partialPivLu().inverse();
  MatrixXd B(2 * n, 2 * n);
  B.topLeftCorner(n, n) = A1b;
  B.topRightCorner(n, n) = A0;
  B.bottomLeftCorner(n, n) = A2;
  B.bottomRightCorner(n, n) = A1 + R * A2;

  MatrixXd sys = B.transpose();
  VectorXd rhs = VectorXd::Zero(2 * n);
  const VectorXd ones = VectorXd::Ones(n);
  VectorXd weights(2 * n);
  weights.head(n) = ones;
  weights.tail(n) = geom * ones;
  sys.row(2 * n - 1) = weights.transpose();
  rhs(2 * n - 1) = 1.0;
  const VectorXd x = sys.partialPivLu().solve(rhs);

  VectorXd pi0 = x.head(n);
  VectorXd pi1 = x.tail(n);

  // Accumulate levels until the geometric tail is negligible.
  std::vector<VectorXd> levels;
  levels.push_back(pi0);
  levels.push_back(pi1);
  double acc = pi0.sum() + pi1.sum();
  VectorXd cur = pi1;
  const int max_levels = 100000;
  double tail = std::abs(1.0 - acc);
  for (int k = 2; k < max_levels; ++k) {
    cur = (cur.transpose() * R).transpose();
    const double mass = cur.sum();
    levels.push_back(cur);
    acc += mass;
    tail = (cur.transpose() * geom).dot(ones) - mass;  // exact remaining mass
    if (tail < 1e-12) break;
  }

  const int n_levels = static_cast<int>(levels.size());
  StationaryLaw law = StationaryLaw::zeros(n_levels, n);
  for (int k = 0; k < n_levels; ++k)
    for (int j = 0; j < n; ++j) law.ref(k, j) = std::max(0.0, levels[k](j));
  law.normalize();
  law.meta.n_trunc = n_levels;
  law.meta.method = "matrix_geometric";
  law.meta.tail_mass = std::max(0.0, tail);

  if (diag) {
    diag->iterations = iters + 1;
    diag->spectral_radius = spectral;
    diag->tail_mass = std::max(0.0, tail);

    // Residual of the solved mass on the level-truncated chain, with the lost
    // level-up flow redirected to the first level block.
    std::vector<VectorXd> cols(n_levels, VectorXd::Zero(n));
    auto add = [&](int lvl, const MatrixXd& block, const VectorXd& pi) {
      if (lvl < 0 || lvl >= n_levels) return;
      cols[lvl] += (pi.transpose() * block).transpose();
    };
    for (int k = 0; k < n_levels; ++k) {
      const VectorXd& pi = levels[k];
      if (k == 0) {
        add(0, A1b, pi);
        add(1, A0, pi);
      } else {
        add(k - 1, A2, pi);
        add(k, A1, pi);
        if (k + 1 < n_levels)
          add(k + 1, A0, pi);
        else
          add(0, A0, pi);
      }
    }
    double resid = 0;
    for (const auto& c : cols) resid = std::max(resid, c.cwiseAbs().maxCoeff());
    diag->residual = resid;
  }
  return law;
}

McInvariantResult invariant_monte_carlo(const IntensityModel& model, const McConfig& cfg) {
  if (cfg.horizon_s <= 0) throw InputError("invariant sampling: horizon must be positive");
  if (cfg.n_paths < 1) throw InputError("invariant sampling: need at least one path");
  const double burn = cfg.burn_in_s < 0 ? 0.1 * cfg.horizon_s : cfg.burn_in_s;
  if (burn >= cfg.horizon_s) throw InputError("invariant sampling: burn-in exceeds horizon");

  LobState init = cfg.initial;
  if (init.K == 0) init = LobState::empty(model.K);
  if (init.K != model.K) throw InputError("invariant sampling: initial state depth mismatch");

  const int cap = cfg.hist_cap;
  McInvariantResult res;
  res.marginal.assign(model.K, StationaryLaw::zeros(cap + 1));
  res.joint12 = StationaryLaw::zeros(cap + 1, cap + 1);
  res.joint_m11 = StationaryLaw::zeros(cap + 1, cap + 1);

  // Batch means over the ask first queue, for the effective sample size.
  const int n_batch = 32;
  std::vector<double> batch_w, batch_wx;
  double sw = 0, swx = 0, swx2 = 0;

  std::vector<Flow> flows;
  for (int path = 0; path < cfg.n_paths; ++path) {
    Rng rng(cfg.seed, static_cast<uint64_t>(path));
    LobState st = init;
    double t = 0;
    const double span = cfg.horizon_s - burn;
    const double batch_len = span / n_batch;
    std::vector<double> bw(n_batch, 0.0), bwx(n_batch, 0.0);

    while (t < cfg.horizon_s) {
      flow_row(st, model, flows);
      double total = 0;
      for (const Flow& f : flows) total += f.rate;

      double dwell;
      bool stuck = false;
      if (total <= 0) {
        dwell = cfg.horizon_s - t;
        stuck = true;
      } else {
        dwell = rng.exponential(total);
      }
      const double t_end = std::min(t + dwell, cfg.horizon_s);
      const double lo = std::max(t, burn);
      if (t_end > lo) {
        const double w = t_end - lo;
        for (int d = 1; d <= model.K; ++d) {
          const int qa = std::min<int>(st.size_at(QueueIndex(d)), cap);
          const int qb = std::min<int>(st.size_at(QueueIndex(-d)), cap);
          res.marginal[d - 1].ref(qa) += w;
          res.marginal[d - 1].ref(qb) += w;
        }
        if (model.K >= 2) {
          const int a1 = std::min<int>(st.size_at(QueueIndex(1)), cap);
          const int a2 = std::min<int>(st.size_at(QueueIndex(2)), cap);
          const int b1 = std::min<int>(st.size_at(QueueIndex(-1)), cap);
          const int b2 = std::min<int>(st.size_at(QueueIndex(-2)), cap);
          res.joint12.ref(a1, a2) += w;
          res.joint12.ref(b1, b2) += w;
        }
        {
          const int a1 = std::min<int>(st.size_at(QueueIndex(1)), cap);
          const int b1 = std::min<int>(st.size_at(QueueIndex(-1)), cap);
          res.joint_m11.ref(b1, a1) += w;
        }
        const double x = st.size_at(QueueIndex(1));
        sw += w;
        swx += w * x;
        swx2 += w * x * x;
        // Spread the dwell across the batches it covers. Batch indices are
        // computed from the segment ends: advancing a time cursor by computed
        // boundaries can stall when a boundary rounds onto the cursor.
        const int b_lo = std::min(n_batch - 1, static_cast<int>((lo - burn) / batch_len));
        const int b_hi = std::min(n_batch - 1, static_cast<int>((t_end - burn) / batch_len));
        for (int b = b_lo; b <= b_hi; ++b) {
          const double seg_a = std::max(lo, burn + b * batch_len);
          const double seg_b = std::min(t_end, burn + (b + 1) * batch_len);
          if (seg_b <= seg_a) continue;
          bw[b] += seg_b - seg_a;
          bwx[b] += (seg_b - seg_a) * x;
        }
      }
      if (stuck) break;
      t += dwell;
      if (t >= cfg.horizon_s) break;

      double u = rng.uniform() * total;
      const Flow* pick = &flows.back();
      for (const Flow& f : flows) {
        u -= f.rate;
        if (u <= 0) {
          pick = &f;
          break;
        }
      }
      st.size_at(pick->queue) += pick->type == EventType::LimitInsert ? 1 : -1;
      ++res.n_events;
    }
    for (int b = 0; b < n_batch; ++b)
      if (bw[b] > 0) {
        batch_w.push_back(bw[b]);
        batch_wx.push_back(bwx[b]);
      }
  }

  for (auto& m : res.marginal) {
    m.normalize();
    m.meta.method = "monte_carlo";
    m.meta.n_trunc = m.shape[0];
  }
  res.joint12.normalize();
  res.joint12.meta.method = "monte_carlo";
  res.joint_m11.normalize();
  res.joint_m11.meta.method = "monte_carlo";

  // Batch-means effective sample size of the first-queue occupation average.
  if (sw > 0 && batch_w.size() >= 2) {
    const double mean = swx / sw;
    const double var_point = std::max(swx2 / sw - mean * mean, 0.0);
    double vb = 0;
    for (size_t i = 0; i < batch_w.size(); ++i) {
      const double bm = batch_wx[i] / batch_w[i];
      vb += (bm - mean) * (bm - mean);
    }
    vb /= (batch_w.size() - 1);
    res.ess = vb > 0 ? batch_w.size() * var_point / vb : static_cast<double>(res.n_events);
    res.ess = std::max(1.0, res.ess);
  } else {
    res.ess = 1.0;
  }
  return res;
}

std::string dump_qbd_diagnostics(const QbdDiagnostics& d) {
  nlohmann::json j;
  j["iterations"] = d.iterations;
  j["residual"] = d.residual;
  j["spectral_radius"] = d.spectral_radius;
  j["tail_mass"] = d.tail_mass;
  return j.dump(2) + "\n";
}

}  // namespace qrlob
