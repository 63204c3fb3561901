#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "qrlob/analytics.hpp"
#include "qrlob/calibrate.hpp"
#include "qrlob/core.hpp"
#include "qrlob/csv.hpp"
#include "qrlob/errors.hpp"
#include "qrlob/estimate.hpp"
#include "qrlob/fsio.hpp"
#include "qrlob/ingest.hpp"
#include "qrlob/law.hpp"
#include "qrlob/manifest.hpp"
#include "qrlob/simulate.hpp"
#include "qrlob/stationary.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace qrlob;

namespace {

struct Global {
  uint64_t seed = 0;
  bool seed_given = false;
  int jobs = 1;
  std::string out = ".";
  std::string config_path;
};

struct ErrorClass {
  const char* name;
  int exit_code;
};

ErrorClass classify(const Error& e) {
  if (dynamic_cast<const NoConvergence*>(&e)) return {"NoConvergence", 4};
  if (dynamic_cast<const NonErgodic*>(&e)) return {"NonErgodic", 3};
  if (dynamic_cast<const AssumptionViolated*>(&e)) return {"AssumptionViolated", 3};
  if (dynamic_cast<const UnknownRegime*>(&e)) return {"UnknownRegime", 3};
  if (dynamic_cast<const DegenerateLaw*>(&e)) return {"DegenerateLaw", 3};
  if (dynamic_cast<const Absorbing*>(&e)) return {"Absorbing", 3};
  if (dynamic_cast<const Unstable*>(&e)) return {"Unstable", 3};
  if (dynamic_cast<const CrossedBook*>(&e)) return {"CrossedBook", 2};
  if (dynamic_cast<const InsufficientData*>(&e)) return {"InsufficientData", 2};
  if (dynamic_cast<const NoData*>(&e)) return {"NoData", 2};
  if (dynamic_cast<const NoTrades*>(&e)) return {"NoTrades", 2};
  if (dynamic_cast<const BadInitial*>(&e)) return {"BadInitial", 2};
  return {"InputError", 2};
}

void write_out(const Global& g, const std::string& name, const std::string& text) {
  fs::create_directories(g.out);
  write_file_atomic((fs::path(g.out) / name).string(), text);
}

// Config files are validated key by key before anything runs; the accepted
// keys and types per subcommand are mirrored in docs/schemas/.
json read_config(const std::string& path, const std::string& subcommand,
                 const std::map<std::string, const char*>& schema) {
  if (path.empty()) return json::object();
  json cfg;
  try {
    cfg = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw InputError("config " + path + ": " + e.what());
  }
  if (!cfg.is_object()) throw InputError("config " + path + ": top level must be an object");
  for (const auto& [key, value] : cfg.items()) {
    const auto it = schema.find(key);
    if (it == schema.end())
      throw InputError("config " + path + ": unknown key \"" + key + "\" for " + subcommand);
    const std::string want = it->second;
    const bool ok = (want == "number" && value.is_number()) ||
                    (want == "integer" && value.is_number_integer()) ||
                    (want == "string" && value.is_string()) ||
                    (want == "boolean" && value.is_boolean()) ||
                    (want == "array" && value.is_array());
    if (!ok)
      throw InputError("config " + path + ": key \"" + key + "\" must be a " + want);
  }
  return cfg;
}

// A config value fills any option the command line left at its default.
template <typename T>
void cfg_fill(const json& cfg, const char* key, CLI::App* sub, const std::string& flag, T& slot) {
  if (cfg.contains(key) && sub->count(flag) == 0) slot = cfg[key].get<T>();
}

void finish(const Global& g, const std::string& subcommand, const json& effective_config,
            const std::map<std::string, std::string>& inputs) {
  RunManifest m = make_manifest(subcommand, effective_config.dump(2), inputs, g.seed);
  write_manifest(m, g.out);
}

std::vector<StationaryLaw> load_laws_dir(const std::string& dir, int K) {
  std::vector<StationaryLaw> laws;
  for (int d = 1; d <= K; ++d) {
    const fs::path p = fs::path(dir) / ("law_marginal_d" + std::to_string(d) + ".csv");
    if (!fs::exists(p))
      throw InputError("laws: missing " + p.string());
    laws.push_back(load_law_csv(p.string()));
  }
  return laws;
}

QueueReactiveParams make_params(const IntensityModel& model, const std::string& laws_dir,
                                double theta, double theta_reinit) {
  QueueReactiveParams params;
  params.theta = theta;
  params.theta_reinit = theta_reinit;
  params.invariant_laws = load_laws_dir(laws_dir, model.K);
  params.aes = model.aes;
  params.validate(model.K);
  return params;
}

std::vector<double> linspace01(int n) {
  std::vector<double> v;
  if (n <= 1) return {0.0};
  v.reserve(n);
  for (int i = 0; i < n; ++i) v.push_back(static_cast<double>(i) / (n - 1));
  return v;
}

constexpr int64_t kCliAnchorPrefHalf = 2001;

// ---------------------------------------------------------------- ingest

int cmd_ingest(const Global& g, CLI::App* sub, std::string in, int k, std::string session,
               double tick, double law_period) {
  static const std::map<std::string, const char*> schema = {
      {"in", "string"},          {"k", "integer"},
      {"session", "string"},     {"tick_value", "number"},
      {"law_period_s", "number"}};
  const json cfg = read_config(g.config_path, "ingest", schema);
  cfg_fill(cfg, "in", sub, "--in", in);
  cfg_fill(cfg, "k", sub, "--k", k);
  cfg_fill(cfg, "session", sub, "--session", session);
  cfg_fill(cfg, "tick_value", sub, "--tick", tick);
  cfg_fill(cfg, "law_period_s", sub, "--law-period", law_period);
  if (in.empty()) throw InputError("ingest: --in is required");

  IngestOptions opt;
  opt.K = k;
  opt.tick_value = tick;
  opt.law_period_s = law_period;
  opt.session = parse_session(session);

  bool has_trades = false;
  const auto snapshots = parse_l2_csv(read_file(in), opt, &has_trades);
  opt.has_trades = has_trades;
  const IngestResult res = ingest_stream(snapshots, opt);

  write_out(g, "events_per_queue.csv", dump_events_csv(res.per_queue, Scope::PerQueue));
  write_out(g, "events_pair12.csv", dump_events_csv(res.pair12, Scope::Pair12));
  write_out(g, "events_pair_m11.csv", dump_events_csv(res.pair_m11, Scope::PairM11));
  for (int d = 1; d <= opt.K; ++d)
    write_out(g, "law_marginal_d" + std::to_string(d) + ".csv",
              dump_law_csv(res.laws.marginal[d - 1]));
  if (opt.K >= 2) write_out(g, "law_joint12.csv", dump_law_csv(res.laws.joint12));
  write_out(g, "law_joint_m11.csv", dump_law_csv(res.laws.joint_m11));
  {
    std::string pref = "ts_ns,pref_half_ticks\n";
    for (const PrefSample& p : res.pref_path)
      pref += csv::fmt(p.ts_ns) + ',' + csv::fmt(p.pref_half_ticks) + '\n';
    write_out(g, "pref_path.csv", pref);
  }
  write_out(g, "ingest_qc.json", dump_ingest_qc_json(res.qc));

  json eff = {{"in", in},   {"k", k},
              {"session", session}, {"tick_value", tick},
              {"law_period_s", law_period}, {"has_trades", has_trades}};
  finish(g, "ingest", eff, {{"l2", in}});
  std::cout << "ingest: " << res.qc.n_events_per_queue << " per-queue events across "
            << res.qc.n_epochs << " epochs -> " << g.out << "\n";
  return 0;
}

// ---------------------------------------------------------------- estimate

int cmd_estimate(const Global& g, CLI::App* sub, std::string events_dir, std::string model_sel,
                 int cap, int floor_n, int k, double tick, std::string law_file, bool force) {
  static const std::map<std::string, const char*> schema = {
      {"events_dir", "string"}, {"model", "string"},   {"cap", "integer"},
      {"floor", "integer"},     {"k", "integer"},      {"tick_value", "number"},
      {"law", "string"},        {"force", "boolean"},  {"aes", "array"}};
  const json cfg = read_config(g.config_path, "estimate", schema);
  cfg_fill(cfg, "events_dir", sub, "--events", events_dir);
  cfg_fill(cfg, "model", sub, "--model", model_sel);
  cfg_fill(cfg, "cap", sub, "--cap", cap);
  cfg_fill(cfg, "floor", sub, "--floor", floor_n);
  cfg_fill(cfg, "k", sub, "--k", k);
  cfg_fill(cfg, "tick_value", sub, "--tick", tick);
  cfg_fill(cfg, "law", sub, "--law", law_file);
  if (cfg.contains("force") && !force) force = cfg["force"].get<bool>();
  if (events_dir.empty()) throw InputError("estimate: --events is required");

  EstimateOptions opt;
  opt.c_max = cap;
  opt.n_obs_floor = floor_n;
  opt.K = k;
  opt.tick_value = tick;
  if (cfg.contains("aes")) opt.aes = cfg["aes"].get<std::vector<double>>();

  std::map<std::string, std::string> inputs;
  auto load_events = [&](const char* name) {
    const fs::path p = fs::path(events_dir) / name;
    if (!fs::exists(p)) throw InputError("estimate: missing " + p.string());
    inputs[name] = p.string();
    return parse_events_csv(read_file(p.string()));
  };
  // Event sizes measured at ingest flow into the model when not overridden.
  if (opt.aes.empty()) {
    const fs::path qc_path = fs::path(events_dir) / "ingest_qc.json";
    if (fs::exists(qc_path)) {
      const json qc = json::parse(read_file(qc_path.string()));
      if (qc.contains("aes")) opt.aes = qc["aes"].get<std::vector<double>>();
    }
  }

  EstimationResult res;
  if (model_sel == "i") {
    res = estimate_model_I(load_events("events_per_queue.csv"), opt);
  } else if (model_sel == "poisson") {
    res = estimate_poisson_baseline(load_events("events_per_queue.csv"), opt);
  } else if (model_sel == "iia") {
    res = estimate_model_IIa(load_events("events_pair12.csv"), opt,
                             load_events("events_per_queue.csv"));
  } else if (model_sel == "iib") {
    if (law_file.empty())
      law_file = (fs::path(events_dir) / "law_marginal_d1.csv").string();
    inputs["first_queue_law"] = law_file;
    const RegimeThresholds thresholds = compute_thresholds(load_law_csv(law_file));
    res = estimate_model_IIb(load_events("events_pair_m11.csv"), load_events("events_pair12.csv"),
                             thresholds, opt, load_events("events_per_queue.csv"));
  } else {
    throw InputError("estimate: --model must be one of i, iia, iib, poisson");
  }

  const ErgodicityReport erg = check_ergodicity_assumptions(res.model, res.model.cap);
  std::cout << "ergodicity: " << (erg.ok ? "ok" : "FAILED") << " (delta=" << erg.delta
            << ", h=" << erg.h << ", c_bound=" << erg.c_bound << ", worst=" << erg.worst_cell
            << ")\n";
  if (!erg.ok && !force)
    throw NonErgodic("estimated rates fail the stability check at " + erg.worst_cell +
                     " (delta=" + csv::fmt(erg.delta) + "); rerun with --force to keep them");

  write_out(g, "ci.csv", dump_ci_csv(res));
  res.model.save((fs::path(g.out) / "model.json").string());
  json qc = {{"n_events", res.qc.n_events},
             {"n_rejected", res.qc.n_rejected},
             {"n_filled_cells", res.qc.n_filled_cells},
             {"empty_regimes", res.qc.empty_regimes},
             {"ergodicity",
              {{"ok", erg.ok},
               {"delta", erg.delta},
               {"h", erg.h},
               {"c_bound", erg.c_bound},
               {"worst_cell", erg.worst_cell}}}};
  write_out(g, "estimate_qc.json", qc.dump(2) + "\n");

  json eff = {{"events_dir", events_dir}, {"model", model_sel}, {"cap", cap},
              {"floor", floor_n},         {"k", k},             {"tick_value", tick},
              {"force", force},           {"aes", opt.aes}};
  finish(g, "estimate", eff, inputs);
  std::cout << "estimate: " << res.qc.n_events << " events, " << res.cells.size()
            << " cells -> " << g.out << "\n";
  return 0;
}

// ---------------------------------------------------------------- invariant

int cmd_invariant(const Global& g, CLI::App* sub, std::string model_path, std::string method,
                  int n_phase, double tol, int max_iters, double horizon, int n_paths,
                  double burn_in, int hist_cap) {
  static const std::map<std::string, const char*> schema = {
      {"model", "string"},    {"method", "string"},   {"n_phase", "integer"},
      {"tol", "number"},      {"max_iters", "integer"}, {"horizon_s", "number"},
      {"n_paths", "integer"}, {"burn_in_s", "number"},  {"hist_cap", "integer"}};
  const json cfg = read_config(g.config_path, "invariant", schema);
  cfg_fill(cfg, "model", sub, "--model", model_path);
  cfg_fill(cfg, "method", sub, "--method", method);
  cfg_fill(cfg, "n_phase", sub, "--n-phase", n_phase);
  cfg_fill(cfg, "tol", sub, "--tol", tol);
  cfg_fill(cfg, "max_iters", sub, "--max-iters", max_iters);
  cfg_fill(cfg, "horizon_s", sub, "--horizon", horizon);
  cfg_fill(cfg, "n_paths", sub, "--paths", n_paths);
  cfg_fill(cfg, "burn_in_s", sub, "--burn-in", burn_in);
  cfg_fill(cfg, "hist_cap", sub, "--hist-cap", hist_cap);
  if (model_path.empty()) throw InputError("invariant: --model is required");

  const IntensityModel model = IntensityModel::load(model_path);
  if (method == "closed") {
    json meta;
    for (int d = 1; d <= model.K; ++d) {
      const StationaryLaw law = invariant_model_I(model, d);
      write_out(g, "law_marginal_d" + std::to_string(d) + ".csv", dump_law_csv(law));
      meta[std::to_string(d)] = {{"method", law.meta.method},
                                 {"n_trunc", law.meta.n_trunc},
                                 {"tail_mass", law.meta.tail_mass}};
    }
    write_out(g, "invariant_qc.json", meta.dump(2) + "\n");
  } else if (method == "qbd") {
    const QbdBlocks blocks = build_qbd_blocks(model, n_phase);
    QbdDiagnostics diag;
    const StationaryLaw law = solve_qbd(blocks, tol, max_iters, &diag);
    write_out(g, "law_joint12.csv", dump_law_csv(law));
    write_out(g, "law_marginal_d1.csv", dump_law_csv(law.marginal(0)));
    write_out(g, "law_marginal_d2.csv", dump_law_csv(law.marginal(1)));
    write_out(g, "qbd_diagnostics.json", dump_qbd_diagnostics(diag));
  } else if (method == "mc") {
    McConfig mc;
    mc.horizon_s = horizon;
    mc.burn_in_s = burn_in;
    mc.n_paths = n_paths;
    mc.seed = g.seed;
    mc.jobs = g.jobs;
    mc.hist_cap = hist_cap;
    const McInvariantResult res = invariant_monte_carlo(model, mc);
    for (int d = 1; d <= model.K; ++d)
      write_out(g, "law_marginal_d" + std::to_string(d) + ".csv",
                dump_law_csv(res.marginal[d - 1]));
    if (model.K >= 2) write_out(g, "law_joint12.csv", dump_law_csv(res.joint12));
    write_out(g, "law_joint_m11.csv", dump_law_csv(res.joint_m11));
    json diag = {{"ess", res.ess}, {"n_events", res.n_events}};
    write_out(g, "mc_diagnostics.json", diag.dump(2) + "\n");
  } else {
    throw InputError("invariant: --method must be one of closed, qbd, mc");
  }

  json eff = {{"model", model_path}, {"method", method},     {"n_phase", n_phase},
              {"tol", tol},          {"max_iters", max_iters}, {"horizon_s", horizon},
              {"n_paths", n_paths},  {"burn_in_s", burn_in},   {"hist_cap", hist_cap}};
  finish(g, "invariant", eff, {{"model", model_path}});
  std::cout << "invariant: method=" << method << " -> " << g.out << "\n";
  return 0;
}

// ---------------------------------------------------------------- simulate

int cmd_simulate(const Global& g, CLI::App* sub, std::string model_path, std::string laws_dir,
                 double theta, double theta_reinit, double horizon, int64_t n_paths,
                 double bin_s) {
  static const std::map<std::string, const char*> schema = {
      {"model", "string"},   {"laws", "string"},   {"theta", "number"},
      {"theta_reinit", "number"}, {"horizon_s", "number"}, {"n_paths", "integer"},
      {"bin_s", "number"}};
  const json cfg = read_config(g.config_path, "simulate", schema);
  cfg_fill(cfg, "model", sub, "--model", model_path);
  cfg_fill(cfg, "laws", sub, "--laws", laws_dir);
  cfg_fill(cfg, "theta", sub, "--theta", theta);
  cfg_fill(cfg, "theta_reinit", sub, "--theta-reinit", theta_reinit);
  cfg_fill(cfg, "horizon_s", sub, "--horizon", horizon);
  cfg_fill(cfg, "n_paths", sub, "--paths", n_paths);
  cfg_fill(cfg, "bin_s", sub, "--bin", bin_s);
  if (model_path.empty()) throw InputError("simulate: --model is required");
  if (laws_dir.empty()) throw InputError("simulate: --laws is required");
  if (n_paths < 1) throw InputError("simulate: need at least one path");

  const IntensityModel model = IntensityModel::load(model_path);
  const QueueReactiveParams params = make_params(model, laws_dir, theta, theta_reinit);
  const auto samplers = make_samplers(params.invariant_laws);

  struct Row {
    int64_t n_events, n_pref_changes, pref_final;
    double vol, vol_pref, eta;
  };
  std::vector<Row> rows(n_paths);
  parallel_for(n_paths, g.jobs, [&](int64_t p) {
    Rng rng(g.seed, static_cast<uint64_t>(p));
    const LobState initial = draw_from_laws(model.K, samplers, kCliAnchorPrefHalf, rng);
    const SimPath path = simulate_queue_reactive(initial, model, params, horizon, rng);
    const PathStats st = path_stats(path, bin_s, model.tick_value);
    rows[p] = {st.n_events, st.n_pref_changes, path.terminal.pref_half_ticks,
               st.vol,      st.vol_pref,       st.eta};
  });

  std::string out = "path,n_events,n_pref_changes,vol,vol_pref,eta,pref_final_half_ticks\n";
  for (int64_t p = 0; p < n_paths; ++p) {
    const Row& r = rows[p];
    out += csv::fmt(p) + ',' + csv::fmt(r.n_events) + ',' + csv::fmt(r.n_pref_changes) + ',' +
           csv::fmt(r.vol) + ',' + csv::fmt(r.vol_pref) + ',' + csv::fmt(r.eta) + ',' +
           csv::fmt(r.pref_final) + '\n';
  }
  write_out(g, "path_stats.csv", out);

  json eff = {{"model", model_path},   {"laws", laws_dir}, {"theta", theta},
              {"theta_reinit", theta_reinit}, {"horizon_s", horizon},
              {"n_paths", n_paths},    {"bin_s", bin_s}};
  finish(g, "simulate", eff, {{"model", model_path}});
  std::cout << "simulate: " << n_paths << " paths -> " << g.out << "\n";
  return 0;
}

// ---------------------------------------------------------------- calibrate

int cmd_calibrate(const Global& g, CLI::App* sub, std::string model_path, std::string laws_dir,
                  std::string grid, double horizon, double bin_s, int64_t n_paths,
                  double target_vol, double target_eta, bool mechanical) {
  static const std::map<std::string, const char*> schema = {
      {"model", "string"},     {"laws", "string"},       {"grid", "string"},
      {"thetas", "array"},     {"theta_reinits", "array"}, {"horizon_s", "number"},
      {"bin_s", "number"},     {"n_paths", "integer"},     {"target_vol", "number"},
      {"target_eta", "number"}, {"mechanical", "boolean"}};
  const json cfg = read_config(g.config_path, "calibrate", schema);
  cfg_fill(cfg, "model", sub, "--model", model_path);
  cfg_fill(cfg, "laws", sub, "--laws", laws_dir);
  cfg_fill(cfg, "grid", sub, "--grid", grid);
  cfg_fill(cfg, "horizon_s", sub, "--horizon", horizon);
  cfg_fill(cfg, "bin_s", sub, "--bin", bin_s);
  cfg_fill(cfg, "n_paths", sub, "--paths", n_paths);
  cfg_fill(cfg, "target_vol", sub, "--target-vol", target_vol);
  cfg_fill(cfg, "target_eta", sub, "--target-eta", target_eta);
  if (cfg.contains("mechanical") && !mechanical) mechanical = cfg["mechanical"].get<bool>();
  if (model_path.empty()) throw InputError("calibrate: --model is required");
  if (laws_dir.empty()) throw InputError("calibrate: --laws is required");

  SurfaceConfig scfg;
  scfg.horizon_s = horizon;
  scfg.bin_s = bin_s;
  scfg.n_paths = n_paths;
  int nt = 0, nr = 0;
  if (std::sscanf(grid.c_str(), "%dx%d", &nt, &nr) != 2 || nt < 1 || nr < 1)
    throw InputError("calibrate: --grid must look like 11x11");
  scfg.thetas = linspace01(nt);
  scfg.theta_reinits = linspace01(nr);
  if (cfg.contains("thetas")) scfg.thetas = cfg["thetas"].get<std::vector<double>>();
  if (cfg.contains("theta_reinits"))
    scfg.theta_reinits = cfg["theta_reinits"].get<std::vector<double>>();

  const IntensityModel model = IntensityModel::load(model_path);
  const QueueReactiveParams base = make_params(model, laws_dir, 0.0, 0.0);

  const CalibrationSurface surface = build_surface(model, base, scfg, g.seed, g.jobs);
  write_out(g, "surface.csv", dump_surface_csv(surface));
  if (!std::isnan(target_vol) || !std::isnan(target_eta)) {
    const InversionResult inv = invert(surface, target_vol, target_eta);
    write_out(g, "inversion.json", dump_inversion_json(inv));
    std::cout << "invert: theta=" << inv.theta << " theta_reinit=" << inv.theta_reinit
              << " residual=" << inv.residual << (inv.out_of_range ? " (out of range)" : "")
              << "\n";
  }
  if (mechanical) {
    const MechanicalVol mec = mechanical_volatility(model, base, scfg, g.seed, g.jobs);
    json mj = {{"vol", mec.vol},
               {"vol_se", mec.vol_se},
               {"mean_pref_changes", mec.mean_pref_changes},
               {"n_paths", mec.n_paths}};
    write_out(g, "mechanical.json", mj.dump(2) + "\n");
  }

  json eff = {{"model", model_path}, {"laws", laws_dir},   {"grid", grid},
              {"thetas", scfg.thetas}, {"theta_reinits", scfg.theta_reinits},
              {"horizon_s", horizon}, {"bin_s", bin_s},    {"n_paths", n_paths},
              {"mechanical", mechanical}};
  finish(g, "calibrate", eff, {{"model", model_path}});
  std::cout << "calibrate: " << surface.nodes.size() << " nodes -> " << g.out << "\n";
  return 0;
}

// ---------------------------------------------------------------- execprob

int cmd_execprob(const Global& g, CLI::App* sub, std::string model_path, int n0, int64_t n_paths,
                 int q1, int qm1) {
  static const std::map<std::string, const char*> schema = {
      {"model", "string"},        {"n0", "integer"},
      {"n_paths", "integer"},     {"initial_bids", "array"},
      {"initial_asks", "array"},  {"pref_half_ticks", "integer"},
      {"q1", "integer"},          {"qm1", "integer"}};
  const json cfg = read_config(g.config_path, "execprob", schema);
  cfg_fill(cfg, "model", sub, "--model", model_path);
  cfg_fill(cfg, "n0", sub, "--n0", n0);
  cfg_fill(cfg, "n_paths", sub, "--paths", n_paths);
  cfg_fill(cfg, "q1", sub, "--q1", q1);
  cfg_fill(cfg, "qm1", sub, "--qm1", qm1);
  if (model_path.empty()) throw InputError("execprob: --model is required");

  const IntensityModel model = IntensityModel::load(model_path);
  int64_t pref = kCliAnchorPrefHalf;
  if (cfg.contains("pref_half_ticks")) pref = cfg["pref_half_ticks"].get<int64_t>();
  LobState initial = LobState::empty(model.K, pref);
  initial.size_at(QueueIndex(1)) = q1;
  initial.size_at(QueueIndex(-1)) = qm1;
  if (cfg.contains("initial_bids")) {
    const auto bids = cfg["initial_bids"].get<std::vector<int32_t>>();
    if (static_cast<int>(bids.size()) != model.K)
      throw InputError("execprob: initial_bids needs K entries");
    for (int d = 1; d <= model.K; ++d) initial.size_at(QueueIndex(-d)) = bids[d - 1];
  }
  if (cfg.contains("initial_asks")) {
    const auto asks = cfg["initial_asks"].get<std::vector<int32_t>>();
    if (static_cast<int>(asks.size()) != model.K)
      throw InputError("execprob: initial_asks needs K entries");
    for (int d = 1; d <= model.K; ++d) initial.size_at(QueueIndex(d)) = asks[d - 1];
  }

  const ProbEstimate est = execution_probability(model, initial, n0, n_paths, g.seed, g.jobs);
  json out = {{"p", est.p}, {"stderr", est.stderr_}, {"n_paths", est.n_paths}, {"n0", n0}};
  write_out(g, "execprob.json", out.dump(2) + "\n");

  json eff = {{"model", model_path},
              {"n0", n0},
              {"n_paths", n_paths},
              {"initial_bids", json::array()},
              {"initial_asks", json::array()}};
  for (int d = 1; d <= model.K; ++d) {
    eff["initial_bids"].push_back(initial.size_at(QueueIndex(-d)));
    eff["initial_asks"].push_back(initial.size_at(QueueIndex(d)));
  }
  finish(g, "execprob", eff, {{"model", model_path}});
  std::cout << "execprob: p=" << est.p << " +- " << est.stderr_ << "\n";
  return 0;
}

// ---------------------------------------------------------------- tca

int cmd_tca(const Global& g, CLI::App* sub, std::string model_path, std::string laws_dir,
            std::string schedule, std::string tactic, std::string benchmark, int64_t n_total,
            int n_slices, double slice_s, double theta, double theta_reinit, int64_t n_paths) {
  static const std::map<std::string, const char*> schema = {
      {"model", "string"},   {"laws", "string"},    {"schedule", "string"},
      {"tactic", "string"},  {"benchmark", "string"}, {"n_total", "integer"},
      {"n_slices", "integer"}, {"slice_s", "number"}, {"theta", "number"},
      {"theta_reinit", "number"}, {"n_paths", "integer"}};
  const json cfg = read_config(g.config_path, "tca", schema);
  cfg_fill(cfg, "model", sub, "--model", model_path);
  cfg_fill(cfg, "laws", sub, "--laws", laws_dir);
  cfg_fill(cfg, "schedule", sub, "--schedule", schedule);
  cfg_fill(cfg, "tactic", sub, "--tactic", tactic);
  cfg_fill(cfg, "benchmark", sub, "--benchmark", benchmark);
  cfg_fill(cfg, "n_total", sub, "--n-total", n_total);
  cfg_fill(cfg, "n_slices", sub, "--slices", n_slices);
  cfg_fill(cfg, "slice_s", sub, "--slice-s", slice_s);
  cfg_fill(cfg, "theta", sub, "--theta", theta);
  cfg_fill(cfg, "theta_reinit", sub, "--theta-reinit", theta_reinit);
  cfg_fill(cfg, "n_paths", sub, "--paths", n_paths);
  if (model_path.empty()) throw InputError("tca: --model is required");
  if (laws_dir.empty()) throw InputError("tca: --laws is required");

  TcaConfig tc;
  if (schedule == "s1")
    tc.schedule.kind = ScheduleKind::S1;
  else if (schedule == "s2")
    tc.schedule.kind = ScheduleKind::S2;
  else
    throw InputError("tca: --schedule must be s1 or s2");
  tc.schedule.n_total = n_total;
  tc.schedule.n_slices = n_slices;
  if (tactic == "t1")
    tc.tactic.kind = TacticKind::T1;
  else if (tactic == "t2")
    tc.tactic.kind = TacticKind::T2;
  else
    throw InputError("tca: --tactic must be t1 or t2");
  tc.tactic.slice_s = slice_s;
  if (benchmark == "vwap")
    tc.benchmark = BenchmarkKind::Vwap;
  else if (benchmark == "arrival")
    tc.benchmark = BenchmarkKind::ArrivalPrice;
  else
    throw InputError("tca: --benchmark must be vwap or arrival");

  const IntensityModel model = IntensityModel::load(model_path);
  const QueueReactiveParams params = make_params(model, laws_dir, theta, theta_reinit);
  const TcaResult res = run_tactic(model, params, tc, n_paths, g.seed, g.jobs);

  write_out(g, "reports.csv", dump_reports_csv(res));
  std::string slip = "slippage\n";
  for (const ExecutionReport& r : res.reports) slip += csv::fmt(r.slippage) + '\n';
  write_out(g, "slippage.csv", slip);

  json eff = {{"model", model_path}, {"laws", laws_dir},   {"schedule", schedule},
              {"tactic", tactic},    {"benchmark", benchmark}, {"n_total", n_total},
              {"n_slices", n_slices}, {"slice_s", slice_s}, {"theta", theta},
              {"theta_reinit", theta_reinit}, {"n_paths", n_paths}};
  finish(g, "tca", eff, {{"model", model_path}});
  double mean_slip = 0;
  for (const ExecutionReport& r : res.reports) mean_slip += r.slippage;
  mean_slip /= static_cast<double>(res.reports.size());
  std::cout << "tca: mean slippage " << mean_slip << " over " << n_paths << " paths -> " << g.out
            << "\n";
  return 0;
}

// ---------------------------------------------------------------- impact

int cmd_impact(const Global& g, CLI::App* sub, std::string model_path, std::string laws_dir,
               std::string tactic, double slice_s, std::vector<int64_t> n_values,
               std::vector<double> t_grid, double theta, double theta_reinit, int64_t n_paths) {
  static const std::map<std::string, const char*> schema = {
      {"model", "string"},  {"laws", "string"},     {"tactic", "string"},
      {"slice_s", "number"}, {"n_values", "array"}, {"t_grid", "array"},
      {"theta", "number"},  {"theta_reinit", "number"}, {"n_paths", "integer"}};
  const json cfg = read_config(g.config_path, "impact", schema);
  cfg_fill(cfg, "model", sub, "--model", model_path);
  cfg_fill(cfg, "laws", sub, "--laws", laws_dir);
  cfg_fill(cfg, "tactic", sub, "--tactic", tactic);
  cfg_fill(cfg, "slice_s", sub, "--slice-s", slice_s);
  cfg_fill(cfg, "theta", sub, "--theta", theta);
  cfg_fill(cfg, "theta_reinit", sub, "--theta-reinit", theta_reinit);
  cfg_fill(cfg, "n_paths", sub, "--paths", n_paths);
  if (cfg.contains("n_values") && sub->count("--n") == 0)
    n_values = cfg["n_values"].get<std::vector<int64_t>>();
  if (cfg.contains("t_grid") && sub->count("--t") == 0)
    t_grid = cfg["t_grid"].get<std::vector<double>>();
  if (model_path.empty()) throw InputError("impact: --model is required");
  if (laws_dir.empty()) throw InputError("impact: --laws is required");

  ImpactConfig ic;
  if (tactic == "t1")
    ic.tactic.kind = TacticKind::T1;
  else if (tactic == "t2")
    ic.tactic.kind = TacticKind::T2;
  else
    throw InputError("impact: --tactic must be t1 or t2");
  ic.tactic.slice_s = slice_s;
  ic.n_values = n_values;
  ic.t_grid = t_grid;
  ic.n_paths = n_paths;

  const IntensityModel model = IntensityModel::load(model_path);
  const QueueReactiveParams params = make_params(model, laws_dir, theta, theta_reinit);
  const auto cells = market_impact(model, params, ic, g.seed, g.jobs);
  write_out(g, "impact.csv", dump_impact_csv(cells));

  json eff = {{"model", model_path}, {"laws", laws_dir},  {"tactic", tactic},
              {"slice_s", slice_s},  {"n_values", n_values}, {"t_grid", t_grid},
              {"theta", theta},      {"theta_reinit", theta_reinit}, {"n_paths", n_paths}};
  finish(g, "impact", eff, {{"model", model_path}});
  std::cout << "impact: " << cells.size() << " cells -> " << g.out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"queue-reactive limit order book toolkit"};
  app.require_subcommand(1);
  app.fallthrough();

  Global g;
  app.add_option("--seed", g.seed, "random seed (auto-generated and recorded when absent)");
  app.add_option("--jobs", g.jobs, "worker threads")->check(CLI::PositiveNumber);
  app.add_option("--out", g.out, "output directory");
  app.add_option("--config", g.config_path, "JSON config file");

  auto* ingest = app.add_subcommand("ingest", "turn L2 snapshots into event records and laws");
  std::string in_path, session = "";
  int k = 3;
  double tick = 0.01, law_period = 30.0;
  ingest->add_option("--in", in_path, "L2 snapshot CSV");
  ingest->add_option("--k", k, "tracked depth per side");
  ingest->add_option("--session", session, "UTC session window HH:MM-HH:MM");
  ingest->add_option("--tick", tick, "tick value");
  ingest->add_option("--law-period", law_period, "law sampling period, seconds");

  auto* estimate = app.add_subcommand("estimate", "fit intensity tables from event records");
  std::string events_dir, model_sel = "i", law_file;
  int cap = 30, floor_n = 10, est_k = 0;
  double est_tick = 0.01;
  bool force = false;
  estimate->add_option("--events", events_dir, "directory produced by ingest");
  estimate->add_option("--model", model_sel, "i, iia, iib or poisson");
  estimate->add_option("--cap", cap, "size cap of the tables");
  estimate->add_option("--floor", floor_n, "minimum observations per cell");
  estimate->add_option("--k", est_k, "depth override");
  estimate->add_option("--tick", est_tick, "tick value");
  estimate->add_option("--law", law_file, "first-queue law CSV for the iib thresholds");
  estimate->add_flag("--force", force, "keep rates that fail the stability check");

  auto* invariant = app.add_subcommand("invariant", "stationary law of the fitted model");
  std::string inv_model, method = "closed";
  int n_phase = 60, max_iters = 100000, inv_paths = 1, hist_cap = 256;
  double tol = 1e-12, inv_horizon = 3600, burn_in = -1;
  invariant->add_option("--model", inv_model, "model JSON");
  invariant->add_option("--method", method, "closed, qbd or mc");
  invariant->add_option("--n-phase", n_phase, "phase truncation of the level/phase solve");
  invariant->add_option("--tol", tol, "fixed-point tolerance");
  invariant->add_option("--max-iters", max_iters, "fixed-point iteration cap");
  invariant->add_option("--horizon", inv_horizon, "simulated seconds per path");
  invariant->add_option("--paths", inv_paths, "paths");
  invariant->add_option("--burn-in", burn_in, "seconds dropped per path, default 10%");
  invariant->add_option("--hist-cap", hist_cap, "histogram support cap");

  auto* simulate = app.add_subcommand("simulate", "sample full queue-reactive paths");
  std::string sim_model, sim_laws;
  double theta = 0.7, theta_reinit = 0.85, sim_horizon = 28800, bin_s = 600;
  int64_t sim_paths = 100;
  simulate->add_option("--model", sim_model, "model JSON");
  simulate->add_option("--laws", sim_laws, "directory with law_marginal_d<d>.csv");
  simulate->add_option("--theta", theta, "price-move acceptance probability");
  simulate->add_option("--theta-reinit", theta_reinit, "book redraw probability on a move");
  simulate->add_option("--horizon", sim_horizon, "seconds per path");
  simulate->add_option("--paths", sim_paths, "paths");
  simulate->add_option("--bin", bin_s, "volatility bin, seconds");

  auto* calibrate = app.add_subcommand("calibrate", "sweep the (theta, theta_reinit) grid");
  std::string cal_model, cal_laws, grid = "11x11";
  double cal_horizon = 28800, cal_bin = 600;
  int64_t cal_paths = 200;
  double target_vol = std::nan(""), target_eta = std::nan("");
  bool mechanical = false;
  calibrate->add_option("--model", cal_model, "model JSON");
  calibrate->add_option("--laws", cal_laws, "directory with law_marginal_d<d>.csv");
  calibrate->add_option("--grid", grid, "grid size, e.g. 11x11");
  calibrate->add_option("--horizon", cal_horizon, "seconds per path");
  calibrate->add_option("--bin", cal_bin, "volatility bin, seconds");
  calibrate->add_option("--paths", cal_paths, "paths per node");
  calibrate->add_option("--target-vol", target_vol, "invert the surface against this volatility");
  calibrate->add_option("--target-eta", target_eta, "invert against this mean-reversion ratio");
  calibrate->add_flag("--mechanical", mechanical, "also report the theta=1 volatility ceiling");

  auto* execprob = app.add_subcommand("execprob", "fill probability of a resting bid order");
  std::string ep_model;
  int n0 = 1, q1 = 1, qm1 = 1;
  int64_t ep_paths = 100000;
  execprob->add_option("--model", ep_model, "model JSON");
  execprob->add_option("--n0", n0, "tracked order size, units");
  execprob->add_option("--paths", ep_paths, "paths");
  execprob->add_option("--q1", q1, "initial first ask queue, units");
  execprob->add_option("--qm1", qm1, "initial first bid queue, units");

  auto* tca = app.add_subcommand("tca", "backtest an execution tactic");
  std::string tca_model, tca_laws, schedule = "s1", tactic = "t1", benchmark = "arrival";
  int64_t n_total = 60, tca_paths = 500;
  int n_slices = 20;
  double slice_s = 600, tca_theta = 0.7, tca_tr = 0.85;
  tca->add_option("--model", tca_model, "model JSON");
  tca->add_option("--laws", tca_laws, "directory with law_marginal_d<d>.csv");
  tca->add_option("--schedule", schedule, "s1 or s2");
  tca->add_option("--tactic", tactic, "t1 or t2");
  tca->add_option("--benchmark", benchmark, "vwap or arrival");
  tca->add_option("--n-total", n_total, "total quantity, first-queue units");
  tca->add_option("--slices", n_slices, "slices");
  tca->add_option("--slice-s", slice_s, "slice duration, seconds");
  tca->add_option("--theta", tca_theta, "price-move acceptance probability");
  tca->add_option("--theta-reinit", tca_tr, "book redraw probability on a move");
  tca->add_option("--paths", tca_paths, "paths");

  auto* impact = app.add_subcommand("impact", "market impact profile of a single slice");
  std::string imp_model, imp_laws, imp_tactic = "t2";
  double imp_slice = 600, imp_theta = 0.7, imp_tr = 0.85;
  std::vector<int64_t> n_values{1, 5, 10, 20, 40, 60};
  std::vector<double> t_grid{60, 300, 600};
  int64_t imp_paths = 2000;
  impact->add_option("--model", imp_model, "model JSON");
  impact->add_option("--laws", imp_laws, "directory with law_marginal_d<d>.csv");
  impact->add_option("--tactic", imp_tactic, "t1 or t2");
  impact->add_option("--slice-s", imp_slice, "slice duration, seconds");
  impact->add_option("--n", n_values, "order sizes, first-queue units")->delimiter(',');
  impact->add_option("--t", t_grid, "sampling times inside the slice, seconds")->delimiter(',');
  impact->add_option("--theta", imp_theta, "price-move acceptance probability");
  impact->add_option("--theta-reinit", imp_tr, "book redraw probability on a move");
  impact->add_option("--paths", imp_paths, "paths per size");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  g.seed_given = app.count("--seed") > 0;
  if (!g.seed_given) {
    std::random_device rd;
    g.seed = (static_cast<uint64_t>(rd()) << 32) ^ rd();
  }

  try {
    if (ingest->parsed())
      return cmd_ingest(g, ingest, in_path, k, session, tick, law_period);
    if (estimate->parsed())
      return cmd_estimate(g, estimate, events_dir, model_sel, cap, floor_n, est_k, est_tick,
                          law_file, force);
    if (invariant->parsed())
      return cmd_invariant(g, invariant, inv_model, method, n_phase, tol, max_iters, inv_horizon,
                           inv_paths, burn_in, hist_cap);
    if (simulate->parsed())
      return cmd_simulate(g, simulate, sim_model, sim_laws, theta, theta_reinit, sim_horizon,
                          sim_paths, bin_s);
    if (calibrate->parsed())
      return cmd_calibrate(g, calibrate, cal_model, cal_laws, grid, cal_horizon, cal_bin,
                           cal_paths, target_vol, target_eta, mechanical);
    if (execprob->parsed())
      return cmd_execprob(g, execprob, ep_model, n0, ep_paths, q1, qm1);
    if (tca->parsed())
      return cmd_tca(g, tca, tca_model, tca_laws, schedule, tactic, benchmark, n_total, n_slices,
                     slice_s, tca_theta, tca_tr, tca_paths);
    if (impact->parsed())
      return cmd_impact(g, impact, imp_model, imp_laws, imp_tactic, imp_slice, n_values, t_grid,
                        imp_theta, imp_tr, imp_paths);
  } catch (const Error& e) {
    const ErrorClass c = classify(e);
    json err = {{"error", c.name}, {"message", e.what()}};
    std::cerr << err.dump() << "\n";
    return c.exit_code;
  } catch (const std::exception& e) {
    json err = {{"error", "Internal"}, {"message", e.what()}};
    std::cerr << err.dump() << "\n";
    return 1;
  }
  return 0;
}
