#include "qrlob/core.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "json.hpp"
#include "qrlob/fsio.hpp"

namespace qrlob {

using nlohmann::json;

const char* event_code(EventType t) {
  switch (t) {
    case EventType::LimitInsert: return "L";
    case EventType::Cancel: return "C";
    case EventType::MarketOrder: return "M";
  }
  return "?";
}

EventType event_from_code(std::string_view code) {
  if (code == "L") return EventType::LimitInsert;
  if (code == "C") return EventType::Cancel;
  if (code == "M") return EventType::MarketOrder;
  throw InputError("unknown event code '" + std::string(code) + "'");
}

const char* model_kind_code(ModelKind k) {
  switch (k) {
    case ModelKind::ModelI: return "model_i";
    case ModelKind::ModelIIa: return "model_iia";
    case ModelKind::ModelIIb: return "model_iib";
    case ModelKind::PoissonBaseline: return "poisson";
  }
  return "?";
}

ModelKind model_kind_from_code(std::string_view code) {
  if (code == "model_i") return ModelKind::ModelI;
  if (code == "model_iia") return ModelKind::ModelIIa;
  if (code == "model_iib") return ModelKind::ModelIIb;
  if (code == "poisson") return ModelKind::PoissonBaseline;
  throw InputError("unknown model kind '" + std::string(code) + "'");
}

LobState LobState::empty(int K, int64_t pref_half_ticks) {
  LobState s;
  s.K = K;
  s.q.assign(2 * K, 0);
  s.pref_half_ticks = pref_half_ticks;
  return s;
}

LobState LobState::mirrored() const {
  LobState out = *this;
  for (int d = 1; d <= K; ++d)
    std::swap(out.size_at(QueueIndex(d)), out.size_at(QueueIndex(-d)));
  return out;
}

std::optional<QueueIndex> best_ask(const LobState& s) {
  for (int d = 1; d <= s.K; ++d)
    if (s.size_at(QueueIndex(d)) > 0) return QueueIndex(d);
  return std::nullopt;
}

std::optional<QueueIndex> best_bid(const LobState& s) {
  for (int d = 1; d <= s.K; ++d)
    if (s.size_at(QueueIndex(-d)) > 0) return QueueIndex(-d);
  return std::nullopt;
}

int64_t mid_sum_half_ticks(const LobState& s) {
  const auto ask = best_ask(s);
  const auto bid = best_bid(s);
  const int da = ask ? ask->distance() : s.K + 1;
  const int db = bid ? bid->distance() : s.K + 1;
  return 2 * s.pref_half_ticks + 2 * (da - db);
}

double mid_price(const LobState& s, double tick_value) {
  return static_cast<double>(mid_sum_half_ticks(s)) * tick_value / 4.0;
}

namespace {

const std::vector<std::string> kSingleRegime = {"all"};
const std::vector<std::string> kFirstQueueRegimes = {"q1=0", "q1>0"};
const std::vector<std::string> kOppRangeRegimes = {"opp=0", "opp=small", "opp=usual", "opp=large"};

}  // namespace

const std::vector<std::string>& IntensityModel::regime_keys(ModelKind kind, int distance) {
  switch (kind) {
    case ModelKind::ModelI:
    case ModelKind::PoissonBaseline:
      return kSingleRegime;
    case ModelKind::ModelIIa:
      return distance == 2 ? kFirstQueueRegimes : kSingleRegime;
    case ModelKind::ModelIIb:
      if (distance == 1) return kOppRangeRegimes;
      return distance == 2 ? kFirstQueueRegimes : kSingleRegime;
  }
  return kSingleRegime;
}

int IntensityModel::regime_count(int distance) const {
  return static_cast<int>(regime_keys(kind, distance).size());
}

void IntensityModel::validate() const {
  if (K < 1 || K > kMaxDepth)
    throw InputError("model: K must be in [1, " + std::to_string(kMaxDepth) + "]");
  if (tick_value <= 0) throw InputError("model: tick_value must be positive");
  if (cap < 1) throw InputError("model: cap must be at least 1");
  if (static_cast<int>(aes.size()) != K) throw InputError("model: aes must have K entries");
  for (double a : aes)
    if (!(a > 0)) throw InputError("model: aes entries must be positive");
  if (kind == ModelKind::ModelIIb && !(0 < m && m < l))
    throw InputError("model: thresholds must satisfy 0 < m < l");
  if (static_cast<int>(tables.size()) != K) throw InputError("model: tables must cover 1..K");

  for (int d = 1; d <= K; ++d) {
    const auto& keys = regime_keys(kind, d);
    const auto& col = tables[d - 1];
    if (col.size() != keys.size())
      throw UnknownRegime("model: distance " + std::to_string(d) + " needs " +
                          std::to_string(keys.size()) + " regime columns");
    for (size_t r = 0; r < col.size(); ++r) {
      for (int t = 0; t < 3; ++t) {
        const auto& v = col[r][t];
        if (static_cast<int>(v.size()) != cap + 1)
          throw InputError("model: every rate column needs cap+1 entries");
        for (double x : v)
          if (!std::isfinite(x) || x < 0)
            throw InputError("model: rates must be finite and nonnegative");
      }
    }
  }

  // Market orders are routed to the best queue, so deeper market-rate columns
  // must be identically zero for the regime-switching kinds.
  if (kind == ModelKind::ModelIIa || kind == ModelKind::ModelIIb) {
    auto require_zero = [&](int d, int r) {
      for (double x : tables[d - 1][r][static_cast<int>(EventType::MarketOrder)])
        if (x != 0.0)
          throw InputError("model: market-order rates must be zero at distance " +
                           std::to_string(d) + " regime " + regime_keys(kind, d)[r]);
    };
    if (K >= 2) require_zero(2, 1);
    for (int d = 3; d <= K; ++d) require_zero(d, 0);
  }
}

IntensityModel parse_model(std::string_view json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw InputError(std::string("model json: ") + e.what());
  }
  IntensityModel mdl;
  try {
    mdl.kind = model_kind_from_code(j.at("kind").get<std::string>());
    mdl.K = j.at("K").get<int>();
    mdl.tick_value = j.at("tick_value").get<double>();
    mdl.aes = j.at("aes").get<std::vector<double>>();
    mdl.cap = j.at("cap").get<int>();
    mdl.m = j.value("m", 0);
    mdl.l = j.value("l", 0);
    const auto& tab = j.at("tables");
    mdl.tables.resize(mdl.K);
    for (int d = 1; d <= mdl.K; ++d) {
      const std::string dk = std::to_string(d);
      if (!tab.contains(dk)) throw InputError("model: tables missing distance " + dk);
      const auto& keys = IntensityModel::regime_keys(mdl.kind, d);
      auto& col = mdl.tables[d - 1];
      col.resize(keys.size());
      for (size_t r = 0; r < keys.size(); ++r) {
        if (!tab[dk].contains(keys[r]))
          throw UnknownRegime("model: distance " + dk + " missing regime column '" + keys[r] + "'");
        const auto& cell = tab[dk][keys[r]];
        col[r][0] = cell.at("L").get<std::vector<double>>();
        col[r][1] = cell.at("C").get<std::vector<double>>();
        col[r][2] = cell.at("M").get<std::vector<double>>();
      }
    }
  } catch (const json::exception& e) {
    throw InputError(std::string("model json: ") + e.what());
  }
  mdl.validate();
  return mdl;
}

std::string dump_model(const IntensityModel& model) {
  json j;
  j["kind"] = model_kind_code(model.kind);
  j["K"] = model.K;
  j["tick_value"] = model.tick_value;
  j["aes"] = model.aes;
  j["cap"] = model.cap;
  j["m"] = model.m;
  j["l"] = model.l;
  json tab = json::object();
  for (int d = 1; d <= model.K; ++d) {
    const auto& keys = IntensityModel::regime_keys(model.kind, d);
    json col = json::object();
    for (size_t r = 0; r < keys.size(); ++r) {
      col[keys[r]] = {{"L", model.tables[d - 1][r][0]},
                      {"C", model.tables[d - 1][r][1]},
                      {"M", model.tables[d - 1][r][2]}};
    }
    tab[std::to_string(d)] = std::move(col);
  }
  j["tables"] = std::move(tab);
  return j.dump(2) + "\n";
}

IntensityModel IntensityModel::load(const std::string& path) {
  return parse_model(read_file(path));
}

void IntensityModel::save(const std::string& path) const {
  write_file_atomic(path, dump_model(*this));
}

namespace {

constexpr auto L = EventType::LimitInsert;
constexpr auto C = EventType::Cancel;
constexpr auto M = EventType::MarketOrder;

inline void push(std::vector<Flow>& out, int queue, EventType t, double rate) {
  if (rate > 0) out.push_back({QueueIndex(queue), t, rate});
}

}  // namespace

void flow_row(const LobState& s, const IntensityModel& model, std::vector<Flow>& out) {
  out.clear();
  const int K = s.K;

  for (int side = 0; side < 2; ++side) {
    const int sgn = side == 0 ? -1 : 1;
    const int n1 = s.size_at(QueueIndex(sgn));
    switch (model.kind) {
      case ModelKind::ModelI:
      case ModelKind::PoissonBaseline: {
        for (int d = 1; d <= K; ++d) {
          const int n = s.size_at(QueueIndex(sgn * d));
          push(out, sgn * d, L, model.rate(d, 0, L, n));
          if (n > 0) {
            push(out, sgn * d, C, model.rate(d, 0, C, n));
            push(out, sgn * d, M, model.rate(d, 0, M, n));
          }
        }
        break;
      }
      case ModelKind::ModelIIa:
      case ModelKind::ModelIIb: {
        // First queue. ModelIIb reads its rates in the bucket of the
        // opposite first queue; ModelIIa keys by own size only.
        int r1 = 0;
        if (model.kind == ModelKind::ModelIIb) {
          const int opp = s.size_at(QueueIndex(-sgn));
          r1 = model.opp_range(opp);
        }
        push(out, sgn, L, model.rate(1, r1, L, n1));
        if (n1 > 0) {
          push(out, sgn, C, model.rate(1, r1, C, n1));
          push(out, sgn, M, model.rate(1, r1, M, n1));
        }
        // Second queue switches on whether the first queue is occupied;
        // market orders reach it only when the first queue is empty.
        if (K >= 2) {
          const int n2 = s.size_at(QueueIndex(sgn * 2));
          const int r2 = n1 > 0 ? 1 : 0;
          push(out, sgn * 2, L, model.rate(2, r2, L, n2));
          if (n2 > 0) {
            push(out, sgn * 2, C, model.rate(2, r2, C, n2));
            if (n1 == 0) push(out, sgn * 2, M, model.rate(2, 0, M, n2));
          }
        }
        // Deeper queues behave like independent birth-death queues with no
        // direct market-order flow.
        for (int d = 3; d <= K; ++d) {
          const int n = s.size_at(QueueIndex(sgn * d));
          push(out, sgn * d, L, model.rate(d, 0, L, n));
          if (n > 0) push(out, sgn * d, C, model.rate(d, 0, C, n));
        }
        break;
      }
    }
  }
}

std::vector<Transition> generator_row(const LobState& s, const IntensityModel& model) {
  std::vector<Flow> flows;
  flow_row(s, model, flows);
  std::vector<Transition> out;
  out.reserve(flows.size());
  for (const Flow& f : flows) {
    const int dir = f.type == L ? 1 : -1;
    bool merged = false;
    for (Transition& t : out) {
      if (t.queue == f.queue && t.direction == dir) {
        t.rate += f.rate;
        merged = true;
        break;
      }
    }
    if (!merged) out.push_back({f.queue, dir, f.rate});
  }
  return out;
}

ErgodicityReport check_ergodicity_assumptions(const IntensityModel& model, int c_bound) {
  if (c_bound < 0 || c_bound > model.cap)
    throw InputError("ergodicity check: c_bound must be in [0, cap]");

  ErgodicityReport rep;
  rep.c_bound = c_bound;
  rep.delta = std::numeric_limits<double>::infinity();

  const int lo = std::min(c_bound + 1, model.cap);
  for (int d = 1; d <= model.K; ++d) {
    const auto& keys = IntensityModel::regime_keys(model.kind, d);
    for (int r = 0; r < model.regime_count(d); ++r) {
      for (int n = lo; n <= model.cap; ++n) {
        const double f = model.rate(d, r, L, n);
        double g = model.rate(d, r, C, n);
        switch (model.kind) {
          case ModelKind::ModelI:
          case ModelKind::PoissonBaseline:
            g += model.rate(d, r, M, n);
            break;
          case ModelKind::ModelIIa:
          case ModelKind::ModelIIb:
            // Market orders hit the first queue whenever it is occupied and
            // the second queue only in the first-queue-empty regime.
            if (d == 1 || (d == 2 && r == 0)) g += model.rate(d, r, M, n);
            break;
        }
        const double margin = g - f;
        if (margin < rep.delta) {
          rep.delta = margin;
          rep.worst_cell = "d=" + std::to_string(d) + " regime=" + keys[r] +
                           " n=" + std::to_string(n);
        }
      }
    }
  }

  double h = 0;
  for (int d = 1; d <= model.K; ++d) {
    double mx = 0;
    for (int r = 0; r < model.regime_count(d); ++r)
      for (int n = 0; n <= model.cap; ++n) mx = std::max(mx, model.rate(d, r, L, n));
    h += mx;
  }
  rep.h = 2 * h;
  rep.ok = rep.delta > 0;
  return rep;
}

std::optional<int> smallest_stable_bound(const IntensityModel& model) {
  for (int c = 0; c <= model.cap; ++c)
    if (check_ergodicity_assumptions(model, c).ok) return c;
  return std::nullopt;
}

}  // namespace qrlob
