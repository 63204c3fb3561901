#include "qrlob/law.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <sstream>

#include "qrlob/csv.hpp"
#include "qrlob/fsio.hpp"

namespace qrlob {

StationaryLaw StationaryLaw::zeros(int n) {
  StationaryLaw law;
  law.dims = 1;
  law.shape = {n};
  law.probs.assign(n, 0.0);
  return law;
}

StationaryLaw StationaryLaw::zeros(int rows, int cols) {
  StationaryLaw law;
  law.dims = 2;
  law.shape = {rows, cols};
  law.probs.assign(static_cast<size_t>(rows) * cols, 0.0);
  return law;
}

double StationaryLaw::total() const {
  double s = 0;
  for (double p : probs) s += p;
  return s;
}

void StationaryLaw::normalize() {
  const double s = total();
  if (!(s > 0)) throw DegenerateLaw("law has no mass");
  for (double& p : probs) p /= s;
}

double StationaryLaw::mean(int axis) const {
  double m = 0;
  if (dims == 1) {
    for (int i = 0; i < shape[0]; ++i) m += i * probs[i];
    return m;
  }
  for (int i = 0; i < shape[0]; ++i)
    for (int j = 0; j < shape[1]; ++j) m += (axis == 0 ? i : j) * at(i, j);
  return m;
}

StationaryLaw StationaryLaw::marginal(int axis) const {
  if (dims != 2) throw Error("marginal: law is not two-dimensional");
  StationaryLaw out = zeros(shape[axis]);
  for (int i = 0; i < shape[0]; ++i)
    for (int j = 0; j < shape[1]; ++j) out.ref(axis == 0 ? i : j) += at(i, j);
  out.meta = meta;
  return out;
}

double total_variation(const StationaryLaw& a, const StationaryLaw& b) {
  if (a.dims != b.dims) throw Error("total_variation: dimension mismatch");
  double tv = 0;
  if (a.dims == 1) {
    const int n = std::max(a.shape[0], b.shape[0]);
    for (int i = 0; i < n; ++i) {
      const double pa = i < a.shape[0] ? a.at(i) : 0.0;
      const double pb = i < b.shape[0] ? b.at(i) : 0.0;
      tv += std::abs(pa - pb);
    }
  } else {
    const int r = std::max(a.shape[0], b.shape[0]);
    const int c = std::max(a.shape[1], b.shape[1]);
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < c; ++j) {
        const double pa = (i < a.shape[0] && j < a.shape[1]) ? a.at(i, j) : 0.0;
        const double pb = (i < b.shape[0] && j < b.shape[1]) ? b.at(i, j) : 0.0;
        tv += std::abs(pa - pb);
      }
  }
  return tv / 2;
}

int quantile(const StationaryLaw& law, double p) {
  if (law.dims != 1) throw Error("quantile: law is not one-dimensional");
  double acc = 0;
  for (int i = 0; i < law.shape[0]; ++i) {
    acc += law.at(i);
    if (acc >= p - 1e-12) return i;
  }
  return law.shape[0] - 1;
}

DiscreteSampler::DiscreteSampler(const StationaryLaw& law) {
  if (law.dims != 1) throw Error("sampler: law is not one-dimensional");
  cdf_.resize(law.shape[0]);
  double acc = 0;
  for (int i = 0; i < law.shape[0]; ++i) {
    acc += law.at(i);
    cdf_[i] = acc;
  }
  if (!(acc > 0)) throw DegenerateLaw("sampler: law has no mass");
  for (double& c : cdf_) c /= acc;
  cdf_.back() = 1.0;
}

int DiscreteSampler::sample(Rng& rng) const {
  const double u = rng.uniform();
  const auto it = std::lower_bound(cdf_.begin(), cdf_.end(), u,
                                   [](double c, double v) { return c <= v; });
  return static_cast<int>(it - cdf_.begin());
}

std::string dump_law_csv(const StationaryLaw& law) {
  std::ostringstream out;
  out << "dims,s1,s2,prob\n";
  if (law.dims == 1) {
    for (int i = 0; i < law.shape[0]; ++i)
      out << "1," << i << ",," << csv::fmt(law.at(i)) << "\n";
  } else {
    for (int i = 0; i < law.shape[0]; ++i)
      for (int j = 0; j < law.shape[1]; ++j)
        out << "2," << i << "," << j << "," << csv::fmt(law.at(i, j)) << "\n";
  }
  return out.str();
}

StationaryLaw parse_law_csv(const std::string& text) {
  const auto rows = csv::lines(text);
  if (rows.size() < 2) throw InputError("law csv: no rows");
  std::vector<std::array<double, 3>> entries;  // s1, s2 (-1 when absent), prob
  int dims = 0;
  for (size_t i = 1; i < rows.size(); ++i) {
    const auto f = csv::split(rows[i]);
    if (f.size() != 4) throw InputError("law csv: row " + std::to_string(i + 1) + " needs 4 fields");
    const int d = static_cast<int>(csv::to_i64(f[0], "law csv dims"));
    if (dims == 0) dims = d;
    if (d != dims) throw InputError("law csv: mixed dims");
    const double s1 = static_cast<double>(csv::to_i64(f[1], "law csv s1"));
    const double s2 = f[2].empty() ? -1.0 : static_cast<double>(csv::to_i64(f[2], "law csv s2"));
    entries.push_back({s1, s2, csv::to_double(f[3], "law csv prob")});
  }
  if (dims != 1 && dims != 2) throw InputError("law csv: dims must be 1 or 2");
  int max1 = 0, max2 = 0;
  for (const auto& e : entries) {
    max1 = std::max(max1, static_cast<int>(e[0]));
    max2 = std::max(max2, static_cast<int>(e[1]));
  }
  StationaryLaw law = dims == 1 ? StationaryLaw::zeros(max1 + 1)
                                : StationaryLaw::zeros(max1 + 1, max2 + 1);
  for (const auto& e : entries) {
    if (dims == 1)
      law.ref(static_cast<int>(e[0])) = e[2];
    else
      law.ref(static_cast<int>(e[0]), static_cast<int>(e[1])) = e[2];
  }
  law.meta.method = "file";
  law.meta.n_trunc = max1 + 1;
  return law;
}

void save_law_csv(const StationaryLaw& law, const std::string& path) {
  write_file_atomic(path, dump_law_csv(law));
}

StationaryLaw load_law_csv(const std::string& path) { return parse_law_csv(read_file(path)); }

}  // namespace qrlob
