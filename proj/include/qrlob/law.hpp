#pragma once

#include <string>
#include <vector>

#include "qrlob/errors.hpp"
#include "qrlob/rng.hpp"

namespace qrlob {

struct TruncMeta {
  int n_trunc = 0;
  std::string method;
  double tail_mass = 0.0;
};

/// Probability table over queue sizes: a 1-D marginal or a 2-D joint law,
/// row-major, support 0..shape[k]-1 per axis.
struct StationaryLaw {
  int dims = 1;
  std::vector<int> shape;
  std::vector<double> probs;
  TruncMeta meta;

  static StationaryLaw zeros(int n);
  static StationaryLaw zeros(int rows, int cols);

  double at(int i) const { return probs[i]; }
  double at(int i, int j) const { return probs[static_cast<size_t>(i) * shape[1] + j]; }
  double& ref(int i) { return probs[i]; }
  double& ref(int i, int j) { return probs[static_cast<size_t>(i) * shape[1] + j]; }

  double total() const;
  void normalize();               // throws DegenerateLaw on zero mass
  double mean(int axis = 0) const;
  StationaryLaw marginal(int axis) const;  // 2-D only
};

/// Total variation distance on the union support (missing entries are 0).
double total_variation(const StationaryLaw& a, const StationaryLaw& b);

/// Smallest x with P(X <= x) >= p.
int quantile(const StationaryLaw& law, double p);

/// Cumulative-table sampler over a 1-D law.
class DiscreteSampler {
 public:
  DiscreteSampler() = default;
  explicit DiscreteSampler(const StationaryLaw& law);
  int sample(Rng& rng) const;
  bool empty() const { return cdf_.empty(); }

 private:
  std::vector<double> cdf_;
};

/// CSV schema: dims,s1,s2,prob with s2 blank for 1-D laws.
std::string dump_law_csv(const StationaryLaw& law);
StationaryLaw parse_law_csv(const std::string& text);
void save_law_csv(const StationaryLaw& law, const std::string& path);
StationaryLaw load_law_csv(const std::string& path);

}  // namespace qrlob
