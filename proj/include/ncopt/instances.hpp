#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "ncopt/common.hpp"
#include "ncopt/rng.hpp"

namespace ncopt {

// A 2D Euclidean TSP instance on the unit square.
struct TspInstance {
  std::vector<double> xs, ys;
  std::string id;  // optional provenance

  int n() const { return static_cast<int>(xs.size()); }

  void validate() const {
    NC_REQUIRE(xs.size() == ys.size(), "instance: coordinate arrays disagree");
    NC_REQUIRE(n() >= 4, "instance needs n >= 4, got " << n());
    for (int i = 0; i < n(); ++i)
      NC_REQUIRE(xs[i] >= 0.0 && xs[i] <= 1.0 && ys[i] >= 0.0 && ys[i] <= 1.0,
                 "coordinate " << i << " (" << xs[i] << ", " << ys[i]
                               << ") outside the unit square");
  }
};

// A tour is a permutation of {0, ..., n-1}; the closing edge back to the
// first node is implicit.
using Tour = std::vector<int>;

inline double edge_dist(const TspInstance& inst, int i, int j) {
  const double dx = inst.xs[i] - inst.xs[j];
  const double dy = inst.ys[i] - inst.ys[j];
  return std::sqrt(dx * dx + dy * dy);
}

TspInstance sample_instance(int n, Rng& rng);
std::vector<TspInstance> sample_instances(int count, int n, Rng& rng);

bool is_permutation_tour(const Tour& tour, int n);
void require_valid_tour(const Tour& tour, int n);

// Sum of consecutive edge lengths plus the closing edge.
double tour_length(const TspInstance& inst, const Tour& tour);

}  // namespace ncopt
