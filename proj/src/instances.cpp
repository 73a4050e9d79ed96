#include "ncopt/instances.hpp"

#include <algorithm>

namespace ncopt {

TspInstance sample_instance(int n, Rng& rng) {
  NC_REQUIRE(n >= 4, "sample_instance needs n >= 4, got " << n);
  TspInstance inst;
  inst.xs.resize(n);
  inst.ys.resize(n);
  for (int i = 0; i < n; ++i) {
    inst.xs[i] = rng.uniform();
    inst.ys[i] = rng.uniform();
  }
  return inst;
}

std::vector<TspInstance> sample_instances(int count, int n, Rng& rng) {
  NC_REQUIRE(count >= 0, "sample_instances: negative count");
  std::vector<TspInstance> out;
  out.reserve(count);
  for (int i = 0; i < count; ++i) out.push_back(sample_instance(n, rng));
  return out;
}

bool is_permutation_tour(const Tour& tour, int n) {
  if (static_cast<int>(tour.size()) != n) return false;
  std::vector<char> seen(n, 0);
  for (int v : tour) {
    if (v < 0 || v >= n || seen[v]) return false;
    seen[v] = 1;
  }
  return true;
}

void require_valid_tour(const Tour& tour, int n) {
  NC_REQUIRE(is_permutation_tour(tour, n),
             "tour of size " << tour.size() << " is not a permutation of 0.." << n - 1);
}

double tour_length(const TspInstance& inst, const Tour& tour) {
  require_valid_tour(tour, inst.n());
  double len = 0.0;
  for (size_t t = 0; t + 1 < tour.size(); ++t) len += edge_dist(inst, tour[t], tour[t + 1]);
  len += edge_dist(inst, tour.back(), tour.front());
  return len;
}

}  // namespace ncopt
