#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "ncopt/dataset.hpp"
#include "ncopt/graph.hpp"
#include "ncopt/instances.hpp"
#include "ncopt/rng.hpp"

using namespace ncopt;

namespace {

TspInstance corners() {
  TspInstance inst;
  inst.xs = {0.0, 0.0, 1.0, 1.0};
  inst.ys = {0.0, 1.0, 1.0, 0.0};
  return inst;
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("sampling is deterministic per seed and rejects tiny instances") {
  Rng a(99), b(99);
  TspInstance i1 = sample_instance(20, a);
  TspInstance i2 = sample_instance(20, b);
  CHECK(i1.xs == i2.xs);
  CHECK(i1.ys == i2.ys);

  Rng c(100);
  TspInstance i3 = sample_instance(20, c);
  CHECK(i1.xs != i3.xs);

  CHECK_THROWS(sample_instance(3, a));
}

TEST_CASE("sampled coordinates are uniform on the unit square") {
  Rng rng(7);
  double sx = 0.0, sy = 0.0;
  const int count = 10000;
  for (const TspInstance& inst : sample_instances(count / 10, 10, rng)) {
    inst.validate();
    for (int i = 0; i < inst.n(); ++i) {
      sx += inst.xs[i];
      sy += inst.ys[i];
    }
  }
  CHECK(std::abs(sx / count - 0.5) < 0.02);
  CHECK(std::abs(sy / count - 0.5) < 0.02);
}

TEST_CASE("tour length on the unit square corners") {
  TspInstance sq = corners();
  CHECK(tour_length(sq, {0, 1, 2, 3}) == doctest::Approx(4.0).epsilon(1e-12));

  TspInstance crossing;
  crossing.xs = {0.0, 1.0, 0.0, 1.0};
  crossing.ys = {0.0, 1.0, 1.0, 0.0};
  CHECK(tour_length(crossing, {0, 1, 2, 3}) ==
        doctest::Approx(2.0 + 2.0 * std::sqrt(2.0)).epsilon(1e-12));
}

TEST_CASE("tour length is invariant under reversal and cyclic shifts") {
  Rng rng(5);
  TspInstance inst = sample_instance(12, rng);
  Tour tour = {3, 1, 7, 0, 5, 2, 11, 9, 4, 10, 6, 8};
  const double base = tour_length(inst, tour);

  Tour rev(tour.rbegin(), tour.rend());
  CHECK(std::abs(tour_length(inst, rev) - base) <= 1e-12);

  for (int shift = 1; shift < 12; ++shift) {
    Tour rolled;
    for (int i = 0; i < 12; ++i) rolled.push_back(tour[(i + shift) % 12]);
    CHECK(std::abs(tour_length(inst, rolled) - base) <= 1e-12);
  }
}

TEST_CASE("tour length rejects non-permutations") {
  Rng rng(5);
  TspInstance inst = sample_instance(6, rng);
  CHECK_THROWS(tour_length(inst, {0, 1, 2, 3, 4}));        // too short
  CHECK_THROWS(tour_length(inst, {0, 1, 2, 3, 4, 4}));     // repeat
  CHECK_THROWS(tour_length(inst, {0, 1, 2, 3, 4, 6}));     // out of range
}

TEST_CASE("fixed-fraction sparsification sizes follow ceil(f*n)") {
  Rng rng(2);
  for (int n : {10, 25, 40}) {
    TspInstance inst = sample_instance(n, rng);
    SparseGraph g = sparsify(inst, GraphSpec::fixed_fraction(0.2));
    const int expected = std::min(std::max(1, static_cast<int>(std::ceil(0.2 * n))), n - 1);
    for (const auto& nb : g.neighbors) CHECK(static_cast<int>(nb.size()) == expected);
    if (n == 10) CHECK(expected == 2);
  }
}

TEST_CASE("nearest neighbor selection on nearly collinear points") {
  TspInstance inst;
  inst.xs = {0.0, 0.1, 0.5, 1.0};
  inst.ys = {0.0, 0.0, 0.0, 1.0};
  SparseGraph g = sparsify(inst, GraphSpec::fixed_degree(1));
  CHECK(g.neighbors[2] == std::vector<int>{1});
}

TEST_CASE("full graphs connect every ordered pair") {
  Rng rng(3);
  TspInstance inst = sample_instance(5, rng);
  SparseGraph g = sparsify(inst, GraphSpec::full());
  CHECK(g.num_edges() == 20);
  for (int i = 0; i < 5; ++i) {
    CHECK(g.neighbors[i].size() == 4);
    for (int j : g.neighbors[i]) CHECK(j != i);
  }
  CHECK(g.edge_id(0, 1) == 0);
  CHECK(g.edge_id(1, 0) == 4);
  CHECK(g.edge_id(2, 2) == -1);
}

TEST_CASE("fixed-degree graphs are exact k-NN sets") {
  Rng rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    TspInstance inst = sample_instance(15, rng);
    SparseGraph g = sparsify(inst, GraphSpec::fixed_degree(4));
    for (int i = 0; i < inst.n(); ++i) {
      double worst_in = 0.0;
      for (int j : g.neighbors[i]) worst_in = std::max(worst_in, edge_dist(inst, i, j));
      for (int j = 0; j < inst.n(); ++j) {
        if (j == i) continue;
        bool included = g.edge_id(i, j) >= 0;
        if (!included) CHECK(edge_dist(inst, i, j) >= worst_in);
      }
    }
  }
}

TEST_CASE("dataset line format matches the fixed convention") {
  TspInstance sq = corners();
  Tour tour = {0, 1, 2, 3};
  CHECK(format_dataset_line(sq, &tour) == "0 0 0 1 1 1 1 0 output 1 2 3 4 1");
  CHECK(format_dataset_line(sq, nullptr) == "0 0 0 1 1 1 1 0");
}

TEST_CASE("dataset round-trip is bit-identical") {
  Rng rng(23);
  Dataset ds;
  for (int i = 0; i < 1000; ++i) {
    const int n = 5 + rng.uniform_int(16);
    ds.instances.push_back(sample_instance(n, rng));
    Tour t(n);
    for (int j = 0; j < n; ++j) t[j] = j;
    for (int j = n - 1; j > 0; --j) std::swap(t[j], t[rng.uniform_int(j + 1)]);
    ds.tours.push_back(t);
  }

  const std::string p1 = temp_path("ncopt_ds_a.txt");
  const std::string p2 = temp_path("ncopt_ds_b.txt");
  write_dataset(ds, p1);
  Dataset back = read_dataset(p1);
  REQUIRE(back.size() == ds.size());
  CHECK(back.tours == ds.tours);
  for (size_t i = 0; i < ds.size(); ++i) {
    for (int j = 0; j < ds.instances[i].n(); ++j) {
      CHECK(std::abs(back.instances[i].xs[j] - ds.instances[i].xs[j]) <= 1e-9);
      CHECK(std::abs(back.instances[i].ys[j] - ds.instances[i].ys[j]) <= 1e-9);
    }
  }
  write_dataset(back, p2);
  std::ifstream f1(p1), f2(p2);
  std::string s1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
  std::string s2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
  CHECK(s1 == s2);
  std::remove(p1.c_str());
  std::remove(p2.c_str());
}

TEST_CASE("dataset reader rejects malformed input") {
  auto write_text = [](const std::string& path, const std::string& text) {
    std::ofstream out(path);
    out << text;
  };
  const std::string p = temp_path("ncopt_ds_bad.txt");

  write_text(p, "0 0 0 1 1 1 1 0 output 1 2 3 4\n");  // not closed
  CHECK_THROWS(read_dataset(p));
  write_text(p, "0 0 0 1 1 1 1 0 output 1 2 3 5 1\n");  // index out of range
  CHECK_THROWS(read_dataset(p));
  write_text(p, "0 0 0 1 1 1 1 garbage\n");  // bad coordinate
  CHECK_THROWS(read_dataset(p));
  write_text(p, "0 0 0 1 1 1 1\n");  // odd coordinate count
  CHECK_THROWS(read_dataset(p));
  write_text(p, "0 0 0 1 1 1 1 0 output 1 2 3 4 1\n0 0 0 1 1 1 1 0\n");  // mixed labeling
  CHECK_THROWS(read_dataset(p));
  write_text(p, "0 0 0 1 1 1 1 0 output 1 2 2 4 1\n");  // repeated node
  CHECK_THROWS(read_dataset(p));
  std::remove(p.c_str());
}

TEST_CASE("unlabeled datasets round-trip without tours") {
  Rng rng(31);
  Dataset ds;
  ds.instances = sample_instances(5, 8, rng);
  const std::string p = temp_path("ncopt_ds_unlabeled.txt");
  write_dataset(ds, p);
  Dataset back = read_dataset(p);
  CHECK(!back.labeled());
  CHECK(back.size() == 5);
  std::remove(p.c_str());
}
