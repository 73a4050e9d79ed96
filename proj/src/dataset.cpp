#include "ncopt/dataset.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace ncopt {

namespace {

std::string format_coord(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

}  // namespace

void Dataset::validate() const {
  NC_REQUIRE(tours.empty() || tours.size() == instances.size(),
             "dataset: " << tours.size() << " tours for " << instances.size() << " instances");
  for (size_t i = 0; i < instances.size(); ++i) {
    instances[i].validate();
    if (!tours.empty()) require_valid_tour(tours[i], instances[i].n());
  }
}

std::string format_dataset_line(const TspInstance& inst, const Tour* tour) {
  std::ostringstream oss;
  for (int i = 0; i < inst.n(); ++i) {
    if (i) oss << ' ';
    oss << format_coord(inst.xs[i]) << ' ' << format_coord(inst.ys[i]);
  }
  if (tour) {
    oss << " output";
    for (int v : *tour) oss << ' ' << v + 1;
    oss << ' ' << tour->front() + 1;
  }
  return oss.str();
}

void write_dataset(const Dataset& ds, const std::string& path) {
  ds.validate();
  std::ofstream out(path);
  NC_REQUIRE(out.good(), "cannot open '" << path << "' for writing");
  for (size_t i = 0; i < ds.instances.size(); ++i) {
    out << format_dataset_line(ds.instances[i], ds.labeled() ? &ds.tours[i] : nullptr) << '\n';
  }
  NC_CHECK(out.good(), "write failed for '" << path << "'");
}

Dataset read_dataset(const std::string& path) {
  std::ifstream in(path);
  NC_REQUIRE(in.good(), "cannot open dataset '" << path << "'");
  Dataset ds;
  std::string line;
  int lineno = 0;
  bool any_labeled = false, any_unlabeled = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream iss(line);
    TspInstance inst;
    std::string tok;
    bool in_tour = false;
    std::vector<int> raw_tour;
    std::vector<double> coords;
    while (iss >> tok) {
      if (tok == "output") {
        NC_REQUIRE(!in_tour, path << ":" << lineno << ": duplicate 'output' token");
        in_tour = true;
        continue;
      }
      if (in_tour) {
        size_t pos = 0;
        int v = 0;
        try {
          v = std::stoi(tok, &pos);
        } catch (const std::exception&) {
          NC_REQUIRE(false, path << ":" << lineno << ": bad tour index '" << tok << "'");
        }
        NC_REQUIRE(pos == tok.size(), path << ":" << lineno << ": bad tour index '" << tok << "'");
        raw_tour.push_back(v);
      } else {
        size_t pos = 0;
        double v = 0;
        try {
          v = std::stod(tok, &pos);
        } catch (const std::exception&) {
          NC_REQUIRE(false, path << ":" << lineno << ": bad coordinate '" << tok << "'");
        }
        NC_REQUIRE(pos == tok.size(), path << ":" << lineno << ": bad coordinate '" << tok << "'");
        coords.push_back(v);
      }
    }
    NC_REQUIRE(coords.size() % 2 == 0,
               path << ":" << lineno << ": odd number of coordinate values");
    const int n = static_cast<int>(coords.size() / 2);
    inst.xs.resize(n);
    inst.ys.resize(n);
    for (int i = 0; i < n; ++i) {
      inst.xs[i] = coords[2 * i];
      inst.ys[i] = coords[2 * i + 1];
    }
    inst.validate();

    if (in_tour) {
      NC_REQUIRE(static_cast<int>(raw_tour.size()) == n + 1,
                 path << ":" << lineno << ": tour has " << raw_tour.size() << " indices, expected "
                      << n + 1);
      NC_REQUIRE(raw_tour.front() == raw_tour.back(),
                 path << ":" << lineno << ": tour is not closed");
      Tour tour(n);
      for (int i = 0; i < n; ++i) {
        const int v = raw_tour[i];
        NC_REQUIRE(v >= 1 && v <= n,
                   path << ":" << lineno << ": tour index " << v << " out of range 1.." << n);
        tour[i] = v - 1;
      }
      require_valid_tour(tour, n);
      ds.tours.push_back(std::move(tour));
      any_labeled = true;
    } else {
      any_unlabeled = true;
    }
    ds.instances.push_back(std::move(inst));
  }
  NC_REQUIRE(!(any_labeled && any_unlabeled),
             path << ": mixes labeled and unlabeled lines");
  return ds;
}

std::map<int, Dataset> group_by_size(const Dataset& ds) {
  std::map<int, Dataset> out;
  for (size_t i = 0; i < ds.size(); ++i) {
    Dataset& bucket = out[ds.instances[i].n()];
    bucket.instances.push_back(ds.instances[i]);
    if (ds.labeled()) bucket.tours.push_back(ds.tours[i]);
  }
  return out;
}

}  // namespace ncopt
