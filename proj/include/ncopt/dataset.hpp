#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ncopt/instances.hpp"

namespace ncopt {

// One instance per line: `x1 y1 x2 y2 ... xn yn` with 10 significant digits,
// optionally followed by `output i1 i2 ... in i1` where indices are 1-based
// and the first index repeats to close the tour.
struct Dataset {
  std::vector<TspInstance> instances;
  std::vector<Tour> tours;  // empty for unlabeled data, else one per instance

  bool labeled() const { return !tours.empty(); }
  size_t size() const { return instances.size(); }

  void validate() const;
};

std::string format_dataset_line(const TspInstance& inst, const Tour* tour);

void write_dataset(const Dataset& ds, const std::string& path);
Dataset read_dataset(const std::string& path);

// Splits a mixed-size dataset into per-size buckets, preserving order.
std::map<int, Dataset> group_by_size(const Dataset& ds);

}  // namespace ncopt
