#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <string>

#include "ncopt/tape.hpp"
#include "ncopt/tensor.hpp"

namespace ncopt {

// A differentiable fragment under test: given a tape and concrete values for
// every named leaf, build the graph and return the scalar loss. The builder
// must create each leaf via tape.leaf(values.at(name), true, name).
using GradCheckFn =
    std::function<Var<double>(Tape<double>&, const std::map<std::string, Tensor<double>>&)>;

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::string worst_leaf;
  int worst_index = -1;
  double analytic = 0.0;
  double numeric = 0.0;
};

// Central-difference check of analytic gradients wrt every named leaf.
// Fragments must be deterministic; a builder whose loss differs between two
// identical evaluations is rejected outright.
//
// Elements whose first difference misses refine_threshold are re-measured at
// shrinking step sizes: an artifact of straddling a relu-style kink vanishes
// once the step drops below the kink distance, while a wrong gradient keeps
// its mismatch at every step size. Five rounds reach h ~ 1.5e-10, still above
// the central-difference cancellation floor for O(1) losses.
inline GradCheckReport grad_check(const GradCheckFn& build,
                                  std::map<std::string, Tensor<double>> values,
                                  double rel_step = 1e-5, double refine_threshold = 1e-4) {
  auto eval = [&](const std::map<std::string, Tensor<double>>& vals) {
    Tape<double> tape(/*grad_enabled=*/false);
    return build(tape, vals).scalar();
  };

  const double l1 = eval(values);
  const double l2 = eval(values);
  NC_REQUIRE(l1 == l2, "grad_check: fragment is not deterministic (" << l1 << " vs " << l2 << ")");

  Tape<double> tape(/*grad_enabled=*/true);
  Var<double> loss = build(tape, values);
  GradMap<double> grads = tape.backward(loss);

  GradCheckReport report;
  for (auto& [name, tensor] : values) {
    const Tensor<double> zero(tensor.rows, tensor.cols);
    const Tensor<double>& g = grads.count(name) ? grads.at(name) : zero;
    for (size_t i = 0; i < tensor.data.size(); ++i) {
      const double orig = tensor.data[i];
      const double analytic = g.data[i];
      double numeric = 0.0, rel = 0.0;
      double h = rel_step * std::max(1.0, std::abs(orig));
      for (int refine = 0; refine < 5; ++refine, h /= 16.0) {
        tensor.data[i] = orig + h;
        const double fp = eval(values);
        tensor.data[i] = orig - h;
        const double fm = eval(values);
        tensor.data[i] = orig;
        numeric = (fp - fm) / (2.0 * h);
        rel = std::abs(analytic - numeric) / std::max(1.0, std::abs(numeric));
        if (rel <= refine_threshold) break;
      }
      if (rel > report.max_rel_err) {
        report.max_rel_err = rel;
        report.worst_leaf = name;
        report.worst_index = static_cast<int>(i);
        report.analytic = analytic;
        report.numeric = numeric;
      }
    }
  }
  return report;
}

}  // namespace ncopt
