#pragma once

#include <string>
#include <vector>

#include "ncopt/evaluation.hpp"
#include "ncopt/model.hpp"

namespace ncopt {

// Escapes &, <, >, ", ' for use in XML text and attribute values.
std::string xml_escape(const std::string& s);

// Minimal XML well-formedness check covering what this project emits:
// one root element, balanced nesting, quoted attributes, comments, and an
// optional leading declaration. Raw '<' in content and bare '&' outside an
// entity reference are rejected.
bool xml_well_formed(const std::string& text);

// One curve on the gap chart, points ordered by ascending size.
struct GapCurve {
  std::string label;
  std::vector<double> x;        // instance sizes
  std::vector<double> y;        // mean gap, percent
  std::vector<double> half_ci;  // CI half-widths, same length as y
};

GapCurve curve_from_report(const EvalReport& rep, const std::string& label);

// Standalone line chart of gap vs size with shaded CI bands; a single-point
// curve renders as a marker with an error bar.
std::string gap_chart_svg(const std::vector<GapCurve>& curves, const std::string& title);

// Instance drawing on the unit square: nodes, an optional reference tour
// (dashed), an optional predicted tour (solid), and optional heatmap edges
// drawn once per undirected pair with opacity max(p_ij, p_ji).
struct VizOptions {
  const Tour* reference = nullptr;
  const Tour* predicted = nullptr;
  const Heatmap* heatmap = nullptr;
  std::string title;
};

std::string instance_svg(const TspInstance& inst, const VizOptions& opts);

}  // namespace ncopt
