#include "ncopt/svg.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>

namespace ncopt {

namespace {

const char* kPalette[] = {"#2563eb", "#dc2626", "#059669", "#d97706", "#7c3aed", "#0891b2"};
constexpr int kPaletteSize = 6;

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

// Tick positions at a 1/2/5 step covering [lo, hi].
std::vector<double> nice_ticks(double lo, double hi, int target) {
  if (hi <= lo) hi = lo + 1.0;
  const double raw = (hi - lo) / target;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  const double norm = raw / mag;
  const double step = (norm < 1.5 ? 1.0 : norm < 3.5 ? 2.0 : norm < 7.5 ? 5.0 : 10.0) * mag;
  std::vector<double> ticks;
  for (double t = std::ceil(lo / step) * step; t <= hi + 1e-9 * step; t += step)
    ticks.push_back(std::abs(t) < 1e-12 * step ? 0.0 : t);
  return ticks;
}

struct Axis {
  double lo, hi, px0, px1;

  double map(double v) const { return px0 + (v - lo) / (hi - lo) * (px1 - px0); }
};

void line(std::string& out, double x1, double y1, double x2, double y2, const std::string& style) {
  out += "<line x1=\"" + fmt(x1) + "\" y1=\"" + fmt(y1) + "\" x2=\"" + fmt(x2) + "\" y2=\"" +
         fmt(y2) + "\" " + style + "/>\n";
}

void text(std::string& out, double x, double y, const std::string& s, const std::string& attrs) {
  out += "<text x=\"" + fmt(x) + "\" y=\"" + fmt(y) + "\" " + attrs + ">" + xml_escape(s) +
         "</text>\n";
}

}  // namespace

std::string xml_escape(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&apos;"; break;
      default: out += c;
    }
  }
  return out;
}

bool xml_well_formed(const std::string& text) {
  const size_t n = text.size();
  size_t i = 0;
  std::vector<std::string> stack;
  bool seen_root = false;

  auto name_char = [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == ':' ||
           c == '.';
  };
  auto parse_name = [&](size_t& pos) {
    const size_t start = pos;
    while (pos < n && name_char(text[pos])) ++pos;
    return text.substr(start, pos - start);
  };
  auto entity_ok = [&](size_t& pos) {
    // pos is at '&'; a valid reference is &name; or &#digits;
    size_t p = pos + 1;
    if (p < n && text[p] == '#') ++p;
    const size_t body = p;
    while (p < n && std::isalnum(static_cast<unsigned char>(text[p]))) ++p;
    if (p == body || p >= n || text[p] != ';') return false;
    pos = p;
    return true;
  };

  while (i < n) {
    if (text[i] != '<') {
      if (text[i] == '&') {
        if (stack.empty() || !entity_ok(i)) return false;
      } else if (stack.empty() && !std::isspace(static_cast<unsigned char>(text[i]))) {
        return false;  // character data outside the root element
      }
      ++i;
      continue;
    }
    if (text.compare(i, 4, "<!--") == 0) {
      const size_t end = text.find("-->", i + 4);
      if (end == std::string::npos) return false;
      i = end + 3;
      continue;
    }
    if (text.compare(i, 2, "<?") == 0) {
      const size_t end = text.find("?>", i + 2);
      if (end == std::string::npos) return false;
      i = end + 2;
      continue;
    }
    if (text.compare(i, 2, "<!") == 0) {
      const size_t end = text.find('>', i + 2);
      if (end == std::string::npos) return false;
      i = end + 1;
      continue;
    }
    if (text.compare(i, 2, "</") == 0) {
      i += 2;
      const std::string name = parse_name(i);
      while (i < n && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
      if (name.empty() || i >= n || text[i] != '>') return false;
      ++i;
      if (stack.empty() || stack.back() != name) return false;
      stack.pop_back();
      continue;
    }
    ++i;
    const std::string name = parse_name(i);
    if (name.empty()) return false;
    if (stack.empty() && seen_root) return false;  // a second root element
    bool self_closing = false;
    while (true) {
      while (i < n && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
      if (i >= n) return false;
      if (text[i] == '/') {
        if (i + 1 >= n || text[i + 1] != '>') return false;
        self_closing = true;
        i += 2;
        break;
      }
      if (text[i] == '>') {
        ++i;
        break;
      }
      const std::string attr = parse_name(i);
      if (attr.empty()) return false;
      while (i < n && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
      if (i >= n || text[i] != '=') return false;
      ++i;
      while (i < n && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
      if (i >= n || (text[i] != '"' && text[i] != '\'')) return false;
      const char quote = text[i++];
      while (i < n && text[i] != quote) {
        if (text[i] == '<') return false;
        if (text[i] == '&' && !entity_ok(i)) return false;
        ++i;
      }
      if (i >= n) return false;
      ++i;
    }
    seen_root = true;
    if (!self_closing) stack.push_back(name);
  }
  return stack.empty() && seen_root;
}

GapCurve curve_from_report(const EvalReport& rep, const std::string& label) {
  GapCurve c;
  c.label = label;
  for (const auto& r : rep.sizes) {
    c.x.push_back(r.n);
    c.y.push_back(r.mean_gap);
    c.half_ci.push_back(r.ci99_half_width);
  }
  return c;
}

std::string gap_chart_svg(const std::vector<GapCurve>& curves, const std::string& title) {
  NC_REQUIRE(!curves.empty(), "gap chart needs at least one curve");
  for (const auto& c : curves) {
    NC_REQUIRE(!c.x.empty(), "gap curve '" << c.label << "' has no points");
    NC_REQUIRE(c.x.size() == c.y.size() && c.x.size() == c.half_ci.size(),
               "gap curve '" << c.label << "' has mismatched point arrays");
    for (size_t i = 1; i < c.x.size(); ++i)
      NC_REQUIRE(c.x[i] > c.x[i - 1], "gap curve '" << c.label << "' sizes must ascend");
  }

  double x_lo = curves[0].x.front(), x_hi = x_lo, y_lo = 0.0, y_hi = 0.0;
  for (const auto& c : curves)
    for (size_t i = 0; i < c.x.size(); ++i) {
      x_lo = std::min(x_lo, c.x[i]);
      x_hi = std::max(x_hi, c.x[i]);
      y_lo = std::min(y_lo, c.y[i] - c.half_ci[i]);
      y_hi = std::max(y_hi, c.y[i] + c.half_ci[i]);
    }
  if (x_hi == x_lo) {
    x_lo -= 1.0;
    x_hi += 1.0;
  }
  const double y_pad = 0.05 * std::max(y_hi - y_lo, 1e-6);
  y_hi += y_pad;
  if (y_lo < 0.0) y_lo -= y_pad;

  const double width = 640, height = 420;
  const Axis ax{x_lo, x_hi, 60, width - 20};
  const Axis ay{y_lo, y_hi, height - 50, 40};  // screen y grows downward

  std::string out = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt(width) +
                    "\" height=\"" + fmt(height) + "\" viewBox=\"0 0 " + fmt(width) + " " +
                    fmt(height) + "\" font-family=\"sans-serif\">\n";
  out += "<rect width=\"" + fmt(width) + "\" height=\"" + fmt(height) + "\" fill=\"white\"/>\n";
  if (!title.empty()) text(out, width / 2, 24, title, "text-anchor=\"middle\" font-size=\"15\"");

  const std::string grid_style = "stroke=\"#e5e7eb\" stroke-width=\"1\"";
  const std::string tick_attrs = "text-anchor=\"middle\" font-size=\"11\" fill=\"#374151\"";
  for (double t : nice_ticks(ax.lo, ax.hi, 6)) {
    line(out, ax.map(t), ay.px0, ax.map(t), ay.px1, grid_style);
    text(out, ax.map(t), ay.px0 + 16, fmt(t), tick_attrs);
  }
  for (double t : nice_ticks(ay.lo, ay.hi, 6)) {
    line(out, ax.px0, ay.map(t), ax.px1, ay.map(t), grid_style);
    text(out, ax.px0 - 8, ay.map(t) + 4, fmt(t),
         "text-anchor=\"end\" font-size=\"11\" fill=\"#374151\"");
  }
  line(out, ax.px0, ay.px0, ax.px1, ay.px0, "stroke=\"#111827\" stroke-width=\"1\"");
  line(out, ax.px0, ay.px0, ax.px0, ay.px1, "stroke=\"#111827\" stroke-width=\"1\"");
  text(out, (ax.px0 + ax.px1) / 2, height - 14, "instance size n",
       "text-anchor=\"middle\" font-size=\"12\"");
  out += "<text x=\"16\" y=\"" + fmt((ay.px0 + ay.px1) / 2) +
         "\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 16 " +
         fmt((ay.px0 + ay.px1) / 2) + ")\">gap to reference (%)</text>\n";

  for (size_t ci = 0; ci < curves.size(); ++ci) {
    const GapCurve& c = curves[ci];
    const std::string color = kPalette[ci % kPaletteSize];
    if (c.x.size() > 1) {
      std::string band = "<polygon points=\"";
      for (size_t i = 0; i < c.x.size(); ++i)
        band += fmt(ax.map(c.x[i])) + "," + fmt(ay.map(c.y[i] + c.half_ci[i])) + " ";
      for (size_t i = c.x.size(); i-- > 0;)
        band += fmt(ax.map(c.x[i])) + "," + fmt(ay.map(c.y[i] - c.half_ci[i])) + " ";
      band.pop_back();
      out += band + "\" fill=\"" + color + "\" fill-opacity=\"0.15\" stroke=\"none\"/>\n";
      std::string poly = "<polyline points=\"";
      for (size_t i = 0; i < c.x.size(); ++i)
        poly += fmt(ax.map(c.x[i])) + "," + fmt(ay.map(c.y[i])) + " ";
      poly.pop_back();
      out += poly + "\" fill=\"none\" stroke=\"" + color + "\" stroke-width=\"2\"/>\n";
    } else {
      // lone point: explicit error bar with caps
      const double px = ax.map(c.x[0]);
      const double top = ay.map(c.y[0] + c.half_ci[0]), bot = ay.map(c.y[0] - c.half_ci[0]);
      const std::string bar = "stroke=\"" + color + "\" stroke-width=\"1.5\"";
      line(out, px, top, px, bot, bar);
      line(out, px - 5, top, px + 5, top, bar);
      line(out, px - 5, bot, px + 5, bot, bar);
    }
    for (size_t i = 0; i < c.x.size(); ++i)
      out += "<circle cx=\"" + fmt(ax.map(c.x[i])) + "\" cy=\"" + fmt(ay.map(c.y[i])) +
             "\" r=\"3\" fill=\"" + color + "\"/>\n";
    const double ly = 44 + 18 * static_cast<double>(ci);
    out += "<rect x=\"" + fmt(ax.px1 - 150) + "\" y=\"" + fmt(ly - 9) +
           "\" width=\"12\" height=\"12\" fill=\"" + color + "\"/>\n";
    text(out, ax.px1 - 134, ly + 1, c.label, "font-size=\"11\" fill=\"#111827\"");
  }

  out += "</svg>\n";
  return out;
}

std::string instance_svg(const TspInstance& inst, const VizOptions& opts) {
  inst.validate();
  const int n = inst.n();
  const double pad = 24, side = 480;
  const double width = side + 2 * pad, height = side + 2 * pad + (opts.title.empty() ? 0 : 28);
  const double top = pad + (opts.title.empty() ? 0 : 28);
  auto px = [&](int i) { return pad + inst.xs[i] * side; };
  auto py = [&](int i) { return top + (1.0 - inst.ys[i]) * side; };

  std::string out = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt(width) +
                    "\" height=\"" + fmt(height) + "\" viewBox=\"0 0 " + fmt(width) + " " +
                    fmt(height) + "\" font-family=\"sans-serif\">\n";
  out += "<rect width=\"" + fmt(width) + "\" height=\"" + fmt(height) + "\" fill=\"white\"/>\n";
  if (!opts.title.empty())
    text(out, width / 2, 20, opts.title, "text-anchor=\"middle\" font-size=\"14\"");

  if (opts.heatmap != nullptr) {
    const Heatmap& hm = *opts.heatmap;
    NC_REQUIRE(hm.graph.n == n, "heatmap drawn over a different instance size");
    NC_REQUIRE(hm.prob.size() == static_cast<size_t>(hm.graph.num_edges()),
               "heatmap probability array does not match its graph");
    for (int i = 0; i < n; ++i) {
      for (int j : hm.graph.neighbors[i]) {
        if (j < i && hm.graph.edge_id(j, i) >= 0) continue;  // drawn from the lower endpoint
        double p = hm.prob[hm.graph.edge_id(i, j)];
        const int rev = hm.graph.edge_id(j, i);
        if (rev >= 0) p = std::max(p, hm.prob[rev]);
        p = std::clamp(p, 0.0, 1.0);
        if (p < 0.004) continue;  // invisible at 8-bit alpha
        line(out, px(i), py(i), px(j), py(j),
             "stroke=\"#dc2626\" stroke-width=\"2\" stroke-opacity=\"" + fmt(p) + "\"");
      }
    }
  }

  auto tour_polyline = [&](const Tour& tour, const std::string& style) {
    require_valid_tour(tour, n);
    std::string poly = "<polyline points=\"";
    for (int v : tour) poly += fmt(px(v)) + "," + fmt(py(v)) + " ";
    poly += fmt(px(tour[0])) + "," + fmt(py(tour[0]));
    out += poly + "\" fill=\"none\" " + style + "/>\n";
  };
  if (opts.reference != nullptr)
    tour_polyline(*opts.reference,
                  "stroke=\"#6b7280\" stroke-width=\"1.5\" stroke-dasharray=\"5 4\"");
  if (opts.predicted != nullptr)
    tour_polyline(*opts.predicted, "stroke=\"#2563eb\" stroke-width=\"2\"");

  for (int i = 0; i < n; ++i)
    out += "<circle cx=\"" + fmt(px(i)) + "\" cy=\"" + fmt(py(i)) + "\" r=\"4\" fill=\"" +
           std::string(i == 0 ? "#111827" : "#4b5563") + "\"/>\n";
  out += "</svg>\n";
  return out;
}

}  // namespace ncopt
