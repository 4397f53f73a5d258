#pragma once

#include <sstream>
#include <string>

#include "flowplace/core/metrics.hpp"
#include "flowplace/harness/instance_io.hpp"

namespace flowplace {

struct SvgOptions {
  int size_px = 512;
  bool show_nets = true;
  bool highlight_overlap = true;
};

namespace detail {

class SvgCanvas {
 public:
  explicit SvgCanvas(int px) : px_(px) {}

  double sx(double x) const { return (x - kFrameMin) / kFrameExtent * px_; }
  double sy(double y) const { return (kFrameMax - y) / kFrameExtent * px_; }  // y axis points up
  double len(double d) const { return d / kFrameExtent * px_; }

  void rect(std::ostringstream& os, const Rect& r, const char* cls, const char* style) const {
    os << "<rect class=\"" << cls << "\" x=\"" << num(sx(r.xlo)) << "\" y=\"" << num(sy(r.yhi)) << "\" width=\""
       << num(len(r.width())) << "\" height=\"" << num(len(r.height())) << "\" " << style << "/>\n";
  }

  static std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3f", v);
    return buf;
  }

 private:
  int px_;
};

inline void render_layout(std::ostringstream& os, const SvgCanvas& c, const PlacementInstance& inst,
                          const Placement& p, const SvgOptions& opt) {
  for (std::size_t i = 0; i < inst.size(); ++i)
    c.rect(os, macro_box(inst.macros[i], p[i]), "macro",
           "fill=\"#9ab8d8\" fill-opacity=\"0.7\" stroke=\"#1f3b5c\" stroke-width=\"1\"");
  if (opt.show_nets)
    for (const NetEdge& e : inst.netlist.edges) {
      const Vec2 a = pin_position(inst.macros[e.macro_a], p[e.macro_a], e.pin_a);
      const Vec2 b = pin_position(inst.macros[e.macro_b], p[e.macro_b], e.pin_b);
      os << "<line class=\"net\" x1=\"" << SvgCanvas::num(c.sx(a.x)) << "\" y1=\"" << SvgCanvas::num(c.sy(a.y))
         << "\" x2=\"" << SvgCanvas::num(c.sx(b.x)) << "\" y2=\"" << SvgCanvas::num(c.sy(b.y))
         << "\" stroke=\"#c0392b\" stroke-width=\"0.6\" stroke-opacity=\"0.6\"/>\n";
    }
  if (opt.highlight_overlap)
    for (std::size_t i = 0; i < inst.size(); ++i)
      for (std::size_t j = i + 1; j < inst.size(); ++j) {
        const Rect a = macro_box(inst.macros[i], p[i]);
        const Rect b = macro_box(inst.macros[j], p[j]);
        if (intersection_area(a, b) == 0.0) continue;
        const Rect r{std::max(a.xlo, b.xlo), std::max(a.ylo, b.ylo), std::min(a.xhi, b.xhi), std::min(a.yhi, b.yhi)};
        c.rect(os, r, "overlap", "fill=\"#e74c3c\" fill-opacity=\"0.8\"");
      }
}

}  // namespace detail

/// SVG of one placement: canvas frame, one rect.macro per macro, optional
/// line.net per edge and rect.overlap per overlapping pair.
inline std::string render_svg(const PlacementInstance& inst, const Placement& p, const SvgOptions& opt = {}) {
  require_same_size(inst, p);
  const detail::SvgCanvas c(opt.size_px);
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << opt.size_px << "\" height=\"" << opt.size_px
     << "\" viewBox=\"0 0 " << opt.size_px << ' ' << opt.size_px << "\">\n";
  c.rect(os, {kFrameMin, kFrameMin, kFrameMax, kFrameMax}, "canvas", "fill=\"white\" stroke=\"black\"");
  detail::render_layout(os, c, inst, p, opt);
  os << "</svg>\n";
  return os.str();
}

/// Trajectory film strip: one g.frame per trace state laid out left to right.
inline std::string render_trace_svg(const PlacementInstance& inst, const Trace& tr, const SvgOptions& opt = {}) {
  const int px = opt.size_px;
  const std::size_t frames = tr.frames.size();
  const std::size_t steps = frames ? frames - 1 : 0;
  const detail::SvgCanvas c(px);
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << px * frames << "\" height=\"" << px + 20
     << "\" viewBox=\"0 0 " << px * frames << ' ' << px + 20 << "\">\n";
  for (std::size_t k = 0; k < frames; ++k) {
    require_same_size(inst, tr.frames[k]);
    os << "<g class=\"frame\" transform=\"translate(" << px * k << ",20)\">\n";
    os << "<text x=\"4\" y=\"-6\" font-size=\"12\">t = "
       << detail::SvgCanvas::num(steps ? static_cast<double>(k) / steps : 0.0) << "</text>\n";
    c.rect(os, {kFrameMin, kFrameMin, kFrameMax, kFrameMax}, "canvas", "fill=\"white\" stroke=\"black\"");
    detail::render_layout(os, c, inst, tr.frames[k], opt);
    os << "</g>\n";
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace flowplace
