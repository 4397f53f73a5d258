#pragma once

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "flowplace/core/errors.hpp"
#include "flowplace/core/types.hpp"
#include "flowplace/synthgen/netlist_builder.hpp"

// Instance file, version 1. Line oriented, whitespace separated; blank lines
// and lines starting with '#' are ignored. Sizes, offsets and positions are in
// the normalized [-1, 1] frame; `canvas` carries the physical dimensions.
//
//   flowplace-instance 1
//   canvas <width> <height>
//   macros <N>
//   macro <id> <w> <h> <pin_count>      N times, each followed by
//   pin <dx> <dy>                       pin_count lines
//   edges <E>
//   edge <macro_a> <pin_a> <macro_b> <pin_b>   E times
//   placement <N>                       optional block
//   pos <x> <y>                         N times
//   end
//
// Reals are written in shortest round-trip form, so parse(serialize(x)) == x.
//
// Placement files use the same conventions:
//
//   flowplace-placement 1
//   placement <N>
//   pos <x> <y>
//   end
//
// Trace files hold the sampler state at t = k / steps for k = 0..steps:
//
//   flowplace-trace 1
//   trace <frames> <N>
//   frame <k> <t>
//   pos <x> <y>                         N times per frame
//   end

namespace flowplace {

inline constexpr int kInstanceFormatVersion = 1;

namespace io {

inline std::string format_real(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

struct Line {
  int number = 0;
  std::vector<std::string_view> tokens;
};

/// Tokenized view of a text document. `text` must outlive the reader.
class Reader {
 public:
  Reader(std::string_view text, std::string source) : source_(std::move(source)) {
    int number = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
      const std::size_t end = std::min(text.find('\n', pos), text.size());
      std::string_view raw = text.substr(pos, end - pos);
      ++number;
      Line line{number, {}};
      std::size_t i = 0;
      while (i < raw.size()) {
        while (i < raw.size() && std::isspace(static_cast<unsigned char>(raw[i]))) ++i;
        if (i >= raw.size()) break;
        std::size_t j = i;
        while (j < raw.size() && !std::isspace(static_cast<unsigned char>(raw[j]))) ++j;
        line.tokens.push_back(raw.substr(i, j - i));
        i = j;
      }
      if (!line.tokens.empty() && line.tokens[0][0] != '#') lines_.push_back(std::move(line));
      pos = end + 1;
    }
    last_line_ = number;
  }

  bool done() const { return next_ >= lines_.size(); }

  const Line& peek() const {
    if (done()) fail(last_line_, "unexpected end of file");
    return lines_[next_];
  }

  /// Next line, which must start with `keyword` and carry `arity` arguments.
  const Line& expect(std::string_view keyword, std::size_t arity) {
    const Line& l = peek();
    if (l.tokens[0] != keyword)
      fail(l.number, "expected '" + std::string(keyword) + "', found '" + std::string(l.tokens[0]) + "'");
    if (l.tokens.size() != arity + 1)
      fail(l.number, "'" + std::string(keyword) + "' takes " + std::to_string(arity) + " values, got " +
                         std::to_string(l.tokens.size() - 1));
    ++next_;
    return l;
  }

  double real(const Line& l, std::size_t k, std::string_view field) const {
    const std::string_view s = l.tokens[k];
    double v = 0.0;
    const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (r.ec != std::errc() || r.ptr != s.data() + s.size() || !std::isfinite(v))
      fail(l.number, std::string(field) + ": '" + std::string(s) + "' is not a finite number");
    return v;
  }

  long long integer(const Line& l, std::size_t k, std::string_view field, long long lo = 0,
                    long long hi = (1LL << 31) - 1) const {
    const std::string_view s = l.tokens[k];
    long long v = 0;
    const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (r.ec != std::errc() || r.ptr != s.data() + s.size())
      fail(l.number, std::string(field) + ": '" + std::string(s) + "' is not an integer");
    if (v < lo || v > hi)
      fail(l.number, std::string(field) + " " + std::to_string(v) + " out of range [" + std::to_string(lo) + ", " +
                         std::to_string(hi) + "]");
    return v;
  }

  void header(std::string_view magic) {
    const Line& l = expect(magic, 1);
    const long long v = integer(l, 1, "version", 0);
    if (v != kInstanceFormatVersion)
      fail(l.number, "unsupported version " + std::to_string(v) + " (expected " +
                         std::to_string(kInstanceFormatVersion) + ")");
  }

  void finish() {
    expect("end", 0);
    if (!done()) fail(peek().number, "content after 'end'");
  }

  [[noreturn]] void fail(int line, const std::string& what) const {
    throw ParseError(source_ + ":" + std::to_string(line), what);
  }

 private:
  std::string source_;
  std::vector<Line> lines_;
  std::size_t next_ = 0;
  int last_line_ = 0;
};

inline Placement read_positions(Reader& in, std::size_t expected_n, bool check_n) {
  const Line& head = in.expect("placement", 1);
  const auto n = static_cast<std::size_t>(in.integer(head, 1, "placement count"));
  if (check_n && n != expected_n)
    in.fail(head.number, "placement has " + std::to_string(n) + " positions but the instance has " +
                             std::to_string(expected_n) + " macros");
  Placement p(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Line& l = in.expect("pos", 2);
    p[i] = {in.real(l, 1, "x"), in.real(l, 2, "y")};
  }
  return p;
}

inline void write_positions(std::ostream& os, const Placement& p) {
  os << "placement " << p.size() << '\n';
  for (const auto& v : p.positions) os << "pos " << format_real(v.x) << ' ' << format_real(v.y) << '\n';
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ParseError(path.string(), "cannot open file");
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot write '" + path.string() + "'");
  f << content;
  if (!f) throw ConfigError("failed writing '" + path.string() + "'");
}

}  // namespace io

struct InstanceFile {
  PlacementInstance instance;
  std::optional<Placement> placement;
};

inline std::string serialize_instance(const PlacementInstance& inst, const Placement* placement = nullptr) {
  using io::format_real;
  std::ostringstream os;
  os << "flowplace-instance " << kInstanceFormatVersion << '\n';
  os << "canvas " << format_real(inst.canvas.width) << ' ' << format_real(inst.canvas.height) << '\n';
  os << "macros " << inst.macros.size() << '\n';
  for (const Macro& m : inst.macros) {
    os << "macro " << m.id << ' ' << format_real(m.width) << ' ' << format_real(m.height) << ' ' << m.pins.size()
       << '\n';
    for (const PinOffset& p : m.pins) os << "pin " << format_real(p.dx) << ' ' << format_real(p.dy) << '\n';
  }
  os << "edges " << inst.netlist.edges.size() << '\n';
  for (const NetEdge& e : inst.netlist.edges)
    os << "edge " << e.macro_a << ' ' << e.pin_a << ' ' << e.macro_b << ' ' << e.pin_b << '\n';
  if (placement) {
    require_same_size(inst, *placement);
    io::write_positions(os, *placement);
  }
  os << "end\n";
  return os.str();
}

inline std::string serialize_instance(const InstanceFile& f) {
  return serialize_instance(f.instance, f.placement ? &*f.placement : nullptr);
}

/// Parses and validates an instance document. `source` names it in diagnostics.
inline InstanceFile parse_instance(std::string_view text, const std::string& source = "<instance>") {
  io::Reader in(text, source);
  in.header("flowplace-instance");
  InstanceFile out;
  PlacementInstance& inst = out.instance;
  {
    const io::Line& l = in.expect("canvas", 2);
    inst.canvas = {in.real(l, 1, "canvas width"), in.real(l, 2, "canvas height")};
    if (!(inst.canvas.width > 0) || !(inst.canvas.height > 0)) in.fail(l.number, "canvas dimensions must be positive");
  }
  const io::Line& ml = in.expect("macros", 1);
  const auto n = static_cast<std::size_t>(in.integer(ml, 1, "macro count", 1));
  for (std::size_t i = 0; i < n; ++i) {
    const io::Line& l = in.expect("macro", 4);
    Macro m;
    m.id = static_cast<int>(in.integer(l, 1, "macro id"));
    m.width = in.real(l, 2, "macro width");
    m.height = in.real(l, 3, "macro height");
    const std::string tag = "macro " + std::to_string(i);
    if (!(m.width > 0) || !(m.height > 0)) in.fail(l.number, tag + ": width and height must be positive");
    if (m.width > kFrameExtent + kGeomTol || m.height > kFrameExtent + kGeomTol)
      in.fail(l.number, tag + ": larger than the canvas (normalized extent 2)");
    const auto pins = static_cast<std::size_t>(in.integer(l, 4, "pin count"));
    for (std::size_t k = 0; k < pins; ++k) {
      const io::Line& pl = in.expect("pin", 2);
      PinOffset p{in.real(pl, 1, "pin dx"), in.real(pl, 2, "pin dy")};
      if (std::abs(p.dx) > m.width / 2 + kGeomTol || std::abs(p.dy) > m.height / 2 + kGeomTol)
        in.fail(pl.number, tag + " pin " + std::to_string(k) + ": offset outside the macro");
      m.pins.push_back(p);
    }
    inst.macros.push_back(std::move(m));
  }
  const io::Line& el = in.expect("edges", 1);
  const auto e_count = static_cast<std::size_t>(in.integer(el, 1, "edge count"));
  for (std::size_t e = 0; e < e_count; ++e) {
    const io::Line& l = in.expect("edge", 4);
    NetEdge edge{static_cast<int>(in.integer(l, 1, "macro_a", -(1LL << 31))),
                 static_cast<int>(in.integer(l, 2, "pin_a", -(1LL << 31))),
                 static_cast<int>(in.integer(l, 3, "macro_b", -(1LL << 31))),
                 static_cast<int>(in.integer(l, 4, "pin_b", -(1LL << 31)))};
    PlacementInstance probe;
    probe.macros = inst.macros;
    probe.netlist.edges = {edge};
    try {
      probe.validate();
    } catch (const ConfigError& err) {
      std::string what = err.what();
      what.replace(0, what.find(':'), "edge " + std::to_string(e));
      in.fail(l.number, what);
    }
    inst.netlist.edges.push_back(edge);
  }
  if (!in.done() && in.peek().tokens[0] == "placement") out.placement = io::read_positions(in, n, true);
  in.finish();
  try {
    inst.validate();
  } catch (const ConfigError& err) {
    throw ParseError(source, err.what());
  }
  return out;
}

inline InstanceFile load_instance(const std::filesystem::path& path) {
  return parse_instance(io::read_file(path), path.string());
}

inline void save_instance(const std::filesystem::path& path, const PlacementInstance& inst,
                          const Placement* placement = nullptr) {
  io::write_file(path, serialize_instance(inst, placement));
}

inline std::string serialize_placement(const Placement& p) {
  std::ostringstream os;
  os << "flowplace-placement " << kInstanceFormatVersion << '\n';
  io::write_positions(os, p);
  os << "end\n";
  return os.str();
}

inline Placement parse_placement(std::string_view text, const std::string& source = "<placement>") {
  io::Reader in(text, source);
  in.header("flowplace-placement");
  Placement p = io::read_positions(in, 0, false);
  in.finish();
  return p;
}

inline Placement load_placement(const std::filesystem::path& path) {
  return parse_placement(io::read_file(path), path.string());
}

/// Sampler states x_{k/steps}, k = 0..steps.
struct Trace {
  std::vector<Placement> frames;
};

inline std::string serialize_trace(const Trace& tr) {
  std::ostringstream os;
  os << "flowplace-trace " << kInstanceFormatVersion << '\n';
  const std::size_t n = tr.frames.empty() ? 0 : tr.frames[0].size();
  const std::size_t steps = tr.frames.empty() ? 0 : tr.frames.size() - 1;
  os << "trace " << tr.frames.size() << ' ' << n << '\n';
  for (std::size_t k = 0; k < tr.frames.size(); ++k) {
    const double t = steps == 0 ? 0.0 : static_cast<double>(k) / static_cast<double>(steps);
    os << "frame " << k << ' ' << io::format_real(t) << '\n';
    if (tr.frames[k].size() != n) throw ContractError("trace frames differ in size");
    for (const auto& v : tr.frames[k].positions)
      os << "pos " << io::format_real(v.x) << ' ' << io::format_real(v.y) << '\n';
  }
  os << "end\n";
  return os.str();
}

inline Trace parse_trace(std::string_view text, const std::string& source = "<trace>") {
  io::Reader in(text, source);
  in.header("flowplace-trace");
  const io::Line& h = in.expect("trace", 2);
  const auto frames = static_cast<std::size_t>(in.integer(h, 1, "frame count"));
  const auto n = static_cast<std::size_t>(in.integer(h, 2, "macro count"));
  Trace tr;
  for (std::size_t k = 0; k < frames; ++k) {
    const io::Line& fl = in.expect("frame", 2);
    if (in.integer(fl, 1, "frame index") != static_cast<long long>(k)) in.fail(fl.number, "frames out of order");
    in.real(fl, 2, "frame time");
    Placement p(n);
    for (std::size_t i = 0; i < n; ++i) {
      const io::Line& l = in.expect("pos", 2);
      p[i] = {in.real(l, 1, "x"), in.real(l, 2, "y")};
    }
    tr.frames.push_back(std::move(p));
  }
  in.finish();
  return tr;
}

/// Dataset directory: one instance file (with reference placement) per sample,
/// named sample_<index>.fpi, zero-padded to 6 digits.
inline std::filesystem::path sample_path(const std::filesystem::path& dir, std::size_t index) {
  char name[32];
  std::snprintf(name, sizeof name, "sample_%06zu.fpi", index);
  return dir / name;
}

inline std::vector<std::filesystem::path> list_dataset(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw ConfigError("'" + dir.string() + "' is not a directory");
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".fpi") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  return files;
}

/// Loads up to `limit` samples (0 = all); every file must carry a placement.
inline std::vector<Sample> load_dataset(const std::filesystem::path& dir, std::size_t limit = 0) {
  std::vector<Sample> out;
  for (const auto& path : list_dataset(dir)) {
    if (limit && out.size() >= limit) break;
    InstanceFile f = load_instance(path);
    if (!f.placement) throw ParseError(path.string(), "dataset sample has no reference placement");
    out.push_back({std::move(f.instance), std::move(*f.placement)});
  }
  if (out.empty()) throw ConfigError("dataset '" + dir.string() + "' contains no .fpi files");
  return out;
}

}  // namespace flowplace
