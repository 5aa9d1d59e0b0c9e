#include "ewf/io.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "ewf/errors.hpp"
#include "ewf/units.hpp"

namespace ewf {

namespace {

constexpr const char* kTraceMagic = "# ewf-trace 1";
constexpr const char* kSnapshotMagic = "ewf-snapshot 1";
constexpr const char* kSpectrumHeader = "B0 [T],relative_intensity";
constexpr const char* kTraceHeader = "sample,z [m],t [s],marginal,pair,coordinate,re,im";

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  return out;
}

void close_out(std::ofstream& out, const std::string& path) {
  out.flush();
  if (!out) throw IoError("write to '" + path + "' failed");
}

// Line-oriented reader that reports the path and line number on failure.
class LineReader {
 public:
  explicit LineReader(const std::string& path) : path_(path), in_(path, std::ios::binary) {
    if (!in_) throw IoError("cannot open '" + path + "' for reading");
  }

  bool next(std::string& line) {
    if (!std::getline(in_, line)) return false;
    ++number_;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return true;
  }

  std::string expect_line() {
    std::string line;
    if (!next(line)) fail("unexpected end of file");
    return line;
  }

  [[noreturn]] void fail(const std::string& msg) const {
    throw IoError("'" + path_ + "' line " + std::to_string(number_) + ": " + msg);
  }

 private:
  std::string path_;
  std::ifstream in_;
  std::size_t number_ = 0;
};

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.push_back(s.substr(start, pos - start));
    if (pos == std::string::npos) return out;
    start = pos + 1;
  }
}

double to_double(const std::string& token, const LineReader& r) {
  double v = 0.0;
  const auto* end = token.data() + token.size();
  const auto [ptr, ec] = std::from_chars(token.data(), end, v);
  if (ec != std::errc{} || ptr != end) r.fail("malformed number '" + token + "'");
  return v;
}

std::size_t to_size(const std::string& token, const LineReader& r) {
  std::size_t v = 0;
  const auto* end = token.data() + token.size();
  const auto [ptr, ec] = std::from_chars(token.data(), end, v);
  if (ec != std::errc{} || ptr != end) r.fail("malformed integer '" + token + "'");
  return v;
}

std::string grid_fields(const PhaseSpaceGrid& g) {
  return format_double(g.x_min()) + " " + format_double(g.x_max()) + " " +
         std::to_string(g.n_x()) + " " + format_double(g.p_min()) + " " +
         format_double(g.p_max()) + " " + std::to_string(g.n_p());
}

PhaseSpaceGrid parse_grid_fields(const std::vector<std::string>& f, std::size_t first,
                                 const LineReader& r) {
  if (f.size() != first + 6) r.fail("grid needs six fields");
  try {
    return PhaseSpaceGrid(to_double(f[first], r), to_double(f[first + 1], r),
                          to_size(f[first + 2], r), to_double(f[first + 3], r),
                          to_double(f[first + 4], r), to_size(f[first + 5], r));
  } catch (const InvalidGrid& e) {
    r.fail(e.what());
  }
}

// Returns the words after `key` on a line of the form "<prefix><key> w1 w2 ...".
std::vector<std::string> keyed(const std::string& line, const std::string& key,
                               const LineReader& r) {
  auto words = split(line, ' ');
  if (words.empty() || words.front() != key) r.fail("expected '" + key + "'");
  words.erase(words.begin());
  return words;
}

std::string pair_name(const std::vector<std::string>& labels, std::size_t eta, std::size_t xi) {
  return labels[eta] + ":" + labels[xi];
}

}  // namespace

void emit_trace(const BeamTrace& trace, const std::string& path) {
  const std::size_t d = trace.dim;
  if (trace.labels.size() != d) throw IoError("trace for '" + path + "' has inconsistent labels");
  auto out = open_out(path);
  out << kTraceMagic << '\n';
  out << "# dim " << d << '\n';
  out << "# labels";
  for (const auto& l : trace.labels) out << ' ' << l;
  out << '\n';
  out << "# grid " << grid_fields(trace.grid) << '\n';
  out << "# samples " << trace.samples.size() << '\n';
  for (const auto& [name, value] : trace.scalars)
    out << "# scalar " << name << ' ' << format_double(value) << '\n';
  out << "# units: coordinate is x [m] for position rows and p [kg*m/s] for momentum rows\n";
  out << kTraceHeader << '\n';

  const auto& g = trace.grid;
  for (int block = 0; block < 2; ++block) {
    const char* name = block == 0 ? "position" : "momentum";
    for (std::size_t eta = 0; eta < d; ++eta)
      for (std::size_t xi = 0; xi < d; ++xi) {
        const auto pair = pair_name(trace.labels, eta, xi);
        for (std::size_t s = 0; s < trace.samples.size(); ++s) {
          const auto& sample = trace.samples[s];
          const auto& values = block == 0 ? sample.position[eta * d + xi]
                                          : sample.momentum[eta * d + xi];
          const std::string prefix = std::to_string(s) + ',' + format_double(sample.z) + ',' +
                                     format_double(sample.time) + ',' + name + ',' + pair + ',';
          for (std::size_t k = 0; k < values.size(); ++k) {
            const double c = block == 0 ? g.x(k) : g.p(k);
            out << prefix << format_double(c) << ',' << format_double(values[k].real()) << ','
                << format_double(values[k].imag()) << '\n';
          }
        }
      }
  }
  close_out(out, path);
}

BeamTrace read_trace(const std::string& path) {
  LineReader r(path);
  if (r.expect_line() != kTraceMagic) r.fail("not a trace file");
  BeamTrace t;
  const auto dim_words = keyed(r.expect_line(), "#", r);
  if (dim_words.size() != 2 || dim_words[0] != "dim") r.fail("expected '# dim'");
  t.dim = to_size(dim_words[1], r);
  if (t.dim == 0) r.fail("dimension must be positive");
  auto labels = keyed(r.expect_line(), "#", r);
  if (labels.empty() || labels.front() != "labels") r.fail("expected '# labels'");
  t.labels.assign(labels.begin() + 1, labels.end());
  if (t.labels.size() != t.dim) r.fail("label count differs from dimension");
  const auto grid_words = keyed(r.expect_line(), "#", r);
  if (grid_words.empty() || grid_words.front() != "grid") r.fail("expected '# grid'");
  t.grid = parse_grid_fields(grid_words, 1, r);
  const auto count_words = keyed(r.expect_line(), "#", r);
  if (count_words.size() != 2 || count_words[0] != "samples") r.fail("expected '# samples'");
  const std::size_t n_samples = to_size(count_words[1], r);

  std::string line;
  while (true) {
    line = r.expect_line();
    if (!line.starts_with("# ")) break;
    const auto words = split(line.substr(2), ' ');
    if (words.front() == "scalar") {
      if (words.size() != 3) r.fail("scalar needs a name and a value");
      t.scalars.emplace_back(words[1], to_double(words[2], r));
    }
  }
  if (line != kTraceHeader) r.fail("expected the column header");

  const std::size_t d = t.dim;
  t.samples.resize(n_samples);
  for (auto& s : t.samples) {
    s.position.assign(d * d, std::vector<Complex>(t.grid.n_x()));
    s.momentum.assign(d * d, std::vector<Complex>(t.grid.n_p()));
  }
  const std::size_t per_sample = d * d * (t.grid.n_x() + t.grid.n_p());

  // Rows arrive in block, pair, sample, node order; node indices are implied.
  const std::size_t expected_rows = n_samples * per_sample;
  std::vector<std::size_t> cursor(2 * d * d * n_samples, 0);
  std::size_t rows = 0;
  while (r.next(line)) {
    if (line.empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != 8) r.fail("expected 8 columns");
    const std::size_t s = to_size(f[0], r);
    if (s >= n_samples) r.fail("sample index out of range");
    const int block = f[3] == "position" ? 0 : f[3] == "momentum" ? 1 : -1;
    if (block < 0) r.fail("unknown marginal '" + f[3] + "'");
    const auto names = split(f[4], ':');
    if (names.size() != 2) r.fail("malformed pair '" + f[4] + "'");
    std::size_t eta = d, xi = d;
    for (std::size_t k = 0; k < d; ++k) {
      if (t.labels[k] == names[0]) eta = k;
      if (t.labels[k] == names[1]) xi = k;
    }
    if (eta == d || xi == d) r.fail("unknown pair '" + f[4] + "'");
    auto& sample = t.samples[s];
    sample.z = to_double(f[1], r);
    sample.time = to_double(f[2], r);
    auto& values = block == 0 ? sample.position[eta * d + xi] : sample.momentum[eta * d + xi];
    auto& k = cursor[((static_cast<std::size_t>(block) * d * d) + eta * d + xi) * n_samples + s];
    if (k >= values.size()) r.fail("too many nodes for one marginal");
    values[k++] = Complex(to_double(f[6], r), to_double(f[7], r));
    ++rows;
  }
  if (rows != expected_rows)
    throw IoError("'" + path + "': expected " + std::to_string(expected_rows) + " rows, found " +
                  std::to_string(rows));
  return t;
}

void emit_snapshot(const WignerMatrix& w, const std::string& path) {
  auto out = open_out(path);
  const auto& g = w.grid();
  out << kSnapshotMagic << '\n';
  out << "time " << format_double(w.time()) << '\n';
  out << "dim " << w.dim() << '\n';
  out << "labels";
  for (const auto& l : w.labels()) out << ' ' << l;
  out << '\n';
  out << "grid " << grid_fields(g) << '\n';
  for (std::size_t eta = 0; eta < w.dim(); ++eta)
    for (std::size_t xi = 0; xi < w.dim(); ++xi)
      for (int part = 0; part < 2; ++part) {
        out << "plane " << w.labels()[eta] << ' ' << w.labels()[xi] << ' '
            << (part == 0 ? "re" : "im") << '\n';
        for (std::size_t j = 0; j < g.n_p(); ++j) {
          for (std::size_t i = 0; i < g.n_x(); ++i) {
            const Complex v = w(eta, xi, i, j);
            if (i > 0) out << ',';
            out << format_double(part == 0 ? v.real() : v.imag());
          }
          out << '\n';
        }
      }
  out << "end\n";
  close_out(out, path);
}

WignerMatrix read_snapshot(const std::string& path) {
  LineReader r(path);
  if (r.expect_line() != kSnapshotMagic) r.fail("not a snapshot file");
  const auto time_words = keyed(r.expect_line(), "time", r);
  if (time_words.size() != 1) r.fail("expected one time value");
  const double time = to_double(time_words[0], r);
  const auto dim_words = keyed(r.expect_line(), "dim", r);
  if (dim_words.size() != 1) r.fail("expected one dimension");
  const std::size_t d = to_size(dim_words[0], r);
  if (d == 0) r.fail("dimension must be positive");
  const auto labels = keyed(r.expect_line(), "labels", r);
  if (labels.size() != d) r.fail("label count differs from dimension");
  const auto grid_words = keyed(r.expect_line(), "grid", r);
  const auto grid = parse_grid_fields(grid_words, 0, r);

  WignerMatrix w(grid, d, labels, time);
  for (std::size_t eta = 0; eta < d; ++eta)
    for (std::size_t xi = 0; xi < d; ++xi)
      for (int part = 0; part < 2; ++part) {
        const auto head = keyed(r.expect_line(), "plane", r);
        if (head.size() != 3 || head[0] != labels[eta] || head[1] != labels[xi] ||
            head[2] != (part == 0 ? "re" : "im"))
          r.fail("unexpected plane header");
        for (std::size_t j = 0; j < grid.n_p(); ++j) {
          const auto f = split(r.expect_line(), ',');
          if (f.size() != grid.n_x()) r.fail("row length differs from n_x");
          for (std::size_t i = 0; i < grid.n_x(); ++i) {
            Complex& v = w(eta, xi, i, j);
            const double value = to_double(f[i], r);
            v = part == 0 ? Complex(value, v.imag()) : Complex(v.real(), value);
          }
        }
      }
  if (r.expect_line() != "end") r.fail("expected 'end'");
  return w;
}

void emit_spectrum(const SpectrumResult& spectrum, const std::string& path) {
  if (spectrum.field_offset.size() != spectrum.relative_intensity.size())
    throw IoError("spectrum for '" + path + "' has mismatched columns");
  for (std::size_t k = 1; k < spectrum.field_offset.size(); ++k)
    if (!(spectrum.field_offset[k] > spectrum.field_offset[k - 1]))
      throw IoError("spectrum for '" + path + "' is not increasing in B0");
  auto out = open_out(path);
  out << kSpectrumHeader << '\n';
  for (std::size_t k = 0; k < spectrum.field_offset.size(); ++k)
    out << format_double(spectrum.field_offset[k]) << ','
        << format_double(spectrum.relative_intensity[k]) << '\n';
  close_out(out, path);
}

SpectrumResult read_spectrum(const std::string& path) {
  LineReader r(path);
  if (r.expect_line() != kSpectrumHeader) r.fail("expected the spectrum header");
  SpectrumResult s;
  std::string line;
  while (r.next(line)) {
    if (line.empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != 2) r.fail("expected 2 columns");
    s.field_offset.push_back(to_double(f[0], r));
    s.relative_intensity.push_back(to_double(f[1], r));
    if (s.field_offset.size() > 1 && !(s.field_offset.back() > s.field_offset[s.field_offset.size() - 2]))
      r.fail("B0 must increase strictly");
  }
  return s;
}

}  // namespace ewf
