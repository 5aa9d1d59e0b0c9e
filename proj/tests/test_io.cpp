#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "ewf/errors.hpp"
#include "ewf/io.hpp"
#include "support.hpp"

using namespace ewf;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "ewf_test_io";
  fs::create_directories(dir);
  return dir / name;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

BeamTrace short_trace() {
  ExperimentPlan p;
  p.beam = support::silver_beam();
  p.grid = PhaseSpaceGrid(-150e-6, 150e-6, 64, -4e-25, 4e-25, 64);
  p.spin_density = x_polarised_spin_density();
  p.segments = {GradientMagnet{{0.0, 1e3, 1}, 0.005}};
  p.samples_per_segment = 2;
  p.step.on_warning = [](const std::string&) {};
  auto t = run_pipeline(p).trace;
  t.scalars.emplace_back("answer", 0.1 + 0.2);
  return t;
}

}  // namespace

TEST_CASE("trace round-trips bit for bit") {
  const auto t = short_trace();
  REQUIRE(t.samples.size() == 3);
  const auto path = scratch("trace.csv");
  emit_trace(t, path.string());
  const auto r = read_trace(path.string());

  CHECK(r.dim == t.dim);
  CHECK(r.labels == t.labels);
  CHECK(r.grid.x_min() == t.grid.x_min());
  CHECK(r.grid.p_max() == t.grid.p_max());
  CHECK(r.grid.n_x() == t.grid.n_x());
  CHECK(r.grid.n_p() == t.grid.n_p());
  CHECK(r.scalars == t.scalars);
  REQUIRE(r.samples.size() == t.samples.size());
  for (std::size_t s = 0; s < t.samples.size(); ++s) {
    CHECK(r.samples[s].z == t.samples[s].z);
    CHECK(r.samples[s].time == t.samples[s].time);
    CHECK(r.samples[s].position == t.samples[s].position);
    CHECK(r.samples[s].momentum == t.samples[s].momentum);
  }

  const auto text = slurp(path);
  CHECK(text.find("sample,z [m],t [s],marginal,pair,coordinate,re,im") != std::string::npos);
  CHECK(text.find("alpha:beta") != std::string::npos);
}

TEST_CASE("emitting the same trace twice gives identical bytes") {
  const auto a = scratch("a.csv"), b = scratch("b.csv");
  emit_trace(short_trace(), a.string());
  emit_trace(short_trace(), b.string());
  CHECK(slurp(a) == slurp(b));
  const auto again = scratch("again.csv");
  emit_trace(read_trace(a.string()), again.string());
  CHECK(slurp(again) == slurp(a));
}

TEST_CASE("snapshot round-trips node for node") {
  const PhaseSpaceGrid g(-120e-6, 120e-6, 40, -2.5e-25, 2.5e-25, 40);
  auto w = build_gaussian_state(g, support::silver_beam(), x_polarised_spin_density(), {1e-5, 2e-26});
  w(0, 1, 3, 4) += Complex(0.0, 1.0 / 3.0);
  w.set_time(1.25e-5);
  const auto path = scratch("snapshot.txt");
  emit_snapshot(w, path.string());
  const auto r = read_snapshot(path.string());
  CHECK(r.time() == w.time());
  CHECK(r.labels() == w.labels());
  REQUIRE(r.dim() == w.dim());
  CHECK(r.grid().n_x() == 40);
  CHECK(r.grid().n_p() == 40);
  CHECK(support::max_abs_difference(r, w) == 0.0);
}

TEST_CASE("spectrum round-trips and keeps B0 increasing") {
  SpectrumResult s;
  s.field_offset = {0.19, 0.195, 0.2, 0.205};
  s.relative_intensity = {0.9, 0.11, 1.0 / 7.0, 0.95};
  const auto path = scratch("spectrum.csv");
  emit_spectrum(s, path.string());
  const auto r = read_spectrum(path.string());
  CHECK(r.field_offset == s.field_offset);
  CHECK(r.relative_intensity == s.relative_intensity);
  CHECK(slurp(path).rfind("B0 [T],relative_intensity\n", 0) == 0);
  for (std::size_t k = 1; k < r.field_offset.size(); ++k) CHECK(r.field_offset[k] > r.field_offset[k - 1]);
}

TEST_CASE("unreadable and corrupt files raise I/O errors naming the path") {
  const std::string missing = (fs::temp_directory_path() / "ewf_no_such_dir" / "x.csv").string();
  CHECK_THROWS_AS(read_trace(missing), IoError);
  CHECK_THROWS_AS(read_snapshot(missing), IoError);
  CHECK_THROWS_AS(read_spectrum(missing), IoError);
  CHECK_THROWS_AS(emit_spectrum(SpectrumResult{}, missing), IoError);
  try {
    read_trace(missing);
  } catch (const IoError& e) {
    CHECK(std::string(e.what()).find(missing) != std::string::npos);
  }

  const auto bad = scratch("bad.csv");
  std::ofstream(bad) << "B0 [T],relative_intensity\n0.1,not-a-number\n";
  CHECK_THROWS_AS(read_spectrum(bad.string()), IoError);
  std::ofstream(bad) << "B0 [T],relative_intensity\n0.2,1\n0.1,1\n";
  CHECK_THROWS_AS(read_spectrum(bad.string()), IoError);
}
