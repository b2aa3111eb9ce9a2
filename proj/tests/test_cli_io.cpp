#include <doctest.h>

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <unistd.h>

#include <json.hpp>

#include "asynclc/cli.hpp"
#include "asynclc/csv_io.hpp"
#include "asynclc/curve.hpp"
#include "asynclc/error.hpp"
#include "asynclc/scb.hpp"
#include "asynclc/simulation.hpp"

using namespace asynclc;
namespace fs = std::filesystem;

namespace {

fs::path scratch() {
  static const fs::path dir = [] {
    auto d = fs::temp_directory_path() / ("asynclc_cli_" + std::to_string(::getpid()));
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

std::string file(const std::string& name, const std::string& content) {
  const auto path = (scratch() / name).string();
  std::ofstream(path) << content;
  return path;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string l;
  while (std::getline(ss, l)) out.push_back(l);
  return out;
}

std::vector<std::string> cells(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string c;
  while (std::getline(ss, c, ',')) out.push_back(c);
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

double number(const std::string& s) {
  double v = 0;
  std::from_chars(s.data(), s.data() + s.size(), v);
  return v;
}

struct CliRun {
  int code = 0;
  std::string out;
  std::string err;
};

CliRun cli(std::vector<std::string> args) {
  args.insert(args.begin(), "asynclc");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  std::ostringstream out, err;
  auto* old_out = std::cout.rdbuf(out.rdbuf());
  auto* old_err = std::cerr.rdbuf(err.rdbuf());
  CliRun r;
  r.code = run_cli(static_cast<int>(argv.size()), argv.data());
  std::cout.rdbuf(old_out);
  std::cerr.rdbuf(old_err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

const char* kSync =
    "subject_id,time,y,x1\n"
    "a,0.1,1.0,0.3\n"
    "a,0.4,2.0,-0.2\n"
    "a,0.7,1.5,0.8\n"
    "b,0.3,0.5,1.1\n"
    "b,0.6,-0.5,0.4\n";
const char* kAsync =
    "subject_id,time,z1\n"
    "a,0.2,1.0\n"
    "a,0.5,-1.0\n"
    "b,0.35,0.2\n"
    "b,0.45,0.7\n"
    "b,0.9,-0.3\n";

std::pair<std::string, std::string> simulated_files(const std::string& stem, std::size_t n) {
  DgpConfig cfg;
  cfg.n = n;
  cfg.seed = 17;
  const auto d = generate_replicate(cfg, 0);
  const auto s = (scratch() / (stem + "_sync.csv")).string();
  const auto a = (scratch() / (stem + "_async.csv")).string();
  write_dataset(d, s, a);
  return {s, a};
}

}  // namespace

TEST_SUITE("cli_io") {

TEST_CASE("ingest reads a toy pair of files") {
  const auto d = ingest(file("toy_sync.csv", kSync), file("toy_async.csv", kAsync));
  REQUIRE(d.size() == 2);
  CHECK(d.p() == 1);
  CHECK(d.q() == 1);
  CHECK(d.subject(0).id == "a");
  CHECK(d.subject(0).sync_count() == 3);
  CHECK(d.subject(0).async_count() == 2);
  CHECK(d.subject(1).sync_count() == 2);
  CHECK(d.subject(1).async_count() == 3);
  CHECK(d.subject(1).async_covariates(1, 0) == 0.7);
  CHECK(d.time_scale().is_identity());
  const auto sync_only = ingest(file("toy_sync.csv", kSync), std::nullopt);
  CHECK(sync_only.q() == 0);
}

TEST_CASE("ingest errors") {
  const std::string bad_y = "subject_id,time,y,x1\na,0.1,1.0,0.3\na,0.4,abc,-0.2\n";
  try {
    ingest(file("bad.csv", bad_y), std::nullopt);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 3);
    CHECK(e.code() == ErrorCode::ParseError);
  }
  const std::string orphan = std::string(kAsync) + "c,0.5,1.0\n";
  try {
    ingest(file("toy_sync.csv", kSync), file("orphan.csv", orphan));
    FAIL("expected OrphanSubject");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::OrphanSubject);
    CHECK(std::string(e.what()).find("c") != std::string::npos);
  }
  for (const char* empty : {"", "subject_id,time,y,x1\n"}) {
    try {
      ingest(file("empty.csv", empty), std::nullopt);
      FAIL("expected EmptyInput");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::EmptyInput);
    }
  }
  try {
    ingest((scratch() / "missing.csv").string(), std::nullopt);
    FAIL("expected IoError");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::IoError);
  }
  CHECK_THROWS_AS(ingest(file("hdr.csv", "id,time,y,x1\na,0.1,1,1\n"), std::nullopt), ParseError);
}

TEST_CASE("times outside the unit interval are rescaled jointly") {
  const std::string sync = "subject_id,time,y,x1\na,2,1,1\na,6,2,0\nb,4,0,1\n";
  const std::string async = "subject_id,time,z1\na,12,1\nb,3,0\n";
  std::stringstream s(sync), a(async), log;
  const auto d = parse_dataset(s, &a, &log);
  CHECK(d.time_scale().origin == 2.0);
  CHECK(d.time_scale().span == 10.0);
  CHECK(d.subject(0).sync_times[1] == doctest::Approx(0.4));
  CHECK(d.subject(0).async_times[0] == 1.0);
  CHECK(log.str().find("rescaled") != std::string::npos);
}

TEST_CASE("ingest then emit then ingest is lossless") {
  DgpConfig cfg;
  cfg.n = 25;
  const auto d = generate_replicate(cfg, 4);
  std::stringstream s, a;
  write_dataset(d, s, &a);
  const auto back = parse_dataset(s, &a);
  REQUIRE(back.size() == d.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    const auto& x = d.subject(i);
    const auto& y = back.subject(i);
    CHECK(x.id == y.id);
    CHECK(x.sync_times == y.sync_times);
    CHECK(x.responses == y.responses);
    CHECK(x.async_times == y.async_times);
    CHECK(x.sync_covariates == y.sync_covariates);
    CHECK(x.async_covariates == y.async_covariates);
  }
  const double v = 0.1 + 0.2;
  CHECK(number(format_double(v)) == v);
  CHECK(format_double(0.5) == "0.5");
}

TEST_CASE("plot data files") {
  DgpConfig cfg;
  cfg.n = 150;
  const auto d = generate_replicate(cfg, 0);
  const auto grid = uniform_grid(0.1, 0.9, 9);
  const auto curve = fit_curve(d, Method::OneStep, grid, {0.0, 0.25, 0.25});
  const auto prefix = (scratch() / "plot").string();
  const auto paths = emit_plot_data(curve, {}, prefix);
  REQUIRE(paths.size() == 2);
  CHECK(paths[0] == prefix + "_beta1.csv");
  const auto rows = lines(slurp(paths[0]));
  REQUIRE(rows.size() == 10);
  CHECK(rows[0] == "t,estimate,ci_lo,ci_hi,scb_lo,scb_hi");
  for (std::size_t k = 1; k < rows.size(); ++k) {
    const auto c = cells(rows[k]);
    REQUIRE(c.size() == 6);
    CHECK(c[4].empty());
    CHECK(c[5].empty());
    CHECK(number(c[0]) == grid[k - 1]);
    CHECK(number(c[1]) == curve.points[k - 1].coef(0));
    CHECK(number(c[2]) == curve.points[k - 1].ci_lower(0));
  }

  BandOptions opt;
  opt.replicates = 200;
  BandMap bands;
  bands.emplace(curve.gamma_index(0), bootstrap_band(d, curve, BandTarget::Gamma, opt));
  const auto with_band = emit_plot_data(curve, bands, prefix + "b");
  const auto grows = lines(slurp(with_band[1]));
  const double c_alpha = bands.begin()->second.c_alpha;
  for (std::size_t k = 1; k < grows.size(); ++k) {
    const auto c = cells(grows[k]);
    CHECK(number(c[5]) - number(c[4]) == doctest::Approx(2.0 * c_alpha).epsilon(1e-12));
  }
  CHECK(cells(lines(slurp(with_band[0]))[1])[4].empty());

  std::ostringstream wide;
  write_curve_csv(curve, bands, wide);
  const auto header = lines(wide.str())[0];
  CHECK(header ==
        "t,beta1,beta1_se,beta1_ci_lo,beta1_ci_hi,gamma1,gamma1_se,gamma1_ci_lo,gamma1_ci_hi,"
        "gamma1_scb_lo,gamma1_scb_hi");

  CHECK_THROWS_AS(emit_plot_data(curve, {}, (scratch() / "no/such/dir/p").string()), Error);
}

TEST_CASE("bandwidth text forms") {
  CHECK_FALSE(parse_bandwidth("auto").has_value());
  CHECK(parse_bandwidth("0.05")->resolve(400) == 0.05);
  CHECK(parse_bandwidth("n^-0.5")->resolve(400) == doctest::Approx(0.05));
  CHECK(parse_bandwidth("2*n^-0.5")->resolve(400) == doctest::Approx(0.1));
  CHECK(parse_bandwidth("2n^-0.5")->resolve(400) == doctest::Approx(0.1));
  CHECK_THROWS_AS(parse_bandwidth("fast"), Error);
}

TEST_CASE("fit with automatic bandwidths writes the default grid") {
  const auto [s, a] = simulated_files("auto", 60);
  const auto out = (scratch() / "fit.csv").string();
  const auto r = cli({"fit", "--sync", s, "--async", a, "--method", "two-step", "--h", "auto",
                      "--h1", "auto", "--h2", "auto", "--output", out});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  const auto rows = lines(slurp(out));
  CHECK(rows.size() == 182);
  CHECK(rows[0].rfind("t,beta1,beta1_se,beta1_ci_lo,beta1_ci_hi,gamma1", 0) == 0);
  CHECK(number(cells(rows[1])[0]) == doctest::Approx(0.05));
  CHECK(number(cells(rows[181])[0]) == doctest::Approx(0.95));
}

TEST_CASE("scb and select-bandwidth commands") {
  const auto [s, a] = simulated_files("band", 150);
  const auto out = (scratch() / "band.csv").string();
  auto r = cli({"scb", "--sync", s, "--async", a, "--method", "one-step", "--h1", "0.25", "--h2",
                "0.25", "--grid-points", "21", "--B", "200", "--output", out});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  const auto rows = lines(slurp(out));
  CHECK(rows.size() == 22);
  CHECK(rows[0].find("gamma1_scb_hi") != std::string::npos);
  const auto meta = nlohmann::json::parse(slurp(out + ".meta.json"));
  CHECK(meta["c_alpha"]["beta1"].get<double>() > 0.0);
  CHECK(meta["c_alpha"]["gamma1"].get<double>() > 0.0);
  CHECK(meta["replicates"].get<int>() == 200);

  r = cli({"scb", "--sync", s, "--async", a, "--method", "one-step", "--h1", "0.25", "--h2",
           "0.25", "--B", "50"});
  CHECK(r.code == 1);
  CHECK(r.err.rfind("ERROR BAD_PARAM:", 0) == 0);

  r = cli({"select-bandwidth", "--sync", s, "--async", a, "--stage", "one-step", "--candidates",
           "0.2,0.3", "--times", "0.5"});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  const auto cv = lines(r.out);
  REQUIRE(cv.size() == 3);
  CHECK(cv[0] == "stage,h1,h2,aspe,chosen,note");
  CHECK(cv[1].rfind("one-step,0.2,0.2,", 0) == 0);
}

TEST_CASE("usage and data errors map to exit codes") {
  auto r = cli({"simulate", "--alpha", "1.5", "--reps", "2", "--n", "30", "--output-prefix",
                (scratch() / "never").string()});
  CHECK(r.code == 1);
  CHECK(r.err.rfind("ERROR BAD_PARAM", 0) == 0);
  CHECK_FALSE(fs::exists(scratch() / "never_points.csv"));

  r = cli({"simulate", "--bogus"});
  CHECK(r.code == 1);
  CHECK(r.err.rfind("ERROR BAD_PARAM", 0) == 0);

  r = cli({});
  CHECK(r.code == 1);

  r = cli({"fit", "--sync", (scratch() / "absent.csv").string(), "--h", "0.1", "--h1", "0.1",
           "--h2", "0.1"});
  CHECK(r.code == 2);
  CHECK(r.err.rfind("ERROR IO_ERROR:", 0) == 0);

  r = cli({"fit", "--sync", file("bad2.csv", "subject_id,time,y,x1\na,0.1,x,1\n")});
  CHECK(r.code == 2);
  CHECK(r.err.rfind("ERROR PARSE_ERROR: line 2", 0) == 0);

  r = cli({"fit", "--sync", file("toy_sync.csv", kSync), "--async", file("toy_async.csv", kAsync),
           "--method", "one-step", "--h1", "0.01", "--h2", "0.01"});
  CHECK(r.code == 3);
  CHECK(r.err.rfind("ERROR ESTIMATION_FAILED:", 0) == 0);

  r = cli({"reproduce", "table9"});
  CHECK(r.code == 1);
}

TEST_CASE("simulate and reproduce outputs") {
  const auto p1 = (scratch() / "sim1").string();
  const auto p2 = (scratch() / "sim2").string();
  const std::vector<std::string> flags{"--n", "60", "--reps", "3", "--seed", "9", "--B", "100",
                                       "--scb", "--threads", "2"};
  auto args = flags;
  args.insert(args.begin(), "simulate");
  args.push_back("--output-prefix");
  auto a1 = args, a2 = args;
  a1.push_back(p1);
  a2.push_back(p2);
  auto r = cli(a1);
  REQUIRE_MESSAGE(r.code == 0, r.err);
  r = cli(a2);
  REQUIRE(r.code == 0);
  for (const char* ext : {"_points.csv", "_curves.csv", ".json"}) {
    CHECK(fs::exists(p1 + ext));
    CHECK(slurp(p1 + ext) == slurp(p2 + ext));
  }
  const auto report = nlohmann::json::parse(slurp(p1 + ".json"));
  CHECK(report["replicates"].get<int>() == 3);
  CHECK(lines(slurp(p1 + "_points.csv"))[0] ==
        "estimator,coefficient,t,bias,sd,se,cp,bias_mcse,count");

  const auto p3 = (scratch() / "rep").string();
  r = cli({"reproduce", "table1", "--setting", "i", "--n", "60", "--reps", "3", "--seed", "7",
           "--output-prefix", p3});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  const auto table = lines(r.out);
  CHECK(table[0] == "estimator,coefficient,t,bias,sd,se,cp");
  CHECK(table.size() == 1 + 3 * 2 * 3);
  CHECK(lines(slurp(p3 + "_points.csv")).size() == 1 + 3 * 2 * 3);
}

TEST_CASE("config files supply defaults that flags override") {
  const auto cfg = file("run.cfg", "# study\nn = 40\nreps=2\nseed=5\npoints_only=true\n");
  const auto pa = (scratch() / "cfga").string();
  const auto pb = (scratch() / "cfgb").string();
  auto r = cli({"simulate", "--config", cfg, "--output-prefix", pa});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  r = cli({"simulate", "--n", "40", "--reps", "2", "--seed", "5", "--points-only",
           "--output-prefix", pb});
  REQUIRE(r.code == 0);
  CHECK(slurp(pa + "_points.csv") == slurp(pb + "_points.csv"));
  CHECK_FALSE(fs::exists(pa + "_curves.csv"));

  r = cli({"simulate", "--config", cfg, "--seed", "6", "--output-prefix", pa});
  REQUIRE(r.code == 0);
  CHECK(nlohmann::json::parse(slurp(pa + ".json"))["seed"].get<int>() == 6);

  r = cli({"simulate", "--config", file("bad.cfg", "colour=blue\n")});
  CHECK(r.code == 1);
  CHECK(r.err.rfind("ERROR BAD_PARAM", 0) == 0);
  r = cli({"simulate", "--config", (scratch() / "nope.cfg").string()});
  CHECK(r.code == 2);
}

TEST_CASE("normalize writes standardized files") {
  const auto [s, a] = simulated_files("norm", 200);
  const auto os = (scratch() / "norm_out_sync.csv").string();
  const auto oa = (scratch() / "norm_out_async.csv").string();
  const auto r = cli({"normalize", "--sync", s, "--async", a, "--column", "z1", "--output-sync",
                      os, "--output-async", oa});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  const auto before = ingest(s, a);
  const auto after = ingest(os, oa);
  CHECK(slurp(s) == slurp(os));
  double sum = 0;
  std::size_t count = 0;
  for (const auto& subj : after.subjects()) {
    for (std::size_t k = 0; k < subj.async_count(); ++k) {
      sum += subj.async_covariates(k, 0);
      ++count;
    }
  }
  CHECK(std::fabs(sum / count) < 0.1);
  CHECK(after.subject(3).async_covariates(0, 0) != before.subject(3).async_covariates(0, 0));
}

}
