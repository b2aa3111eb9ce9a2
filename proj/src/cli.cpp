#include "asynclc/cli.hpp"

#include <CLI11.hpp>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <map>
#include <memory>
#include <sstream>
#include <vector>

#include "asynclc/bandwidth.hpp"
#include "asynclc/csv_io.hpp"
#include "asynclc/curve.hpp"
#include "asynclc/error.hpp"
#include "asynclc/estimators.hpp"
#include "asynclc/parallel.hpp"
#include "asynclc/scb.hpp"
#include "asynclc/simulation.hpp"

namespace asynclc {

namespace {

double parse_real(const std::string& text, const std::string& what) {
  double v = 0.0;
  const char* first = text.data();
  const char* last = first + text.size();
  const auto res = std::from_chars(first, last, v);
  if (text.empty() || res.ec != std::errc() || res.ptr != last || !std::isfinite(v)) {
    throw Error(ErrorCode::InvalidParameter, what + ": '" + text + "' is not a number");
  }
  return v;
}

KernelFamily parse_kernel(const std::string& name) {
  if (name == "epanechnikov") return KernelFamily::Epanechnikov;
  if (name == "uniform") return KernelFamily::Uniform;
  throw Error(ErrorCode::InvalidParameter, "unknown kernel '" + name + "'");
}

MultiplierLaw parse_law(const std::string& name) {
  if (name == "rademacher") return MultiplierLaw::Rademacher;
  if (name == "normal") return MultiplierLaw::StandardNormal;
  throw Error(ErrorCode::InvalidParameter, "unknown multiplier law '" + name + "'");
}

Stage parse_stage(const std::string& name) {
  if (name == "first") return Stage::FirstStage;
  if (name == "second") return Stage::SecondStage;
  if (name == "one-step") return Stage::OneStep;
  throw Error(ErrorCode::InvalidParameter, "unknown stage '" + name + "'");
}

Bandwidth require_explicit(const std::string& text, const char* name) {
  auto bw = parse_bandwidth(text);
  if (!bw) {
    throw Error(ErrorCode::InvalidParameter, std::string(name) + ": 'auto' is not allowed here");
  }
  return *bw;
}

struct DataOptions {
  std::string sync;
  std::string async;
  std::string kernel = "epanechnikov";
  std::size_t threads = 0;

  LongitudinalDataset load() const {
    return ingest(sync, async.empty() ? std::nullopt : std::optional<std::string>(async),
                  &std::cerr);
  }
};

struct FitOptions {
  DataOptions data;
  std::string method = "two-step";
  std::string h = "auto";
  std::string h1 = "auto";
  std::string h2 = "auto";
  double grid_from = 0.05;
  double grid_to = 0.95;
  std::size_t grid_points = 181;
  std::size_t folds = 5;
  std::uint64_t seed = 1;
  std::string output;
  std::string plot_prefix;
};

struct ScbOptions {
  std::size_t replicates = 1000;
  double alpha = 0.05;
  std::string law = "rademacher";
  std::string meta;
};

void add_data_options(CLI::App* app, DataOptions& o, bool async_allowed = true) {
  app->add_option("--sync", o.sync, "Synchronous CSV (subject_id,time,y,x1..)")->required();
  if (async_allowed) app->add_option("--async", o.async, "Asynchronous CSV (subject_id,time,z1..)");
  app->add_option("--kernel", o.kernel, "epanechnikov or uniform");
  app->add_option("--threads", o.threads, "Worker threads (0 = ASYNCLC_THREADS or all cores)");
}

void add_fit_options(CLI::App* app, FitOptions& o) {
  add_data_options(app, o.data);
  app->add_option("--method", o.method, "one-step, two-step or two-step-vcm");
  app->add_option("--h", o.h, "First-stage bandwidth: value, n^-a, c*n^-a or auto");
  app->add_option("--h1", o.h1, "Bivariate bandwidth for response times");
  app->add_option("--h2", o.h2, "Bivariate bandwidth for covariate times");
  app->add_option("--grid-from", o.grid_from);
  app->add_option("--grid-to", o.grid_to);
  app->add_option("--grid-points", o.grid_points);
  app->add_option("--folds", o.folds, "Cross-validation folds for auto bandwidths");
  app->add_option("--seed", o.seed);
  app->add_option("--output", o.output, "Curve CSV (default: standard output)");
  app->add_option("--plot-prefix", o.plot_prefix, "Write <prefix>_<coef>.csv plot files");
}

CvPlan plan_for(Stage stage, const LongitudinalDataset& data, const FitOptions& o) {
  CvPlan plan = make_plan(data.size(), o.folds, default_candidates(stage, data.size()),
                          default_eval_times(), o.seed);
  plan.family = parse_kernel(o.data.kernel);
  plan.threads = o.data.threads;
  return plan;
}

void log_selection(const CvResult& r) {
  std::cerr << stage_name(r.stage) << " bandwidth selected by cross-validation: h1="
            << format_double(r.chosen.h1) << " h2=" << format_double(r.chosen.h2)
            << " (ASPE " << format_double(r.aspe[r.chosen_index]) << ")\n";
  for (std::size_t c = 0; c < r.notes.size(); ++c) {
    if (!r.notes[c].empty()) std::cerr << "warning: candidate excluded, " << r.notes[c] << '\n';
  }
}

FitBandwidths resolve_bandwidths(const LongitudinalDataset& data, Method method,
                                 const FitOptions& o) {
  const std::size_t n = data.size();
  const auto h = parse_bandwidth(o.h);
  const auto h1 = parse_bandwidth(o.h1);
  const auto h2 = parse_bandwidth(o.h2);
  const KernelFamily family = parse_kernel(o.data.kernel);
  FitBandwidths bw;
  if (method == Method::OneStep) {
    if (!h1 || !h2) {
      const CvResult r = select(plan_for(Stage::OneStep, data, o), data, Stage::OneStep);
      log_selection(r);
      bw.h1 = r.chosen.h1;
      bw.h2 = r.chosen.h2;
    }
    if (h1) bw.h1 = h1->resolve(n);
    if (h2) bw.h2 = h2->resolve(n);
    bw.h = bw.h1;
    return bw;
  }
  if (h) {
    bw.h = h->resolve(n);
  } else {
    const CvResult r = select(plan_for(Stage::FirstStage, data, o), data, Stage::FirstStage);
    log_selection(r);
    bw.h = r.chosen.h1;
  }
  if (data.q() == 0) return bw;
  if (!h1 || !h2) {
    const CenteredDataset centered = center(data, bw.h, family);
    const InterpolatedCurve curve = first_stage_curve(
        data, method, bw.h, method == Method::TwoStepCentering ? &centered : nullptr, family);
    const CurveFunction beta = [&](double t) { return curve(t); };
    const CvResult r =
        select(plan_for(Stage::SecondStage, data, o), data, Stage::SecondStage, &beta);
    log_selection(r);
    bw.h1 = r.chosen.h1;
    bw.h2 = r.chosen.h2;
  }
  if (h1) bw.h1 = h1->resolve(n);
  if (h2) bw.h2 = h2->resolve(n);
  return bw;
}

CurveEstimate fit_from_options(const LongitudinalDataset& data, const FitOptions& o) {
  const Method method = parse_method(o.method);
  const FitBandwidths bw = resolve_bandwidths(data, method, o);
  const auto grid = uniform_grid(o.grid_from, o.grid_to, o.grid_points);
  CurveEstimate curve = fit_curve(data, method, grid, bw, parse_kernel(o.data.kernel),
                                  o.data.threads);
  for (const auto& pt : curve.points) {
    if (!pt.ok) std::cerr << "warning: t=" << format_double(pt.t) << " " << pt.failure << '\n';
  }
  return curve;
}

template <class Writer>
void write_to(const std::string& path, Writer&& writer) {
  if (path.empty()) {
    writer(std::cout);
    return;
  }
  auto out = open_output(path);
  writer(out);
  if (!out) throw Error(ErrorCode::IoError, "failed writing '" + path + "'");
}

int cmd_fit(const FitOptions& o) {
  const LongitudinalDataset data = o.data.load();
  const CurveEstimate curve = fit_from_options(data, o);
  write_to(o.output, [&](std::ostream& out) { write_curve_csv(curve, {}, out); });
  if (!o.plot_prefix.empty()) emit_plot_data(curve, {}, o.plot_prefix);
  return 0;
}

int cmd_scb(const FitOptions& o, const ScbOptions& s) {
  const LongitudinalDataset data = o.data.load();
  const CurveEstimate curve = fit_from_options(data, o);
  BandOptions opt;
  opt.replicates = s.replicates;
  opt.alpha = s.alpha;
  opt.law = parse_law(s.law);
  opt.seed = o.seed;
  opt.threads = o.data.threads;
  BandMap bands;
  nlohmann::json meta;
  meta["alpha"] = s.alpha;
  meta["replicates"] = s.replicates;
  meta["seed"] = o.seed;
  meta["multiplier_law"] = s.law;
  meta["method"] = method_name(curve.method);
  meta["h"] = curve.bandwidths.h;
  meta["h1"] = curve.bandwidths.h1;
  meta["h2"] = curve.bandwidths.h2;
  const BandTarget targets[2] = {BandTarget::Beta, BandTarget::Gamma};
  const std::size_t widths[2] = {curve.p, curve.q};
  for (int g = 0; g < 2; ++g) {
    if (widths[g] == 0) continue;
    const ScoreProcess process = score_process(data, curve, targets[g]);
    for (std::size_t k = 0; k < widths[g]; ++k) {
      opt.coefficient = k;
      const std::size_t index = g == 0 ? curve.beta_index(k) : curve.gamma_index(k);
      ScbResult band = bootstrap_band(process, curve, targets[g], opt);
      meta["c_alpha"][curve.names[index]] = band.c_alpha;
      bands.emplace(index, std::move(band));
    }
  }
  write_to(o.output, [&](std::ostream& out) { write_curve_csv(curve, bands, out); });
  if (!o.plot_prefix.empty()) emit_plot_data(curve, bands, o.plot_prefix);
  const std::string meta_path =
      !s.meta.empty() ? s.meta : (o.output.empty() ? std::string() : o.output + ".meta.json");
  if (meta_path.empty()) {
    std::cerr << meta.dump() << '\n';
  } else {
    write_to(meta_path, [&](std::ostream& out) { out << meta.dump(2) << '\n'; });
  }
  return 0;
}

struct SelectOptions {
  FitOptions fit;
  std::string stage = "first";
  std::string candidates;
  std::string times;
};

std::vector<double> parse_list(const std::string& text, const std::string& what) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_real(item, what));
  return out;
}

int cmd_select(const SelectOptions& o) {
  const LongitudinalDataset data = o.fit.data.load();
  const Stage stage = parse_stage(o.stage);
  CvPlan plan = plan_for(stage, data, o.fit);
  if (!o.candidates.empty() || !o.times.empty()) {
    std::vector<CvCandidate> cands = plan.candidates;
    if (!o.candidates.empty()) {
      cands.clear();
      for (double h : parse_list(o.candidates, "--candidates")) cands.push_back({h, h});
    }
    const auto times = o.times.empty() ? plan.eval_times : parse_list(o.times, "--times");
    plan = make_plan(data.size(), o.fit.folds, std::move(cands), times, o.fit.seed);
    plan.family = parse_kernel(o.fit.data.kernel);
    plan.threads = o.fit.data.threads;
  }
  CvResult result;
  if (stage == Stage::SecondStage) {
    FitOptions first = o.fit;
    first.h1 = first.h2 = "1";  // placeholders; only the first stage is resolved here
    const Method method = parse_method(o.fit.method);
    if (method == Method::OneStep) {
      throw Error(ErrorCode::InvalidParameter, "second-stage selection needs a two-step method");
    }
    const double h = resolve_bandwidths(data, method, first).h;
    const KernelFamily family = parse_kernel(o.fit.data.kernel);
    const CenteredDataset centered = center(data, h, family);
    const InterpolatedCurve curve = first_stage_curve(
        data, method, h, method == Method::TwoStepCentering ? &centered : nullptr, family);
    const CurveFunction beta = [&](double t) { return curve(t); };
    result = select(plan, data, stage, &beta);
  } else {
    result = select(plan, data, stage);
  }
  log_selection(result);
  write_to(o.fit.output, [&](std::ostream& out) { write_cv_csv(result, out); });
  return 0;
}

struct SimOptions {
  std::string setting = "i";
  std::size_t n = 400;
  std::size_t reps = 200;
  std::uint64_t seed = 1;
  std::size_t threads = 0;
  std::size_t scb_replicates = 500;
  double alpha = 0.05;
  std::string law = "rademacher";
  std::string output_prefix = "simulation";
  bool auto_bandwidth = false;
  // simulate only
  std::string method = "two-step";
  std::string h = "n^-0.6";
  std::string h1 = "n^-0.5";
  std::string h2 = "n^-0.5";
  bool scb = false;
  bool points_only = false;
};

void write_report(const SimulationReport& report, const std::string& prefix) {
  write_to(prefix + "_points.csv",
           [&](std::ostream& out) { write_report_points_csv(report, out); });
  if (!report.curves.empty()) {
    write_to(prefix + "_curves.csv",
             [&](std::ostream& out) { write_report_curves_csv(report, out); });
  }
  write_to(prefix + ".json", [&](std::ostream& out) { out << report_json(report); });
  for (const auto& w : report.warnings) std::cerr << "warning: " << w << '\n';
  for (const auto& f : report.failures) {
    if (f.failures) {
      std::cerr << f.estimator << ": " << f.failures << " failed replicates excluded\n";
    }
  }
}

McConfig base_config(const SimOptions& o) {
  McConfig mc;
  mc.replicates = o.reps;
  mc.seed = o.seed;
  mc.threads = o.threads;
  mc.scb_replicates = o.scb_replicates;
  mc.alpha = o.alpha;
  mc.law = parse_law(o.law);
  return mc;
}

DgpConfig dgp_config(const SimOptions& o, const std::string& setting) {
  DgpConfig dgp;
  dgp.n = o.n;
  dgp.setting = parse_setting(setting);
  dgp.seed = o.seed;
  return dgp;
}

int cmd_simulate(const SimOptions& o) {
  McConfig mc = base_config(o);
  EstimatorSpec spec;
  spec.method = parse_method(o.method);
  spec.auto_bandwidth = o.auto_bandwidth;
  if (!o.auto_bandwidth) {
    if (spec.method != Method::OneStep) spec.h = require_explicit(o.h, "--h");
    spec.h1 = require_explicit(o.h1, "--h1");
    spec.h2 = require_explicit(o.h2, "--h2");
  }
  spec.scb = o.scb;
  mc.estimators = {spec};
  mc.curve_metrics = !o.points_only;
  mc.check();
  const SimulationReport report = run_monte_carlo(mc, dgp_config(o, o.setting));
  write_report(report, o.output_prefix);
  return 0;
}

EstimatorSpec preset(Method method, double h, double h12, bool scb, bool auto_bw) {
  EstimatorSpec spec;
  spec.method = method;
  spec.h = Bandwidth::rule(h);
  spec.h1 = spec.h2 = Bandwidth::rule(h12);
  spec.scb = scb;
  spec.auto_bandwidth = auto_bw;
  return spec;
}

int cmd_reproduce(const std::string& table, SimOptions o, bool setting_given) {
  McConfig mc = base_config(o);
  std::string setting = setting_given ? o.setting : "i";
  const bool a = o.auto_bandwidth;
  if (table == "table1") {
    mc.curve_metrics = false;
    mc.estimators = {preset(Method::TwoStepCentering, 0.6, 0.5, false, a),
                     preset(Method::OneStep, 0.45, 0.45, false, a),
                     preset(Method::OneStep, 0.5, 0.5, false, a)};
  } else if (table == "table2") {
    mc.estimators = {preset(Method::TwoStepCentering, 0.6, 0.5, true, a),
                     preset(Method::OneStep, 0.45, 0.45, true, a),
                     preset(Method::OneStep, 0.5, 0.5, true, a)};
  } else if (table == "tableS1") {
    mc.curve_metrics = false;
    mc.estimators = {preset(Method::TwoStepVCM, 0.6, 0.5, false, a)};
  } else if (table == "tableS2") {
    if (!setting_given) setting = "ii";
    mc.curve_metrics = false;
    mc.estimators = {preset(Method::TwoStepCentering, 0.6, 0.5, false, a),
                     preset(Method::OneStep, 0.45, 0.45, false, a),
                     preset(Method::OneStep, 0.5, 0.5, false, a)};
  } else {
    throw Error(ErrorCode::InvalidParameter,
                "unknown table '" + table + "' (table1, table2, tableS1, tableS2)");
  }
  if (a) {
    for (auto& e : mc.estimators) e.label.clear();
  }
  const SimulationReport report = run_monte_carlo(mc, dgp_config(o, setting));
  write_report(report, o.output_prefix);
  std::cout << "estimator,coefficient,t,bias,sd,se,cp\n";
  for (const auto& p : report.points) {
    std::cout << p.estimator << ',' << p.coefficient << ',' << format_double(p.t) << ','
              << format_double(std::round(p.bias * 1000) / 1000) << ','
              << format_double(std::round(p.sd * 1000) / 1000) << ','
              << format_double(std::round(p.mean_se * 1000) / 1000) << ','
              << format_double(std::round(p.cp * 10) / 10) << '\n';
  }
  return 0;
}

struct NormalizeOptions {
  DataOptions data;
  std::string column = "x1";
  bool baseline = false;
  std::string h = "n^-0.6";
  std::string out_sync;
  std::string out_async;
};

int cmd_normalize(const NormalizeOptions& o) {
  const LongitudinalDataset data = o.data.load();
  ColumnSelector sel;
  sel.baseline = o.baseline;
  if (o.column.size() < 2 || (o.column[0] != 'x' && o.column[0] != 'z')) {
    throw Error(ErrorCode::InvalidParameter, "--column must name x<k> or z<k>");
  }
  sel.process = o.column[0] == 'x' ? ColumnSelector::Process::Sync : ColumnSelector::Process::Async;
  const double k = parse_real(o.column.substr(1), "--column");
  if (k < 1 || k != std::floor(k)) throw Error(ErrorCode::InvalidParameter, "bad --column index");
  sel.index = static_cast<std::size_t>(k) - 1;
  const double h = require_explicit(o.h, "--h").resolve(data.size());
  const LongitudinalDataset out = normalize_longitudinal(data, h, sel, parse_kernel(o.data.kernel));
  write_dataset(out, o.out_sync,
                o.out_async.empty() ? std::nullopt : std::optional<std::string>(o.out_async));
  return 0;
}

// Turns key=value lines into --key=value arguments placed before the user's
// own flags; options keep their last value, so explicit flags win.
std::vector<std::string> expand_config(const std::vector<std::string>& args) {
  std::vector<std::string> out;
  std::vector<std::string> injected;
  for (std::size_t a = 0; a < args.size(); ++a) {
    std::string path;
    if (args[a] == "--config") {
      if (a + 1 >= args.size()) throw Error(ErrorCode::InvalidParameter, "--config needs a path");
      path = args[++a];
    } else if (args[a].rfind("--config=", 0) == 0) {
      path = args[a].substr(9);
    } else {
      out.push_back(args[a]);
      continue;
    }
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoError, "cannot open config '" + path + "'");
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      const auto first = line.find_first_not_of(" \t");
      if (first == std::string::npos || line[first] == '#') continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos) {
        throw Error(ErrorCode::InvalidParameter,
                    "config line " + std::to_string(lineno) + ": expected key=value");
      }
      auto strip = [](std::string s) {
        const auto b = s.find_first_not_of(" \t");
        const auto e = s.find_last_not_of(" \t");
        return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
      };
      std::string key = strip(line.substr(0, eq));
      std::replace(key.begin(), key.end(), '_', '-');
      const std::string value = strip(line.substr(eq + 1));
      if (value == "true") {
        injected.push_back("--" + key);
      } else if (value != "false") {
        injected.push_back("--" + key + "=" + value);
      }
    }
  }
  // Insert after the subcommand (and its positional table name for reproduce).
  if (injected.empty() || out.size() < 2) return out;
  std::size_t at = 2;
  if (out[1] == "reproduce" && out.size() > 2 && out[2].rfind("-", 0) != 0) at = 3;
  out.insert(out.begin() + static_cast<std::ptrdiff_t>(at), injected.begin(), injected.end());
  return out;
}

void take_last(CLI::App& app) {
  for (auto* sub : app.get_subcommands({})) {
    for (auto* opt : sub->get_options()) opt->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  }
}

}  // namespace

std::optional<Bandwidth> parse_bandwidth(const std::string& text) {
  if (text == "auto") return std::nullopt;
  const auto pos = text.find("n^-");
  if (pos == std::string::npos) return Bandwidth::fixed(parse_real(text, "bandwidth"));
  const double exponent = parse_real(text.substr(pos + 3), "bandwidth exponent");
  std::string scale = text.substr(0, pos);
  if (!scale.empty() && scale.back() == '*') scale.pop_back();
  return Bandwidth::rule(exponent, scale.empty() ? 1.0 : parse_real(scale, "bandwidth scale"));
}

int run_cli(int argc, char** argv) {
  CLI::App app{"Varying-coefficient models with synchronous and asynchronous longitudinal covariates"};
  app.name("asynclc");
  app.set_help_flag("--help", "Print this help message and exit");
  app.require_subcommand(1);

  FitOptions fit_opts;
  auto* fit = app.add_subcommand("fit", "Fit coefficient curves with pointwise intervals");
  add_fit_options(fit, fit_opts);

  FitOptions scb_fit;
  ScbOptions scb_opts;
  auto* scb = app.add_subcommand("scb", "Fit curves and add wild-bootstrap simultaneous bands");
  add_fit_options(scb, scb_fit);
  scb->add_option("--B", scb_opts.replicates, "Bootstrap replicates (>= 100)");
  scb->add_option("--alpha", scb_opts.alpha);
  scb->add_option("--law", scb_opts.law, "rademacher or normal");
  scb->add_option("--meta", scb_opts.meta, "Metadata JSON (default: <output>.meta.json)");

  SelectOptions sel_opts;
  auto* sel = app.add_subcommand("select-bandwidth", "Cross-validated bandwidth selection");
  add_fit_options(sel, sel_opts.fit);
  sel->add_option("--stage", sel_opts.stage, "first, second or one-step");
  sel->add_option("--candidates", sel_opts.candidates, "Comma-separated bandwidths (h1 = h2)");
  sel->add_option("--times", sel_opts.times, "Comma-separated evaluation times");

  SimOptions sim_opts;
  auto add_sim = [](CLI::App* a, SimOptions& o) {
    a->add_option("--setting", o.setting, "Coefficient setting: i or ii");
    a->add_option("--n", o.n, "Subjects per dataset");
    a->add_option("--reps", o.reps, "Monte Carlo replicates");
    a->add_option("--seed", o.seed);
    a->add_option("--threads", o.threads);
    a->add_option("--B", o.scb_replicates, "Bootstrap replicates per band");
    a->add_option("--alpha", o.alpha);
    a->add_option("--law", o.law);
    a->add_option("--output-prefix", o.output_prefix);
    a->add_flag("--auto", o.auto_bandwidth, "Cross-validate bandwidths in every replicate");
  };
  auto* simulate = app.add_subcommand("simulate", "Monte Carlo study of one estimator");
  add_sim(simulate, sim_opts);
  simulate->add_option("--method", sim_opts.method);
  simulate->add_option("--h", sim_opts.h);
  simulate->add_option("--h1", sim_opts.h1);
  simulate->add_option("--h2", sim_opts.h2);
  simulate->add_flag("--scb", sim_opts.scb, "Also evaluate simultaneous bands");
  simulate->add_flag("--points-only", sim_opts.points_only, "Skip grid metrics");

  SimOptions rep_opts;
  std::string table;
  auto* reproduce = app.add_subcommand("reproduce", "Preset studies: table1, table2, tableS1, tableS2");
  reproduce->add_option("table", table)->required();
  add_sim(reproduce, rep_opts);

  NormalizeOptions norm_opts;
  auto* normalize = app.add_subcommand("normalize", "Standardize one covariate column over time");
  add_data_options(normalize, norm_opts.data);
  normalize->add_option("--column", norm_opts.column, "x<k> or z<k>");
  normalize->add_flag("--baseline", norm_opts.baseline, "Column is time-invariant");
  normalize->add_option("--h", norm_opts.h);
  normalize->add_option("--output-sync", norm_opts.out_sync)->required();
  normalize->add_option("--output-async", norm_opts.out_async);

  take_last(app);

  try {
    std::vector<std::string> args(argv, argv + argc);
    args = expand_config(args);
    std::vector<char*> raw;
    for (auto& a : args) raw.push_back(a.data());
    try {
      app.parse(static_cast<int>(raw.size()), raw.data());
    } catch (const CLI::CallForHelp& e) {
      return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
      return app.exit(e);
    } catch (const CLI::ParseError& e) {
      std::cerr << "ERROR BAD_PARAM: " << e.what() << '\n';
      return 1;
    }
    if (*fit) return cmd_fit(fit_opts);
    if (*scb) return cmd_scb(scb_fit, scb_opts);
    if (*sel) return cmd_select(sel_opts);
    if (*simulate) return cmd_simulate(sim_opts);
    if (*reproduce) return cmd_reproduce(table, rep_opts, reproduce->count("--setting") > 0);
    if (*normalize) return cmd_normalize(norm_opts);
  } catch (const Error& e) {
    std::cerr << "ERROR " << error_code_name(e.code()) << ": " << e.what() << '\n';
    return error_exit_code(e.code());
  } catch (const std::exception& e) {
    std::cerr << "ERROR INTERNAL: " << e.what() << '\n';
    return 3;
  }
  return 1;
}

}  // namespace asynclc
