#include "asynclc/csv_io.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <json.hpp>
#include <limits>
#include <ostream>
#include <unordered_map>

#include "asynclc/error.hpp"

namespace asynclc {

namespace {

std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> cells;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    cells.push_back(trim(line.substr(start, comma - start)));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return cells;
}

double parse_number(const std::string& cell, std::size_t line, const std::string& column) {
  double v = 0.0;
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  if (!cell.empty() && *first == '+') ++first;
  const auto res = std::from_chars(first, last, v);
  if (cell.empty() || res.ec != std::errc() || res.ptr != last || !std::isfinite(v)) {
    throw ParseError(line, "column '" + column + "': '" + cell + "' is not a finite number");
  }
  return v;
}

struct Table {
  std::vector<std::string> header;
  struct Row {
    std::size_t line;
    std::string id;
    double time;
    std::vector<double> values;
  };
  std::vector<Row> rows;
};

// Header must be subject_id, time, <fixed...>, <prefix>1..<prefix>k.
Table read_table(std::istream& in, const std::vector<std::string>& fixed, const std::string& prefix,
                 const char* what) {
  Table table;
  std::string line;
  std::size_t lineno = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    auto cells = split(line);
    if (!have_header) {
      if (cells.size() < 2 + fixed.size() || cells[0] != "subject_id" || cells[1] != "time") {
        throw ParseError(lineno, std::string(what) + " header must start with subject_id,time");
      }
      for (std::size_t c = 0; c < fixed.size(); ++c) {
        if (cells[2 + c] != fixed[c]) {
          throw ParseError(lineno, std::string(what) + " header: expected column '" + fixed[c] +
                                       "', found '" + cells[2 + c] + "'");
        }
      }
      for (std::size_t c = 2 + fixed.size(); c < cells.size(); ++c) {
        const std::string want = prefix + std::to_string(c - 1 - fixed.size());
        if (cells[c] != want) {
          throw ParseError(lineno, std::string(what) + " header: expected column '" + want +
                                       "', found '" + cells[c] + "'");
        }
      }
      table.header = std::move(cells);
      have_header = true;
      continue;
    }
    if (cells.size() != table.header.size()) {
      throw ParseError(lineno, "expected " + std::to_string(table.header.size()) +
                                   " cells, found " + std::to_string(cells.size()));
    }
    if (cells[0].empty()) throw ParseError(lineno, "empty subject_id");
    Table::Row row;
    row.line = lineno;
    row.id = cells[0];
    row.time = parse_number(cells[1], lineno, "time");
    for (std::size_t c = 2; c < cells.size(); ++c) {
      row.values.push_back(parse_number(cells[c], lineno, table.header[c]));
    }
    table.rows.push_back(std::move(row));
  }
  if (!have_header || table.rows.empty()) {
    throw Error(ErrorCode::EmptyInput, std::string(what) + " file has no data rows");
  }
  return table;
}

std::string cell(double v) { return std::isfinite(v) ? format_double(v) : std::string(); }

void write_row(std::ostream& out, const std::vector<std::string>& cells) {
  for (std::size_t c = 0; c < cells.size(); ++c) {
    if (c) out << ',';
    out << cells[c];
  }
  out << '\n';
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::ofstream open_output(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot open '" + path + "' for writing");
  return out;
}

LongitudinalDataset parse_dataset(std::istream& sync, std::istream* async, std::ostream* log) {
  const Table st = read_table(sync, {"y"}, "x", "sync");
  const std::size_t p = st.header.size() - 3;
  std::optional<Table> at;
  if (async) at = read_table(*async, {}, "z", "async");
  const std::size_t q = at ? at->header.size() - 2 : 0;

  std::vector<SubjectRecord> subjects;
  std::unordered_map<std::string, std::size_t> index;
  std::vector<std::vector<const Table::Row*>> sync_rows, async_rows;
  for (const auto& row : st.rows) {
    auto [it, inserted] = index.emplace(row.id, subjects.size());
    if (inserted) {
      subjects.emplace_back();
      subjects.back().id = row.id;
      sync_rows.emplace_back();
    }
    sync_rows[it->second].push_back(&row);
  }
  async_rows.resize(subjects.size());
  if (at) {
    for (const auto& row : at->rows) {
      const auto it = index.find(row.id);
      if (it == index.end()) {
        throw Error(ErrorCode::OrphanSubject, "subject '" + row.id + "' (async line " +
                                                  std::to_string(row.line) +
                                                  ") does not appear in the sync file");
      }
      async_rows[it->second].push_back(&row);
    }
  }

  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  auto extend = [&](const Table& t) {
    for (const auto& r : t.rows) {
      lo = std::min(lo, r.time);
      hi = std::max(hi, r.time);
    }
  };
  extend(st);
  if (at) extend(*at);
  TimeScale scale;
  if (lo < 0.0 || hi > 1.0) {
    if (!(hi > lo)) throw Error(ErrorCode::InvalidData, "all observation times are equal");
    scale.origin = lo;
    scale.span = hi - lo;
    if (log) {
      *log << "time rescaled to [0,1]: t_unit = (t - " << format_double(lo) << ") / "
           << format_double(scale.span) << '\n';
    }
  }

  for (std::size_t i = 0; i < subjects.size(); ++i) {
    SubjectRecord& s = subjects[i];
    const auto L = static_cast<Eigen::Index>(sync_rows[i].size());
    s.sync_covariates.resize(L, static_cast<Eigen::Index>(p));
    for (Eigen::Index j = 0; j < L; ++j) {
      const auto& r = *sync_rows[i][j];
      s.sync_times.push_back(scale.to_unit(r.time));
      s.responses.push_back(r.values[0]);
      for (std::size_t c = 0; c < p; ++c) s.sync_covariates(j, c) = r.values[1 + c];
    }
    const auto M = static_cast<Eigen::Index>(async_rows[i].size());
    s.async_covariates.resize(M, static_cast<Eigen::Index>(q));
    for (Eigen::Index k = 0; k < M; ++k) {
      const auto& r = *async_rows[i][k];
      s.async_times.push_back(scale.to_unit(r.time));
      for (std::size_t c = 0; c < q; ++c) s.async_covariates(k, c) = r.values[c];
    }
  }
  return LongitudinalDataset(std::move(subjects), p, q, scale);
}

LongitudinalDataset ingest(const std::string& sync_path,
                           const std::optional<std::string>& async_path, std::ostream* log) {
  std::ifstream sync(sync_path, std::ios::binary);
  if (!sync) throw Error(ErrorCode::IoError, "cannot open '" + sync_path + "'");
  if (!async_path) return parse_dataset(sync, nullptr, log);
  std::ifstream async(*async_path, std::ios::binary);
  if (!async) throw Error(ErrorCode::IoError, "cannot open '" + *async_path + "'");
  return parse_dataset(sync, &async, log);
}

void write_dataset(const LongitudinalDataset& dataset, std::ostream& sync, std::ostream* async) {
  std::vector<std::string> header{"subject_id", "time", "y"};
  for (std::size_t c = 0; c < dataset.p(); ++c) header.push_back("x" + std::to_string(c + 1));
  write_row(sync, header);
  for (const auto& s : dataset.subjects()) {
    for (std::size_t j = 0; j < s.sync_count(); ++j) {
      std::vector<std::string> row{s.id, format_double(s.sync_times[j]),
                                   format_double(s.responses[j])};
      for (std::size_t c = 0; c < dataset.p(); ++c) {
        row.push_back(format_double(s.sync_covariates(j, c)));
      }
      write_row(sync, row);
    }
  }
  if (!async || dataset.q() == 0) return;
  header = {"subject_id", "time"};
  for (std::size_t c = 0; c < dataset.q(); ++c) header.push_back("z" + std::to_string(c + 1));
  write_row(*async, header);
  for (const auto& s : dataset.subjects()) {
    for (std::size_t k = 0; k < s.async_count(); ++k) {
      std::vector<std::string> row{s.id, format_double(s.async_times[k])};
      for (std::size_t c = 0; c < dataset.q(); ++c) {
        row.push_back(format_double(s.async_covariates(k, c)));
      }
      write_row(*async, row);
    }
  }
}

void write_dataset(const LongitudinalDataset& dataset, const std::string& sync_path,
                   const std::optional<std::string>& async_path) {
  auto sync = open_output(sync_path);
  if (async_path && dataset.q() > 0) {
    auto async = open_output(*async_path);
    write_dataset(dataset, sync, &async);
  } else {
    write_dataset(dataset, sync, nullptr);
  }
}

void write_curve_csv(const CurveEstimate& curve, const BandMap& bands, std::ostream& out) {
  std::vector<std::string> header{"t"};
  for (std::size_t c = 0; c < curve.names.size(); ++c) {
    const auto& name = curve.names[c];
    for (const char* suffix : {"", "_se", "_ci_lo", "_ci_hi"}) header.push_back(name + suffix);
    if (bands.count(c)) {
      header.push_back(name + "_scb_lo");
      header.push_back(name + "_scb_hi");
    }
  }
  write_row(out, header);
  for (std::size_t k = 0; k < curve.points.size(); ++k) {
    const auto& pt = curve.points[k];
    std::vector<std::string> row{format_double(pt.t)};
    for (std::size_t c = 0; c < curve.names.size(); ++c) {
      if (pt.ok) {
        row.push_back(cell(pt.coef(c)));
        row.push_back(cell(pt.se(c)));
        row.push_back(cell(pt.ci_lower(c)));
        row.push_back(cell(pt.ci_upper(c)));
      } else {
        row.insert(row.end(), 4, std::string());
      }
      if (auto it = bands.find(c); it != bands.end()) {
        row.push_back(cell(it->second.lower(k)));
        row.push_back(cell(it->second.upper(k)));
      }
    }
    write_row(out, row);
  }
}

std::vector<std::string> emit_plot_data(const CurveEstimate& curve, const BandMap& bands,
                                        const std::string& prefix) {
  std::vector<std::string> paths;
  for (std::size_t c = 0; c < curve.names.size(); ++c) {
    const std::string path = prefix + "_" + curve.names[c] + ".csv";
    auto out = open_output(path);
    write_row(out, {"t", "estimate", "ci_lo", "ci_hi", "scb_lo", "scb_hi"});
    const auto band = bands.find(c);
    for (std::size_t k = 0; k < curve.points.size(); ++k) {
      const auto& pt = curve.points[k];
      std::vector<std::string> row{format_double(pt.t)};
      if (pt.ok) {
        row.push_back(cell(pt.coef(c)));
        row.push_back(cell(pt.ci_lower(c)));
        row.push_back(cell(pt.ci_upper(c)));
      } else {
        row.insert(row.end(), 3, std::string());
      }
      if (band != bands.end()) {
        row.push_back(cell(band->second.lower(k)));
        row.push_back(cell(band->second.upper(k)));
      } else {
        row.insert(row.end(), 2, std::string());
      }
      write_row(out, row);
    }
    if (!out) throw Error(ErrorCode::IoError, "failed writing '" + path + "'");
    paths.push_back(path);
  }
  return paths;
}

void write_cv_csv(const CvResult& result, std::ostream& out) {
  write_row(out, {"stage", "h1", "h2", "aspe", "chosen", "note"});
  for (std::size_t c = 0; c < result.candidates.size(); ++c) {
    std::string note = result.notes[c];
    std::replace(note.begin(), note.end(), ',', ';');
    write_row(out, {stage_name(result.stage), format_double(result.candidates[c].h1),
                    format_double(result.candidates[c].h2), cell(result.aspe[c]),
                    c == result.chosen_index ? "1" : "0", note});
  }
}

void write_report_points_csv(const SimulationReport& report, std::ostream& out) {
  write_row(out, {"estimator", "coefficient", "t", "bias", "sd", "se", "cp", "bias_mcse",
                  "count"});
  for (const auto& p : report.points) {
    write_row(out, {p.estimator, p.coefficient, format_double(p.t), cell(p.bias), cell(p.sd),
                    cell(p.mean_se), cell(p.cp), cell(p.bias_mcse), std::to_string(p.count)});
  }
}

void write_report_curves_csv(const SimulationReport& report, std::ostream& out) {
  write_row(out, {"estimator", "coefficient", "rase_mean", "rase_sd", "ci_coverage",
                  "scb_coverage", "count"});
  for (const auto& c : report.curves) {
    write_row(out, {c.estimator, c.coefficient, cell(c.rase_mean), cell(c.rase_sd),
                    cell(c.ci_coverage), cell(c.scb_coverage), std::to_string(c.count)});
  }
}

std::string report_json(const SimulationReport& report) {
  using nlohmann::json;
  auto num = [](double v) { return std::isfinite(v) ? json(v) : json(nullptr); };
  json j;
  j["n"] = report.n;
  j["setting"] = setting_name(report.setting);
  j["replicates"] = report.replicates;
  j["seed"] = report.seed;
  j["points"] = json::array();
  for (const auto& p : report.points) {
    j["points"].push_back({{"estimator", p.estimator}, {"coefficient", p.coefficient},
                           {"t", p.t}, {"bias", num(p.bias)}, {"sd", num(p.sd)},
                           {"se", num(p.mean_se)}, {"cp", num(p.cp)},
                           {"bias_mcse", num(p.bias_mcse)}, {"count", p.count}});
  }
  j["curves"] = json::array();
  for (const auto& c : report.curves) {
    j["curves"].push_back({{"estimator", c.estimator}, {"coefficient", c.coefficient},
                           {"rase_mean", num(c.rase_mean)}, {"rase_sd", num(c.rase_sd)},
                           {"ci_coverage", num(c.ci_coverage)},
                           {"scb_coverage", num(c.scb_coverage)}, {"count", c.count}});
  }
  j["failures"] = json::array();
  for (const auto& f : report.failures) {
    j["failures"].push_back(
        {{"estimator", f.estimator}, {"count", f.failures}, {"messages", f.messages}});
  }
  j["warnings"] = report.warnings;
  return j.dump(2) + "\n";
}

}  // namespace asynclc
