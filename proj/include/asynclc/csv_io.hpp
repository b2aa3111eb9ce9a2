#pragma once

#include <fstream>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "asynclc/bandwidth.hpp"
#include "asynclc/curve.hpp"
#include "asynclc/data_model.hpp"
#include "asynclc/scb.hpp"
#include "asynclc/simulation.hpp"

namespace asynclc {

// Shortest text that parses back to exactly the same double.
std::string format_double(double v);

// Reads the sync file (subject_id,time,y,x1..xp) and the optional async file
// (subject_id,time,z1..zq). When any time lies outside [0,1], all times are
// mapped jointly onto [0,1] and the map is described on `log`.
LongitudinalDataset parse_dataset(std::istream& sync, std::istream* async,
                                  std::ostream* log = nullptr);

LongitudinalDataset ingest(const std::string& sync_path,
                           const std::optional<std::string>& async_path,
                           std::ostream* log = nullptr);

// Writes times on the dataset's unit scale; the async file only when q > 0.
void write_dataset(const LongitudinalDataset& dataset, std::ostream& sync, std::ostream* async);
void write_dataset(const LongitudinalDataset& dataset, const std::string& sync_path,
                   const std::optional<std::string>& async_path);

// Bands keyed by coefficient index in the curve's coef order.
using BandMap = std::map<std::size_t, ScbResult>;

// t, then per coefficient: estimate, se, ci_lo, ci_hi (and scb_lo, scb_hi when
// a band exists). Failed grid points leave their cells empty.
void write_curve_csv(const CurveEstimate& curve, const BandMap& bands, std::ostream& out);

// Tidy per-coefficient files <prefix>_<name>.csv with columns
// t, estimate, ci_lo, ci_hi, scb_lo, scb_hi. Returns the paths written.
std::vector<std::string> emit_plot_data(const CurveEstimate& curve, const BandMap& bands,
                                        const std::string& prefix);

void write_cv_csv(const CvResult& result, std::ostream& out);

void write_report_points_csv(const SimulationReport& report, std::ostream& out);
void write_report_curves_csv(const SimulationReport& report, std::ostream& out);
std::string report_json(const SimulationReport& report);

// Opens for writing or throws IoError naming the path.
std::ofstream open_output(const std::string& path);

}  // namespace asynclc
