#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "debias_cl/bias_stats.hpp"
#include "debias_cl/cl_engine.hpp"
#include "debias_cl/synth_data.hpp"

namespace debias_cl {

inline std::string fixed6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline std::vector<std::vector<std::string>> read_csv(const std::string& text, const std::string& expected_header,
                                                      const std::string& what) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line) || line != expected_header) {
    throw FormatError(what + ": expected header '" + expected_header + "'");
  }
  const std::size_t width = split_csv_line(expected_header).size();
  std::vector<std::vector<std::string>> rows;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto cells = split_csv_line(line);
    if (cells.size() != width) {
      throw FormatError(what + ": line " + std::to_string(lineno) + " has " + std::to_string(cells.size()) +
                        " fields, expected " + std::to_string(width));
    }
    rows.push_back(std::move(cells));
  }
  return rows;
}

template <class T>
T parse_number(const std::string& s, const std::string& what) {
  std::istringstream is(s);
  T v{};
  if (!(is >> v) || is.peek() != std::char_traits<char>::eof()) throw FormatError(what + ": bad number '" + s + "'");
  return v;
}

}  // namespace detail

// ---- retrieval report -----------------------------------------------------

inline constexpr const char* kReportHeader = "step,range_start,range_end,direction,top1,n_queries,n_way,trials,seed";

inline std::string report_csv(const std::vector<ReportRow>& rows) {
  std::ostringstream os;
  os << kReportHeader << '\n';
  for (const ReportRow& r : rows) {
    os << r.step << ',' << r.range.first << ',' << r.range.last << ',' << to_string(r.direction) << ','
       << fixed6(r.top1) << ',' << r.n_queries << ',' << r.n_way << ',' << r.trials << ',' << r.seed << '\n';
  }
  return os.str();
}

// Inverse of report_csv. top1 comes back rounded to 6 decimals.
inline std::vector<ReportRow> parse_report_csv(const std::string& text) {
  std::vector<ReportRow> out;
  for (const auto& c : detail::read_csv(text, kReportHeader, "report csv")) {
    ReportRow r;
    r.step = detail::parse_number<std::size_t>(c[0], "report csv");
    r.range.first = detail::parse_number<std::uint32_t>(c[1], "report csv");
    r.range.last = detail::parse_number<std::uint32_t>(c[2], "report csv");
    if (c[3] == "brain_to_image") r.direction = Direction::BrainToImage;
    else if (c[3] == "image_to_brain") r.direction = Direction::ImageToBrain;
    else throw FormatError("report csv: unknown direction '" + c[3] + "'");
    r.top1 = detail::parse_number<double>(c[4], "report csv");
    r.n_queries = detail::parse_number<std::size_t>(c[5], "report csv");
    r.n_way = detail::parse_number<std::size_t>(c[6], "report csv");
    r.trials = detail::parse_number<std::size_t>(c[7], "report csv");
    r.seed = detail::parse_number<std::uint64_t>(c[8], "report csv");
    out.push_back(r);
  }
  return out;
}

inline nlohmann::json report_json(const std::vector<ReportRow>& rows) {
  nlohmann::json arr = nlohmann::json::array();
  for (const ReportRow& r : rows) {
    arr.push_back({{"step", r.step},
                   {"range_start", r.range.first},
                   {"range_end", r.range.last},
                   {"direction", to_string(r.direction)},
                   {"top1", r.top1},
                   {"n_queries", r.n_queries},
                   {"n_way", r.n_way},
                   {"trials", r.trials},
                   {"seed", r.seed}});
  }
  return arr;
}

inline std::string losses_csv(const ProtocolResult& result) {
  std::ostringstream os;
  os << "step,epoch,loss\n";
  for (const StepOutcome& s : result.steps)
    for (std::size_t e = 0; e < s.epoch_losses.size(); ++e)
      os << s.plan.index << ',' << e + 1 << ',' << fixed6(s.epoch_losses[e]) << '\n';
  return os.str();
}

// One method's run for the comparison table.
struct MethodRun {
  std::string method;
  std::vector<ReportRow> rows;
};

// Method x step table: one row per method, one column per step labelled by the
// sessions learned in that step, cells holding cumulative top-1 in percent.
// Every run must share the same step structure.
inline std::string comparison_csv(const std::vector<MethodRun>& runs, Direction direction = Direction::BrainToImage) {
  if (runs.empty()) throw ConfigError("comparison: no runs given");
  auto columns_of = [&](const MethodRun& run) {
    std::vector<std::pair<std::string, double>> cols;
    std::vector<ReportRow> rows;
    for (const ReportRow& r : run.rows)
      if (r.direction == direction) rows.push_back(r);
    std::sort(rows.begin(), rows.end(), [](const ReportRow& a, const ReportRow& b) { return a.step < b.step; });
    std::uint32_t prev_end = 0;
    for (const ReportRow& r : rows) {
      const std::uint32_t first = prev_end == 0 ? r.range.first : prev_end + 1;
      cols.emplace_back(std::to_string(first) + "-" + std::to_string(r.range.last), r.top1);
      prev_end = r.range.last;
    }
    if (cols.empty()) throw FormatError("comparison: run '" + run.method + "' has no " + to_string(direction) + " rows");
    return cols;
  };

  const auto reference = columns_of(runs.front());
  std::ostringstream os;
  os << "method";
  for (const auto& [label, _] : reference) os << ',' << label;
  os << '\n';
  for (const MethodRun& run : runs) {
    const auto cols = columns_of(run);
    if (cols.size() != reference.size()) {
      throw FormatError("comparison: run '" + run.method + "' has " + std::to_string(cols.size()) + " steps, expected " +
                        std::to_string(reference.size()));
    }
    os << run.method;
    for (std::size_t i = 0; i < cols.size(); ++i) {
      if (cols[i].first != reference[i].first) {
        throw FormatError("comparison: run '" + run.method + "' column " + cols[i].first + " does not match " +
                          reference[i].first);
      }
      os << ',' << fixed6(100.0 * cols[i].second);
    }
    os << '\n';
  }
  return os.str();
}

// ---- decline analyses -----------------------------------------------------

inline constexpr const char* kDeclineHeader = "index,metric,value";

inline std::string decline_csv(const DeclineReport& report) {
  std::ostringstream os;
  os << kDeclineHeader << '\n';
  for (const DeclineRow& r : report.rows) os << r.index << ',' << r.metric << ',' << fixed6(r.value) << '\n';
  return os.str();
}

// Rebuilds a report (rows and trends) from its CSV alone.
inline DeclineReport parse_decline_csv(const std::string& text) {
  DeclineReport report;
  for (const auto& c : detail::read_csv(text, kDeclineHeader, "decline csv")) {
    report.rows.push_back(DeclineRow{detail::parse_number<std::size_t>(c[0], "decline csv"), c[1],
                                     detail::parse_number<double>(c[2], "decline csv")});
  }
  report.summarize();
  return report;
}

inline nlohmann::json decline_json(const DeclineReport& report) {
  nlohmann::json trends = nlohmann::json::array();
  for (const MetricTrend& t : report.trends) {
    trends.push_back({{"metric", t.metric},
                      {"slope", t.slope},
                      {"spearman", t.spearman},
                      {"spearman_undefined", t.spearman_undefined}});
  }
  return {{"rows", report.rows.size()}, {"trends", trends}};
}

// Static line chart, one polyline per metric, y axis fixed to [0, 1].
inline std::string decline_svg(const DeclineReport& report, const std::string& title) {
  constexpr double W = 640, H = 400, L = 60, R = 180, T = 40, B = 50;
  std::size_t lo = SIZE_MAX, hi = 0;
  for (const DeclineRow& r : report.rows) {
    lo = std::min(lo, r.index);
    hi = std::max(hi, r.index);
  }
  if (report.rows.empty()) lo = hi = 0;
  const double span = hi > lo ? static_cast<double>(hi - lo) : 1.0;
  auto px = [&](std::size_t i) { return L + (W - L - R) * static_cast<double>(i - lo) / span; };
  auto py = [&](double v) { return T + (H - T - B) * (1.0 - std::clamp(v, 0.0, 1.0)); };
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"};

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << L << "\" y=\"24\" font-family=\"sans-serif\" font-size=\"14\">" << title << "</text>\n";
  os << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B
     << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  for (double v : {0.0, 0.5, 1.0}) {
    os << "<text x=\"" << L - 8 << "\" y=\"" << py(v) + 4 << "\" font-family=\"sans-serif\" font-size=\"11\" "
       << "text-anchor=\"end\">" << v << "</text>\n";
  }
  os << "<text x=\"" << px(lo) << "\" y=\"" << H - B + 18 << "\" font-family=\"sans-serif\" font-size=\"11\">" << lo
     << "</text>\n";
  os << "<text x=\"" << px(hi) << "\" y=\"" << H - B + 18 << "\" font-family=\"sans-serif\" font-size=\"11\">" << hi
     << "</text>\n";
  std::size_t k = 0;
  for (const MetricTrend& t : report.trends) {
    const char* color = colors[k % std::size(colors)];
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (const DeclineRow& r : report.rows)
      if (r.metric == t.metric) os << px(r.index) << ',' << py(r.value) << ' ';
    os << "\"/>\n";
    os << "<text x=\"" << W - R + 10 << "\" y=\"" << T + 16 * static_cast<double>(k) + 10 << "\" fill=\"" << color
       << "\" font-family=\"sans-serif\" font-size=\"11\">" << t.metric << "</text>\n";
    ++k;
  }
  os << "</svg>\n";
  return os.str();
}

// ---- dataset sidecar ------------------------------------------------------

inline nlohmann::json dataset_summary_json(const Dataset& ds) {
  nlohmann::json sessions = nlohmann::json::array();
  for (const SessionStatRow& s : session_stats(ds)) {
    sessions.push_back({{"session", s.session},
                        {"response_accuracy", s.response_accuracy},
                        {"consistency", s.consistency},
                        {"activation_fraction", s.activation_fraction},
                        {"samples", s.samples}});
  }
  const DatasetHeader& h = ds.header;
  return {{"sessions", h.sessions},
          {"samples_per_session", h.samples_per_session},
          {"fmri_dim", h.fmri_dim},
          {"embed_dim", h.embed_dim},
          {"test_fraction", h.test_fraction},
          {"seed", h.seed},
          {"per_session", sessions}};
}

}  // namespace debias_cl
