#include "turnpoint/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include "turnpoint/errors.hpp"

namespace turnpoint {

std::optional<double> turning_point(std::vector<std::pair<double, double>> x_ta2, double threshold) {
  if (x_ta2.empty()) return std::nullopt;
  std::sort(x_ta2.begin(), x_ta2.end());
  double peak = -std::numeric_limits<double>::infinity();
  for (const auto& [x, v] : x_ta2) {
    if (std::isfinite(v)) peak = std::max(peak, v);
  }
  if (!std::isfinite(peak)) return std::nullopt;
  const double cut = threshold * peak;
  std::optional<double> last;
  for (const auto& [x, v] : x_ta2) {
    if (!(v >= cut)) break;
    last = x;
  }
  return last;
}

namespace {

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

std::string escape_xml(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf"};

}  // namespace

std::string render_line_chart(const std::string& title, const std::string& y_label,
                              const std::vector<ChartSeries>& series) {
  constexpr double W = 640, H = 400, L = 60, R = 170, T = 40, B = 50;
  double ymin = std::numeric_limits<double>::infinity();
  double ymax = -ymin;
  for (const auto& s : series) {
    for (const auto& [x, y] : s.points) {
      if (!std::isfinite(y)) continue;
      ymin = std::min(ymin, y);
      ymax = std::max(ymax, y);
    }
  }
  if (!std::isfinite(ymin)) {
    ymin = 0.0;
    ymax = 1.0;
  }
  if (ymax - ymin < 1e-9) {
    ymin -= 0.5;
    ymax += 0.5;
  }
  const double pw = W - L - R, ph = H - T - B;
  auto px = [&](double x) { return L + x * pw; };
  auto py = [&](double y) { return T + (ymax - y) / (ymax - ymin) * ph; };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" << W << "\" height=\"" << H << "\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"16\">"
      << escape_xml(title) << "</text>\n";
  svg << "<line x1=\"" << L << "\" y1=\"" << T + ph << "\" x2=\"" << L + pw << "\" y2=\"" << T + ph
      << "\" stroke=\"black\"/>\n";
  svg << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << T + ph << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 5; ++i) {
    const double xv = i / 5.0;
    const double yv = ymin + (ymax - ymin) * i / 5.0;
    svg << "<text x=\"" << px(xv) << "\" y=\"" << T + ph + 18
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" << fmt("%.1f", xv) << "</text>\n";
    svg << "<text x=\"" << L - 6 << "\" y=\"" << py(yv) + 4
        << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" << fmt("%.3g", yv) << "</text>\n";
  }
  svg << "<text x=\"" << L + pw / 2 << "\" y=\"" << H - 10
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">x</text>\n";
  svg << "<text x=\"14\" y=\"" << T + ph / 2 << "\" transform=\"rotate(-90 14 " << T + ph / 2
      << ")\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">" << escape_xml(y_label)
      << "</text>\n";

  for (std::size_t i = 0; i < series.size(); ++i) {
    const char* colour = kPalette[i % std::size(kPalette)];
    std::string pts;
    for (const auto& [x, y] : series[i].points) {
      if (!std::isfinite(y)) continue;
      pts += fmt("%.2f", px(x)) + "," + fmt("%.2f", py(y)) + " ";
    }
    svg << "<polyline fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"2\" points=\"" << pts << "\"/>\n";
    const double ly = T + 14 + 18 * static_cast<double>(i);
    svg << "<line x1=\"" << L + pw + 12 << "\" y1=\"" << ly << "\" x2=\"" << L + pw + 32 << "\" y2=\"" << ly
        << "\" stroke=\"" << colour << "\" stroke-width=\"2\"/>\n";
    svg << "<text x=\"" << L + pw + 38 << "\" y=\"" << ly + 4 << "\" font-family=\"sans-serif\" font-size=\"11\">"
        << escape_xml(series[i].label) << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

void emit_report(const std::vector<AggregateRow>& aggregates, const std::filesystem::path& out_dir,
                 double threshold) {
  std::filesystem::create_directories(out_dir);
  std::ofstream summary(out_dir / "summary.md");
  if (!summary) throw IoError("cannot write summary.md into " + out_dir.string());
  if (aggregates.empty()) {
    summary << "# Sweep summary\n\nno data\n";
    return;
  }
  write_aggregates_csv(out_dir / "aggregates.csv", aggregates);

  std::map<SweepMode, std::vector<const AggregateRow*>> by_mode;
  for (const auto& row : aggregates) by_mode[row.mode].push_back(&row);

  summary << "# Sweep summary\n\n";
  for (const auto& [mode, rows] : by_mode) {
    std::map<std::string, std::vector<const AggregateRow*>> by_series;
    for (const auto* r : rows) {
      std::string label(to_string(r->category));
      if (r->setting > 0) label += " s" + std::to_string(r->setting);
      by_series[label].push_back(r);
    }
    for (std::size_t k = 0; k < kMetricCount; ++k) {
      std::vector<ChartSeries> series;
      for (const auto& [label, members] : by_series) {
        ChartSeries s{label, {}};
        for (const auto* r : members) s.points.emplace_back(r->x, r->stats[k].mean);
        std::sort(s.points.begin(), s.points.end());
        series.push_back(std::move(s));
      }
      const std::string name = std::string(kMetricNames[k]) + "_" + std::string(to_string(mode));
      std::ofstream(out_dir / (name + ".svg")) << render_line_chart(name, kMetricNames[k], series);
    }

    summary << "## " << to_string(mode) << "\n\n";
    summary << "| series | turning point x | ta2 at min x | ta2 at max x |\n|---|---|---|---|\n";
    for (const auto& [label, members] : by_series) {
      std::vector<std::pair<double, double>> pts;
      for (const auto* r : members) pts.emplace_back(r->x, r->stat("ta2").mean);
      std::sort(pts.begin(), pts.end());
      const auto tp = turning_point(pts, threshold);
      summary << "| " << label << " | " << (tp ? fmt("%.2f", *tp) : std::string("none")) << " | "
              << fmt("%.4f", pts.front().second) << " | " << fmt("%.4f", pts.back().second) << " |\n";
    }
    summary << "\nturning point threshold: " << fmt("%.2f", threshold) << " of max mean ta2\n\n";
  }
}

}  // namespace turnpoint
