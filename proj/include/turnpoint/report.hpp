#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "turnpoint/harness.hpp"

namespace turnpoint {

/// Largest grid x such that mean ta2 stays at or above threshold * max(ta2)
/// for every grid point up to and including x. Points are sorted by x first;
/// nullopt when the first point already falls below the threshold.
std::optional<double> turning_point(std::vector<std::pair<double, double>> x_ta2, double threshold = 0.9);

/// Static SVG 1.1 line chart of one metric against x, one series per label.
struct ChartSeries {
  std::string label;
  std::vector<std::pair<double, double>> points;
};

std::string render_line_chart(const std::string& title, const std::string& y_label,
                              const std::vector<ChartSeries>& series);

/// Writes aggregates.csv, one SVG per (metric, mode) and summary.md into
/// out_dir. Empty input yields only a summary stating "no data".
void emit_report(const std::vector<AggregateRow>& aggregates, const std::filesystem::path& out_dir,
                 double threshold = 0.9);

}  // namespace turnpoint
