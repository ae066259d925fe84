#pragma once

#include <string>
#include <vector>

#include "hierbias/eval.hpp"

namespace hierbias {

enum class XScale { Linear, Log, Categorical };

struct ChartSeries {
  std::string label;
  std::vector<double> x;  // positions (category index on categorical charts)
  std::vector<double> mean;
  std::vector<double> std;
};

struct ChartPanel {
  std::string title;
  std::string x_label;
  XScale scale = XScale::Linear;
  std::vector<std::string> categories;  // tick labels on categorical charts
  std::vector<ChartSeries> series;
};

/// One panel per task over the checkpoint-mean rows of `split`: sequence and
/// targeted accuracy against pre-training words (log x) when those differ
/// between points, else parameters, else one category per run id. Throws
/// DataError when no rows match.
std::vector<ChartPanel> build_panels(const std::vector<ResultRow>& rows, Split split = Split::Gen);

/// Point and band geometry inside a panel.
struct PlotFrame {
  double left = 60, top = 30, width = 400, height = 240;
  double x_min = 0, x_max = 1;
  XScale scale = XScale::Linear;
  double px(double x) const;
  double py(double y) const;  // y in [0, 1] accuracy
};

PlotFrame frame_for(const ChartPanel& panel, int index);

/// Deterministic SVG: lines through the means, markers at each point and a
/// shaded polygon between mean - std and mean + std.
std::string render_svg(const std::vector<ChartPanel>& panels);

std::string render_report(const std::vector<ResultRow>& rows, Split split = Split::Gen);

}  // namespace hierbias
