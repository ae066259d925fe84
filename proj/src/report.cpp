#include "hierbias/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>

#include "hierbias/errors.hpp"

namespace hierbias {

namespace {

constexpr double kPanelWidth = 500;
constexpr double kPanelHeight = 320;
const char* const kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd"};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char ch : s) {
    switch (ch) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += ch;
    }
  }
  return out;
}

std::string tick_label(double v, XScale scale) {
  char buf[32];
  if (scale == XScale::Log) {
    std::snprintf(buf, sizeof(buf), "%.3g", std::pow(10.0, v));
  } else {
    std::snprintf(buf, sizeof(buf), "%.3g", v);
  }
  return buf;
}

}  // namespace

double PlotFrame::px(double x) const {
  if (x_max == x_min) return left + width / 2;
  return left + (x - x_min) / (x_max - x_min) * width;
}

double PlotFrame::py(double y) const { return top + (1.0 - y) * height; }

PlotFrame frame_for(const ChartPanel& panel, int index) {
  PlotFrame f;
  f.left += kPanelWidth * index;
  f.scale = panel.scale;
  bool any = false;
  for (const auto& s : panel.series) {
    for (double x : s.x) {
      if (!any) f.x_min = f.x_max = x;
      f.x_min = std::min(f.x_min, x);
      f.x_max = std::max(f.x_max, x);
      any = true;
    }
  }
  if (panel.scale == XScale::Categorical && f.x_max > f.x_min) {
    f.x_min -= 0.5;
    f.x_max += 0.5;
  }
  return f;
}

std::vector<ChartPanel> build_panels(const std::vector<ResultRow>& rows, Split split) {
  std::vector<ResultRow> selected;
  for (const auto& r : rows) {
    if (r.step < 0 && r.split == split) selected.push_back(r);
  }
  if (selected.empty()) throw DataError("no checkpoint-mean rows for split " + std::string(to_string(split)));
  const auto summary = summarize(selected);

  std::vector<Task> tasks;
  for (const auto& s : summary) {
    if (std::find(tasks.begin(), tasks.end(), s.task) == tasks.end()) tasks.push_back(s.task);
  }
  std::vector<ChartPanel> panels;
  for (auto task : tasks) {
    std::vector<SummaryRow> pts;
    for (const auto& s : summary) {
      if (s.task == task) pts.push_back(s);
    }
    ChartPanel p;
    p.title = std::string(to_string(task)) + " (" + std::string(to_string(split)) + ")";
    std::set<std::size_t> words;
    std::set<std::int64_t> params;
    for (const auto& s : pts) {
      words.insert(s.pretrain_words);
      params.insert(s.params);
    }
    std::vector<double> xs;
    if (words.size() == pts.size() && pts.size() > 1 && *words.begin() > 0) {
      p.scale = XScale::Log;
      p.x_label = "pre-training words";
      for (const auto& s : pts) xs.push_back(std::log10(static_cast<double>(s.pretrain_words)));
    } else if (params.size() == pts.size()) {
      p.scale = XScale::Linear;
      p.x_label = "parameters";
      for (const auto& s : pts) xs.push_back(static_cast<double>(s.params));
    } else {
      p.scale = XScale::Categorical;
      p.x_label = "run";
      for (std::size_t i = 0; i < pts.size(); ++i) {
        xs.push_back(static_cast<double>(i));
        p.categories.push_back(pts[i].run_id);
      }
    }
    // Points in x order so the mean line reads left to right.
    std::vector<std::size_t> order(pts.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return xs[a] < xs[b]; });
    ChartSeries targeted{task == Task::Question ? "main-aux accuracy" : "object accuracy", {}, {}, {}};
    ChartSeries seq{"sequence accuracy", {}, {}, {}};
    for (std::size_t i : order) {
      targeted.x.push_back(xs[i]);
      targeted.mean.push_back(pts[i].targeted_mean);
      targeted.std.push_back(pts[i].targeted_std);
      seq.x.push_back(xs[i]);
      seq.mean.push_back(pts[i].seq_mean);
      seq.std.push_back(pts[i].seq_std);
    }
    if (p.scale == XScale::Categorical) {
      std::vector<std::string> cats;
      for (std::size_t i : order) cats.push_back(p.categories[i]);
      p.categories = cats;
    }
    p.series = {targeted, seq};
    panels.push_back(p);
  }
  return panels;
}

std::string render_svg(const std::vector<ChartPanel>& panels) {
  if (panels.empty()) throw DataError("nothing to plot");
  const double width = kPanelWidth * static_cast<double>(panels.size());
  std::string svg = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(width) + "\" height=\"" +
                    num(kPanelHeight + 40) + "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (std::size_t pi = 0; pi < panels.size(); ++pi) {
    const auto& panel = panels[pi];
    const auto f = frame_for(panel, static_cast<int>(pi));
    svg += "<g class=\"panel\">\n";
    svg += "<text x=\"" + num(f.left + f.width / 2) + "\" y=\"18\" text-anchor=\"middle\" font-size=\"13\">" +
           escape(panel.title) + "</text>\n";
    // Axes and y grid.
    svg += "<line x1=\"" + num(f.left) + "\" y1=\"" + num(f.py(0)) + "\" x2=\"" + num(f.left + f.width) +
           "\" y2=\"" + num(f.py(0)) + "\" stroke=\"black\"/>\n";
    svg += "<line x1=\"" + num(f.left) + "\" y1=\"" + num(f.py(0)) + "\" x2=\"" + num(f.left) + "\" y2=\"" +
           num(f.py(1)) + "\" stroke=\"black\"/>\n";
    for (int t = 0; t <= 4; ++t) {
      const double y = t / 4.0;
      svg += "<line x1=\"" + num(f.left) + "\" y1=\"" + num(f.py(y)) + "\" x2=\"" + num(f.left + f.width) +
             "\" y2=\"" + num(f.py(y)) + "\" stroke=\"#dddddd\"/>\n";
      svg += "<text x=\"" + num(f.left - 6) + "\" y=\"" + num(f.py(y) + 4) + "\" text-anchor=\"end\">" + num(y) +
             "</text>\n";
    }
    std::set<double> ticks;
    for (const auto& s : panel.series) ticks.insert(s.x.begin(), s.x.end());
    for (double x : ticks) {
      std::string label;
      if (panel.scale == XScale::Categorical) {
        const auto idx = static_cast<std::size_t>(x);
        label = idx < panel.categories.size() ? panel.categories[idx] : "";
      } else {
        label = tick_label(x, panel.scale);
      }
      svg += "<text x=\"" + num(f.px(x)) + "\" y=\"" + num(f.py(0) + 16) + "\" text-anchor=\"middle\">" +
             escape(label) + "</text>\n";
    }
    svg += "<text x=\"" + num(f.left + f.width / 2) + "\" y=\"" + num(f.py(0) + 34) +
           "\" text-anchor=\"middle\">" + escape(panel.x_label) + (panel.scale == XScale::Log ? " (log)" : "") +
           "</text>\n";

    for (std::size_t si = 0; si < panel.series.size(); ++si) {
      const auto& s = panel.series[si];
      const std::string color = kColors[si % 4];
      std::string band;
      if (s.x.size() == 1) {
        // A lone point gets a short vertical band.
        const double x = f.px(s.x[0]);
        band = num(x - 4) + "," + num(f.py(s.mean[0] + s.std[0])) + " " + num(x + 4) + "," +
               num(f.py(s.mean[0] + s.std[0])) + " " + num(x + 4) + "," + num(f.py(s.mean[0] - s.std[0])) + " " +
               num(x - 4) + "," + num(f.py(s.mean[0] - s.std[0]));
      } else {
        for (std::size_t i = 0; i < s.x.size(); ++i) {
          band += (band.empty() ? "" : " ") + num(f.px(s.x[i])) + "," + num(f.py(s.mean[i] + s.std[i]));
        }
        for (std::size_t i = s.x.size(); i-- > 0;) {
          band += " " + num(f.px(s.x[i])) + "," + num(f.py(s.mean[i] - s.std[i]));
        }
      }
      svg += "<polygon class=\"band\" points=\"" + band + "\" fill=\"" + color +
             "\" fill-opacity=\"0.2\" stroke=\"none\"/>\n";
      if (s.x.size() > 1) {
        std::string line;
        for (std::size_t i = 0; i < s.x.size(); ++i) {
          line += (line.empty() ? "" : " ") + num(f.px(s.x[i])) + "," + num(f.py(s.mean[i]));
        }
        svg += "<polyline class=\"mean\" points=\"" + line + "\" fill=\"none\" stroke=\"" + color +
               "\" stroke-width=\"1.5\"/>\n";
      }
      for (std::size_t i = 0; i < s.x.size(); ++i) {
        svg += "<circle cx=\"" + num(f.px(s.x[i])) + "\" cy=\"" + num(f.py(s.mean[i])) + "\" r=\"3\" fill=\"" +
               color + "\"/>\n";
      }
      const double ly = f.top + 12 + 14 * static_cast<double>(si);
      svg += "<rect x=\"" + num(f.left + f.width - 130) + "\" y=\"" + num(ly - 8) +
             "\" width=\"10\" height=\"10\" fill=\"" + color + "\"/>\n";
      svg += "<text x=\"" + num(f.left + f.width - 115) + "\" y=\"" + num(ly + 1) + "\">" + escape(s.label) +
             "</text>\n";
    }
    svg += "</g>\n";
  }
  svg += "</svg>\n";
  return svg;
}

std::string render_report(const std::vector<ResultRow>& rows, Split split) {
  if (rows.empty()) throw DataError("empty results");
  return render_svg(build_panels(rows, split));
}

}  // namespace hierbias
