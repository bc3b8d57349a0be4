#pragma once

#include <string>
#include <vector>

namespace estformer {

struct Series {
  std::string name;
  std::vector<double> x, y;
};

struct LinePlot {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<Series> series;
};

// Standalone SVG document: framed axes with tick labels, one <polyline> per
// series and a legend. Non-finite points are dropped.
std::string render_svg(const LinePlot& plot, int width = 800, int height = 480);

std::string xml_escape(const std::string& s);

// Parses a training log CSV and plots every loss/metric column against the
// epoch, each divided by its first finite value so they share one axis.
LinePlot training_log_plot(const std::string& csv_text);

}  // namespace estformer
