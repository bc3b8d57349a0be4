#include "estformer/plot.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace estformer {

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&apos;"; break;
      default: out += c;
    }
  }
  return out;
}

namespace {

const char* const kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                               "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

std::string num(double v) {
  std::ostringstream os;
  os << std::setprecision(4) << v;
  return os.str();
}

}  // namespace

std::string render_svg(const LinePlot& plot, int width, int height) {
  if (plot.series.empty()) throw std::invalid_argument("plot has no series");
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const auto& s : plot.series) {
    if (s.x.size() != s.y.size()) throw std::invalid_argument("series '" + s.name + "' has mismatched x/y");
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, s.y[i]);
      y1 = std::max(y1, s.y[i]);
    }
  }
  if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (x1 == x0) x0 -= 0.5, x1 += 0.5;
  if (y1 == y0) y0 -= 0.5, y1 += 0.5;
  const double pad = 0.05 * (y1 - y0);
  y0 -= pad;
  y1 += pad;

  const double left = 80, right = width - 160.0, top = 40, bottom = height - 60.0;
  const auto px = [&](double x) { return left + (x - x0) / (x1 - x0) * (right - left); };
  const auto py = [&](double y) { return bottom - (y - y0) / (y1 - y0) * (bottom - top); };

  std::ostringstream os;
  os << std::fixed << std::setprecision(2);
  os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
     << "\" viewBox=\"0 0 " << width << ' ' << height << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "<rect x=\"0\" y=\"0\" width=\"" << width << "\" height=\"" << height << "\" fill=\"white\"/>\n";
  os << "<text x=\"" << width / 2.0 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">"
     << xml_escape(plot.title) << "</text>\n";
  os << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << right - left << "\" height=\"" << bottom - top
     << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double fx = x0 + (x1 - x0) * i / 4.0, fy = y0 + (y1 - y0) * i / 4.0;
    os << "<text x=\"" << px(fx) << "\" y=\"" << bottom + 16 << "\" text-anchor=\"middle\">" << num(fx)
       << "</text>\n";
    os << "<text x=\"" << left - 6 << "\" y=\"" << py(fy) + 4 << "\" text-anchor=\"end\">" << num(fy)
       << "</text>\n";
    os << "<line x1=\"" << left << "\" y1=\"" << py(fy) << "\" x2=\"" << right << "\" y2=\"" << py(fy)
       << "\" stroke=\"#dddddd\"/>\n";
  }
  os << "<text class=\"x-label\" x=\"" << (left + right) / 2 << "\" y=\"" << height - 16
     << "\" text-anchor=\"middle\">" << xml_escape(plot.x_label) << "</text>\n";
  os << "<text class=\"y-label\" x=\"18\" y=\"" << (top + bottom) / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 18 "
     << (top + bottom) / 2 << ")\">" << xml_escape(plot.y_label) << "</text>\n";

  for (std::size_t k = 0; k < plot.series.size(); ++k) {
    const auto& s = plot.series[k];
    const char* color = kColors[k % std::size(kColors)];
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    bool first = true;
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      os << (first ? "" : " ") << px(s.x[i]) << ',' << py(s.y[i]);
      first = false;
    }
    os << "\"><title>" << xml_escape(s.name) << "</title></polyline>\n";
    const double ly = top + 16.0 * static_cast<double>(k) + 8;
    os << "<line x1=\"" << right + 12 << "\" y1=\"" << ly << "\" x2=\"" << right + 32 << "\" y2=\"" << ly
       << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    os << "<text x=\"" << right + 38 << "\" y=\"" << ly + 4 << "\">" << xml_escape(s.name) << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

LinePlot training_log_plot(const std::string& csv_text) {
  std::istringstream in(csv_text);
  std::string line;
  if (!std::getline(in, line)) throw std::invalid_argument("training log is empty");
  std::vector<std::string> header;
  {
    std::istringstream hs(line);
    std::string cell;
    while (std::getline(hs, cell, ',')) header.push_back(cell);
  }
  if (header.empty() || header[0] != "epoch") throw std::invalid_argument("training log must start with an epoch column");
  std::vector<std::vector<double>> cols(header.size());
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string cell;
    std::size_t j = 0;
    while (std::getline(ls, cell, ',')) {
      if (j >= header.size()) throw std::invalid_argument("training log row " + std::to_string(row) + " is too long");
      try {
        cols[j].push_back(std::stod(cell));
      } catch (const std::exception&) {
        cols[j].push_back(std::numeric_limits<double>::quiet_NaN());
      }
      ++j;
    }
    if (j != header.size()) throw std::invalid_argument("training log row " + std::to_string(row) + " is too short");
  }
  LinePlot plot{"Training log", "epoch", "value relative to first epoch", {}};
  for (std::size_t j = 1; j < header.size(); ++j) {
    if (header[j] == "seconds") continue;
    double base = std::numeric_limits<double>::quiet_NaN();
    for (double v : cols[j]) {
      if (std::isfinite(v) && v != 0.0) {
        base = v;
        break;
      }
    }
    if (!std::isfinite(base)) continue;
    Series s{header[j], cols[0], {}};
    for (double v : cols[j]) s.y.push_back(v / base);
    plot.series.push_back(std::move(s));
  }
  if (plot.series.empty()) throw std::invalid_argument("training log has no plottable columns");
  return plot;
}

}  // namespace estformer
