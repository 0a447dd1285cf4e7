#include "svg.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>

namespace ircr::svg {

namespace {

const char* const kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"};

const char* colour(std::size_t i) { return kPalette[i % (sizeof(kPalette) / sizeof(kPalette[0]))]; }

std::string num(double v) {
  std::ostringstream s;
  s << std::setprecision(6) << v;
  return s.str();
}

void header(std::ostringstream& out, double w, double h) {
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(w) << "\" height=\"" << num(h)
      << "\" viewBox=\"0 0 " << num(w) << ' ' << num(h) << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
}

}  // namespace

std::string escape(const std::string& text) {
  std::string out;
  for (char c : text) {
    switch (c) {
      case '&':
        out += "&amp;";
        break;
      case '<':
        out += "&lt;";
        break;
      case '>':
        out += "&gt;";
        break;
      case '"':
        out += "&quot;";
        break;
      default:
        out += c;
    }
  }
  return out;
}

std::string line_panels(const std::string& title, const std::vector<Panel>& panels, const std::string& xlabel) {
  const double width = 640;
  const double panel_h = 180;
  const double left = 70;
  const double right = 150;
  const double top = 36;
  const double gap = 40;
  const double height = top + static_cast<double>(panels.size()) * (panel_h + gap) + 20;
  std::ostringstream out;
  header(out, width, height);
  out << "<text x=\"" << num(width / 2) << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" << escape(title)
      << "</text>\n";
  for (std::size_t p = 0; p < panels.size(); ++p) {
    const Panel& panel = panels[p];
    const double y0 = top + static_cast<double>(p) * (panel_h + gap);
    const double plot_w = width - left - right;
    double xmin = std::numeric_limits<double>::infinity();
    double xmax = -xmin;
    double ymin = xmin;
    double ymax = -xmin;
    for (const Series& s : panel.series) {
      for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
        if (!std::isfinite(s.y[i])) continue;
        xmin = std::min(xmin, s.x[i]);
        xmax = std::max(xmax, s.x[i]);
        ymin = std::min(ymin, s.y[i]);
        ymax = std::max(ymax, s.y[i]);
      }
    }
    if (!std::isfinite(xmin)) {
      xmin = 0;
      xmax = 1;
      ymin = 0;
      ymax = 1;
    }
    if (xmax == xmin) xmax = xmin + 1;
    if (ymax == ymin) ymax = ymin + 1;
    auto px = [&](double x) { return left + (x - xmin) / (xmax - xmin) * plot_w; };
    auto py = [&](double y) { return y0 + panel_h - (y - ymin) / (ymax - ymin) * panel_h; };

    out << "<text x=\"" << num(left) << "\" y=\"" << num(y0 - 6) << "\">" << escape(panel.title) << "</text>\n";
    out << "<rect x=\"" << num(left) << "\" y=\"" << num(y0) << "\" width=\"" << num(plot_w) << "\" height=\""
        << num(panel_h) << "\" fill=\"none\" stroke=\"#888\"/>\n";
    out << "<text x=\"" << num(left - 4) << "\" y=\"" << num(y0 + 10) << "\" text-anchor=\"end\">" << num(ymax)
        << "</text>\n";
    out << "<text x=\"" << num(left - 4) << "\" y=\"" << num(y0 + panel_h) << "\" text-anchor=\"end\">" << num(ymin)
        << "</text>\n";
    out << "<text x=\"" << num(left) << "\" y=\"" << num(y0 + panel_h + 14) << "\">" << num(xmin) << "</text>\n";
    out << "<text x=\"" << num(left + plot_w) << "\" y=\"" << num(y0 + panel_h + 14) << "\" text-anchor=\"end\">"
        << num(xmax) << "</text>\n";
    out << "<text x=\"" << num(left + plot_w / 2) << "\" y=\"" << num(y0 + panel_h + 14)
        << "\" text-anchor=\"middle\">" << escape(xlabel) << "</text>\n";
    for (std::size_t s = 0; s < panel.series.size(); ++s) {
      const Series& series = panel.series[s];
      out << "<polyline fill=\"none\" stroke-width=\"1.2\" stroke=\"" << colour(s) << "\" points=\"";
      for (std::size_t i = 0; i < series.x.size() && i < series.y.size(); ++i) {
        if (!std::isfinite(series.y[i])) continue;
        out << num(px(series.x[i])) << ',' << num(py(series.y[i])) << ' ';
      }
      out << "\"/>\n";
      const double ly = y0 + 12 + 14 * static_cast<double>(s);
      out << "<rect x=\"" << num(left + plot_w + 10) << "\" y=\"" << num(ly - 8) << "\" width=\"10\" height=\"10\" fill=\""
          << colour(s) << "\"/>\n";
      out << "<text x=\"" << num(left + plot_w + 24) << "\" y=\"" << num(ly) << "\">" << escape(series.name)
          << "</text>\n";
    }
  }
  out << "</svg>\n";
  return out.str();
}

std::string grouped_bars(const std::string& title, const std::vector<std::string>& series,
                         const std::vector<BarGroup>& groups) {
  const double left = 50;
  const double top = 40;
  const double plot_h = 240;
  const double bar_w = 18;
  const double group_gap = 24;
  const double group_w = bar_w * static_cast<double>(std::max<std::size_t>(series.size(), 1)) + group_gap;
  const double width = left + group_w * static_cast<double>(groups.size()) + 140;
  const double height = top + plot_h + 50;
  std::ostringstream out;
  header(out, width, height);
  out << "<text x=\"" << num(width / 2) << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" << escape(title)
      << "</text>\n";
  for (int t = 0; t <= 4; ++t) {
    const double v = 0.25 * t;
    const double y = top + plot_h - v * plot_h;
    out << "<line x1=\"" << num(left) << "\" x2=\"" << num(width - 140) << "\" y1=\"" << num(y) << "\" y2=\"" << num(y)
        << "\" stroke=\"#ddd\"/>\n";
    out << "<text x=\"" << num(left - 4) << "\" y=\"" << num(y + 4) << "\" text-anchor=\"end\">" << num(v)
        << "</text>\n";
  }
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const double gx = left + group_gap / 2 + static_cast<double>(g) * group_w;
    for (std::size_t s = 0; s < groups[g].values.size(); ++s) {
      const double v = std::clamp(groups[g].values[s], 0.0, 1.0);
      out << "<rect x=\"" << num(gx + static_cast<double>(s) * bar_w) << "\" y=\"" << num(top + plot_h - v * plot_h)
          << "\" width=\"" << num(bar_w - 2) << "\" height=\"" << num(v * plot_h) << "\" fill=\"" << colour(s)
          << "\"><title>" << escape(groups[g].label) << ' ' << (s < series.size() ? escape(series[s]) : "") << ' '
          << num(groups[g].values[s]) << "</title></rect>\n";
    }
    out << "<text x=\"" << num(gx + (group_w - group_gap) / 2) << "\" y=\"" << num(top + plot_h + 16)
        << "\" text-anchor=\"middle\">" << escape(groups[g].label) << "</text>\n";
  }
  for (std::size_t s = 0; s < series.size(); ++s) {
    const double ly = top + 12 + 16 * static_cast<double>(s);
    out << "<rect x=\"" << num(width - 130) << "\" y=\"" << num(ly - 9) << "\" width=\"10\" height=\"10\" fill=\""
        << colour(s) << "\"/>\n";
    out << "<text x=\"" << num(width - 116) << "\" y=\"" << num(ly) << "\">" << escape(series[s]) << "</text>\n";
  }
  out << "</svg>\n";
  return out.str();
}

std::string match_overlay(std::size_t height, std::size_t width, const std::vector<int>& teacher_fg,
                          const std::vector<int>& student_fg, const std::vector<Marker>& teacher,
                          const std::vector<Marker>& student, const std::vector<Link>& links) {
  const double scale = 8;
  std::ostringstream out;
  header(out, static_cast<double>(width) * scale, static_cast<double>(height) * scale + 24);
  for (std::size_t r = 0; r < height; ++r) {
    for (std::size_t c = 0; c < width; ++c) {
      const std::size_t p = r * width + c;
      const bool t = p < teacher_fg.size() && teacher_fg[p] != 0;
      const bool s = p < student_fg.size() && student_fg[p] != 0;
      if (!t && !s) continue;
      const char* fill = t && s ? "#b8a9d9" : (t ? "#a6cbe8" : "#f5c99b");
      out << "<rect x=\"" << num(static_cast<double>(c) * scale) << "\" y=\"" << num(static_cast<double>(r) * scale)
          << "\" width=\"" << num(scale) << "\" height=\"" << num(scale) << "\" fill=\"" << fill << "\"/>\n";
    }
  }
  auto cx = [&](const Marker& m) { return num((m.col + 0.5) * scale); };
  auto cy = [&](const Marker& m) { return num((m.row + 0.5) * scale); };
  for (const Link& l : links) {
    out << "<line x1=\"" << cx(l.a) << "\" y1=\"" << cy(l.a) << "\" x2=\"" << cx(l.b) << "\" y2=\"" << cy(l.b)
        << "\" stroke=\"" << (l.kept ? "#2ca02c" : "#d62728") << "\" stroke-width=\"2\""
        << (l.kept ? "" : " stroke-dasharray=\"4 3\"") << "/>\n";
  }
  for (const Marker& m : teacher) {
    out << "<circle cx=\"" << cx(m) << "\" cy=\"" << cy(m) << "\" r=\"4\" fill=\"#1f77b4\"><title>teacher "
        << escape(m.label) << "</title></circle>\n";
  }
  for (const Marker& m : student) {
    out << "<rect x=\"" << num((m.col + 0.5) * scale - 3.5) << "\" y=\"" << num((m.row + 0.5) * scale - 3.5)
        << "\" width=\"7\" height=\"7\" fill=\"#ff7f0e\"><title>student " << escape(m.label) << "</title></rect>\n";
  }
  out << "<text x=\"4\" y=\"" << num(static_cast<double>(height) * scale + 16)
      << "\">circles: teacher, squares: student, green: kept pair, red dashed: rejected pair</text>\n";
  out << "</svg>\n";
  return out.str();
}

}  // namespace ircr::svg
