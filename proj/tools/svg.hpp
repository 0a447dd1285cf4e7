#pragma once

#include <string>
#include <vector>

// Minimal SVG figure writers for the CLI reports.
namespace ircr::svg {

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

struct Panel {
  std::string title;
  std::vector<Series> series;
};

/// Vertically stacked line-plot panels sharing the x label.
std::string line_panels(const std::string& title, const std::vector<Panel>& panels, const std::string& xlabel);

struct BarGroup {
  std::string label;
  std::vector<double> values;  // one per series
};

/// Grouped bar chart with values in [0, 1].
std::string grouped_bars(const std::string& title, const std::vector<std::string>& series,
                         const std::vector<BarGroup>& groups);

struct Marker {
  double row = 0.0;
  double col = 0.0;
  std::string label;
};

struct Link {
  Marker a;
  Marker b;
  bool kept = false;
};

/// Pixel-grid overlay: teacher/student foreground, centroids and match links.
std::string match_overlay(std::size_t height, std::size_t width, const std::vector<int>& teacher_fg,
                          const std::vector<int>& student_fg, const std::vector<Marker>& teacher,
                          const std::vector<Marker>& student, const std::vector<Link>& links);

std::string escape(const std::string& text);

}  // namespace ircr::svg
