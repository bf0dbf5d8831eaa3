#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace dsaqc::plot {

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

struct Figure {
  std::string title;
  std::string x_label;
  std::string y_label;
  double x_min = 0.0, x_max = 1.0, y_min = 0.0, y_max = 1.0;
  bool diagonal = false;  // chance line for ROC plots
  std::vector<Series> series;
};

std::string render_svg(const Figure& fig);
void write_svg(const std::filesystem::path& path, const Figure& fig);

}  // namespace dsaqc::plot
