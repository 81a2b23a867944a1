#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace mass::cli {

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
  bool dashed = false;
};

/// Minimal self-contained SVG line chart. Points that cannot be drawn on a
/// log axis (non-positive or non-finite) are skipped and break the line.
struct LinePlot {
  std::string title;
  std::string x_label;
  std::string y_label;
  bool log_x = false;
  bool log_y = false;
  std::vector<Series> series;

  std::string render(int width = 720, int height = 480) const;
  void write(const std::filesystem::path& path) const;
};

}  // namespace mass::cli
