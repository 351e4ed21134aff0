#pragma once

#include <string>
#include <vector>

#include "imitate/phantom.hpp"

namespace imitate::plot {

struct Series {
    std::string label;
    std::vector<double> x, y;
    std::string color = "#1f6fb2";  // svg hex color, also used for the raster
    bool markers = false;
    bool line = true;
};

struct Figure {
    std::string title;
    std::string xlabel, ylabel;
    std::vector<Series> series;
    int width = 880, height = 520;
};

void render_svg(const Figure& fig, const std::string& path);
void render_png(const Figure& fig, const std::string& path);

/// Breathing trace with per-position acquisition markers; writes
/// <base>.svg and <base>.png.
void plot_signal(const phantom::SliceDataset& dataset, const std::string& base_path);

/// One grouped line per numeric column of a metrics CSV (first column =
/// model id); writes <base>.svg and <base>.png.
void plot_metrics_csv(const std::string& csv_path, const std::string& base_path);

}  // namespace imitate::plot
