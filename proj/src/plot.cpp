#include "imitate/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "imitate/io.hpp"

namespace imitate::plot {

namespace {

struct Range {
    double lo = 0.0, hi = 1.0;
    void fit(const std::vector<double>& v) {
        for (double x : v) {
            lo = std::min(lo, x);
            hi = std::max(hi, x);
        }
    }
};

struct Mapper {
    Range rx, ry;
    int width, height;
    static constexpr int kMargin = 56;
    double px(double x) const {
        double s = (x - rx.lo) / (rx.hi - rx.lo + 1e-300);
        return kMargin + s * (width - 2 * kMargin);
    }
    double py(double y) const {
        double s = (y - ry.lo) / (ry.hi - ry.lo + 1e-300);
        return height - kMargin - s * (height - 2 * kMargin);
    }
};

Mapper make_mapper(const Figure& fig) {
    Mapper m;
    m.width = fig.width;
    m.height = fig.height;
    bool first = true;
    for (const auto& s : fig.series) {
        if (s.x.empty()) continue;
        if (first) {
            m.rx.lo = m.rx.hi = s.x[0];
            m.ry.lo = m.ry.hi = s.y[0];
            first = false;
        }
        m.rx.fit(s.x);
        m.ry.fit(s.y);
    }
    if (m.ry.hi == m.ry.lo) m.ry.hi = m.ry.lo + 1.0;
    if (m.rx.hi == m.rx.lo) m.rx.hi = m.rx.lo + 1.0;
    return m;
}

unsigned parse_hex(const std::string& color, int i) {
    return static_cast<unsigned>(std::stoul(color.substr(1 + 2 * i, 2), nullptr, 16));
}

}  // namespace

void render_svg(const Figure& fig, const std::string& path) {
    Mapper m = make_mapper(fig);
    std::ostringstream os;
    os << "<svg xmlns='http://www.w3.org/2000/svg' width='" << fig.width << "' height='"
       << fig.height << "'>\n";
    os << "<rect width='100%' height='100%' fill='white'/>\n";
    os << "<line x1='" << Mapper::kMargin << "' y1='" << fig.height - Mapper::kMargin
       << "' x2='" << fig.width - Mapper::kMargin << "' y2='" << fig.height - Mapper::kMargin
       << "' stroke='black'/>\n";
    os << "<line x1='" << Mapper::kMargin << "' y1='" << Mapper::kMargin << "' x2='"
       << Mapper::kMargin << "' y2='" << fig.height - Mapper::kMargin << "' stroke='black'/>\n";
    os << "<text x='" << fig.width / 2 << "' y='24' text-anchor='middle' font-size='16'>"
       << fig.title << "</text>\n";
    os << "<text x='" << fig.width / 2 << "' y='" << fig.height - 12
       << "' text-anchor='middle' font-size='12'>" << fig.xlabel << "</text>\n";
    os << "<text x='16' y='" << fig.height / 2 << "' text-anchor='middle' font-size='12' "
       << "transform='rotate(-90 16 " << fig.height / 2 << ")'>" << fig.ylabel << "</text>\n";

    char buf[64];
    for (int k = 0; k <= 4; ++k) {
        double xv = m.rx.lo + k * (m.rx.hi - m.rx.lo) / 4;
        double yv = m.ry.lo + k * (m.ry.hi - m.ry.lo) / 4;
        std::snprintf(buf, sizeof(buf), "%.3g", xv);
        os << "<text x='" << m.px(xv) << "' y='" << fig.height - Mapper::kMargin + 16
           << "' text-anchor='middle' font-size='10'>" << buf << "</text>\n";
        std::snprintf(buf, sizeof(buf), "%.3g", yv);
        os << "<text x='" << Mapper::kMargin - 6 << "' y='" << m.py(yv) + 3
           << "' text-anchor='end' font-size='10'>" << buf << "</text>\n";
    }

    int legend_y = Mapper::kMargin;
    for (const auto& s : fig.series) {
        if (s.line && s.x.size() >= 2) {
            os << "<polyline fill='none' stroke='" << s.color << "' stroke-width='1.4' points='";
            for (size_t i = 0; i < s.x.size(); ++i)
                os << m.px(s.x[i]) << "," << m.py(s.y[i]) << " ";
            os << "'/>\n";
        }
        if (s.markers) {
            for (size_t i = 0; i < s.x.size(); ++i)
                os << "<circle cx='" << m.px(s.x[i]) << "' cy='" << m.py(s.y[i])
                   << "' r='2.4' fill='" << s.color << "'/>\n";
        }
        if (!s.label.empty()) {
            os << "<rect x='" << fig.width - Mapper::kMargin - 150 << "' y='" << legend_y - 8
               << "' width='12' height='3' fill='" << s.color << "'/>\n";
            os << "<text x='" << fig.width - Mapper::kMargin - 132 << "' y='" << legend_y
               << "' font-size='11'>" << s.label << "</text>\n";
            legend_y += 16;
        }
    }
    os << "</svg>\n";
    io::atomic_write(path, os.str());
}

void render_png(const Figure& fig, const std::string& path) {
    Mapper m = make_mapper(fig);
    const int W = fig.width, H = fig.height;
    std::vector<unsigned char> rgb(static_cast<size_t>(W) * H * 3, 255);
    auto put = [&](int x, int y, unsigned r, unsigned g, unsigned b) {
        if (x < 0 || x >= W || y < 0 || y >= H) return;
        size_t i = (static_cast<size_t>(y) * W + x) * 3;
        rgb[i] = static_cast<unsigned char>(r);
        rgb[i + 1] = static_cast<unsigned char>(g);
        rgb[i + 2] = static_cast<unsigned char>(b);
    };
    auto line = [&](double x0, double y0, double x1, double y1, unsigned r, unsigned g,
                    unsigned b) {
        int steps = static_cast<int>(std::max(std::abs(x1 - x0), std::abs(y1 - y0))) + 1;
        for (int i = 0; i <= steps; ++i) {
            double t = static_cast<double>(i) / steps;
            put(static_cast<int>(std::lround(x0 + t * (x1 - x0))),
                static_cast<int>(std::lround(y0 + t * (y1 - y0))), r, g, b);
        }
    };
    line(Mapper::kMargin, H - Mapper::kMargin, W - Mapper::kMargin, H - Mapper::kMargin, 0, 0, 0);
    line(Mapper::kMargin, Mapper::kMargin, Mapper::kMargin, H - Mapper::kMargin, 0, 0, 0);
    for (const auto& s : fig.series) {
        unsigned r = parse_hex(s.color, 0), g = parse_hex(s.color, 1), b = parse_hex(s.color, 2);
        if (s.line) {
            for (size_t i = 0; i + 1 < s.x.size(); ++i)
                line(m.px(s.x[i]), m.py(s.y[i]), m.px(s.x[i + 1]), m.py(s.y[i + 1]), r, g, b);
        }
        if (s.markers) {
            for (size_t i = 0; i < s.x.size(); ++i) {
                int cx = static_cast<int>(std::lround(m.px(s.x[i])));
                int cy = static_cast<int>(std::lround(m.py(s.y[i])));
                for (int dy = -1; dy <= 1; ++dy)
                    for (int dx = -1; dx <= 1; ++dx) put(cx + dx, cy + dy, r, g, b);
            }
        }
    }
    io::write_png_rgb(path, H, W, rgb);
}

void plot_signal(const phantom::SliceDataset& dataset, const std::string& base_path) {
    Figure fig;
    fig.title = "Breathing amplitude and acquisitions";
    fig.xlabel = "time [s]";
    fig.ylabel = "amplitude";
    Series curve;
    curve.label = "surrogate signal";
    for (const auto& [t, a] : dataset.signal.samples()) {
        curve.x.push_back(t);
        curve.y.push_back(a);
    }
    fig.series.push_back(std::move(curve));

    static const char* palette[] = {"#d1495b", "#3a7d44", "#8d5a97", "#c98a2b"};
    for (int p = 0; p < dataset.positions(); ++p) {
        Series dots;
        dots.line = false;
        dots.markers = true;
        dots.color = palette[p % 4];
        if (p == 0) dots.label = "acquired frames";
        for (const auto& s : dataset.groups[static_cast<size_t>(p)]) {
            dots.x.push_back(s.time);
            dots.y.push_back(s.amplitude);
        }
        fig.series.push_back(std::move(dots));
    }
    render_svg(fig, base_path + ".svg");
    render_png(fig, base_path + ".png");
}

void plot_metrics_csv(const std::string& csv_path, const std::string& base_path) {
    std::ifstream in(csv_path);
    if (!in) throw std::invalid_argument("cannot open metrics csv: " + csv_path);
    std::string header;
    std::getline(in, header);
    std::vector<std::string> cols;
    {
        std::stringstream ss(header);
        std::string c;
        while (std::getline(ss, c, ',')) cols.push_back(c);
    }
    std::vector<std::string> models;
    std::vector<std::vector<double>> values;  // [row][col-1]
    std::string row;
    while (std::getline(in, row)) {
        if (row.empty()) continue;
        std::stringstream ss(row);
        std::string cell;
        std::getline(ss, cell, ',');
        models.push_back(cell);
        std::vector<double> vals;
        while (std::getline(ss, cell, ',')) vals.push_back(cell.empty() ? 0.0 : std::stod(cell));
        values.push_back(std::move(vals));
    }

    Figure fig;
    fig.title = "Reconstruction metrics by model";
    fig.xlabel = "model index";
    fig.ylabel = "metric value";
    static const char* palette[] = {"#1f6fb2", "#d1495b", "#3a7d44", "#8d5a97",
                                    "#c98a2b", "#4a4e69"};
    for (size_t c = 1; c < cols.size(); ++c) {
        Series s;
        s.label = cols[c];
        s.color = palette[(c - 1) % 6];
        s.markers = true;
        for (size_t r = 0; r < values.size(); ++r) {
            if (c - 1 < values[r].size()) {
                s.x.push_back(static_cast<double>(r));
                s.y.push_back(values[r][c - 1]);
            }
        }
        fig.series.push_back(std::move(s));
    }
    render_svg(fig, base_path + ".svg");
    render_png(fig, base_path + ".png");
}

}  // namespace imitate::plot
