#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "common.hpp"

namespace mvfluct {

struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;

    std::size_t col(const std::string& name) const {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return i;
        throw InvalidInput("Table: no column '" + name + "'");
    }
    std::vector<double> column(const std::string& name) const {
        const std::size_t c = col(name);
        std::vector<double> out;
        out.reserve(rows.size());
        for (const auto& r : rows) out.push_back(r[c]);
        return out;
    }
};

inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return buf;
}

inline void write_csv(const std::filesystem::path& path, const Table& t) {
    std::ofstream os(path);
    if (!os) throw InvalidInput("write_csv: cannot open " + path.string());
    for (std::size_t i = 0; i < t.header.size(); ++i)
        os << (i ? "," : "") << t.header[i];
    os << "\n";
    for (const auto& r : t.rows) {
        for (std::size_t i = 0; i < r.size(); ++i)
            os << (i ? "," : "") << format_double(r[i]);
        os << "\n";
    }
}

inline Table read_csv(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw InvalidInput("read_csv: cannot open " + path.string());
    Table t;
    std::string line;
    bool first = true;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        if (first) {
            while (std::getline(ss, cell, ',')) t.header.push_back(cell);
            first = false;
        } else {
            std::vector<double> row;
            while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
            t.rows.push_back(std::move(row));
        }
    }
    return t;
}

// ---------------------------------------------------------------------------
// Minimal SVG line plots, no dependencies.
// ---------------------------------------------------------------------------

struct PlotSeries {
    std::string name;
    std::vector<double> x, y;
    bool points = true;
};

struct PlotSpec {
    std::string title, xlabel, ylabel;
    bool logx = false, logy = false;
    std::vector<PlotSeries> series;
};

namespace detail {
inline const char* plot_color(std::size_t i) {
    static const char* palette[] = {"#1f6fb2", "#d1495b", "#3e8e5a", "#8a5fb0",
                                    "#c78a2d", "#4aa3a3", "#7a6a5d", "#b0486e"};
    return palette[i % 8];
}
} // namespace detail

inline void svg_line_plot(const std::filesystem::path& path, const PlotSpec& spec) {
    const double W = 840, H = 540;
    const double ml = 80, mr = 170, mt = 50, mb = 60;
    double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
    for (const auto& s : spec.series)
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            double xv = s.x[i], yv = s.y[i];
            if (spec.logx) { if (xv <= 0) continue; xv = std::log10(xv); }
            if (spec.logy) { if (yv <= 0) continue; yv = std::log10(yv); }
            xmin = std::min(xmin, xv); xmax = std::max(xmax, xv);
            ymin = std::min(ymin, yv); ymax = std::max(ymax, yv);
        }
    if (xmin > xmax) { xmin = 0; xmax = 1; }
    if (ymin > ymax) { ymin = 0; ymax = 1; }
    if (xmax - xmin < 1e-12) { xmin -= 0.5; xmax += 0.5; }
    if (ymax - ymin < 1e-12) { ymin -= 0.5; ymax += 0.5; }
    const double xpad = 0.04 * (xmax - xmin), ypad = 0.06 * (ymax - ymin);
    xmin -= xpad; xmax += xpad; ymin -= ypad; ymax += ypad;
    auto px = [&](double v) {
        if (spec.logx) v = std::log10(v);
        return ml + (v - xmin) / (xmax - xmin) * (W - ml - mr);
    };
    auto py = [&](double v) {
        if (spec.logy) v = std::log10(v);
        return H - mb - (v - ymin) / (ymax - ymin) * (H - mt - mb);
    };

    std::ofstream os(path);
    if (!os) throw InvalidInput("svg_line_plot: cannot open " + path.string());
    os << "<svg xmlns='http://www.w3.org/2000/svg' width='" << W << "' height='" << H
       << "' viewBox='0 0 " << W << " " << H << "'>\n";
    os << "<rect width='100%' height='100%' fill='white'/>\n";
    os << "<text x='" << W / 2 << "' y='28' text-anchor='middle' font-size='17' "
          "font-family='sans-serif'>" << spec.title << "</text>\n";

    // axes box
    os << "<rect x='" << ml << "' y='" << mt << "' width='" << (W - ml - mr)
       << "' height='" << (H - mt - mb)
       << "' fill='none' stroke='#444' stroke-width='1'/>\n";

    // ticks: 6 per axis in screen space, labeled in data space
    for (int k = 0; k <= 5; ++k) {
        const double fx = xmin + (xmax - xmin) * k / 5.0;
        const double fy = ymin + (ymax - ymin) * k / 5.0;
        const double sx = ml + (W - ml - mr) * k / 5.0;
        const double sy = H - mb - (H - mt - mb) * k / 5.0;
        const double lx = spec.logx ? std::pow(10.0, fx) : fx;
        const double ly = spec.logy ? std::pow(10.0, fy) : fy;
        char bx[32], by[32];
        std::snprintf(bx, sizeof(bx), "%.3g", lx);
        std::snprintf(by, sizeof(by), "%.3g", ly);
        os << "<line x1='" << sx << "' y1='" << (H - mb) << "' x2='" << sx << "' y2='"
           << (H - mb + 5) << "' stroke='#444'/>\n";
        os << "<text x='" << sx << "' y='" << (H - mb + 20)
           << "' text-anchor='middle' font-size='12' font-family='sans-serif'>" << bx
           << "</text>\n";
        os << "<line x1='" << (ml - 5) << "' y1='" << sy << "' x2='" << ml << "' y2='" << sy
           << "' stroke='#444'/>\n";
        os << "<text x='" << (ml - 9) << "' y='" << (sy + 4)
           << "' text-anchor='end' font-size='12' font-family='sans-serif'>" << by
           << "</text>\n";
    }
    os << "<text x='" << (ml + (W - ml - mr) / 2) << "' y='" << (H - 15)
       << "' text-anchor='middle' font-size='14' font-family='sans-serif'>" << spec.xlabel
       << "</text>\n";
    os << "<text x='22' y='" << (mt + (H - mt - mb) / 2)
       << "' text-anchor='middle' font-size='14' font-family='sans-serif' transform='rotate(-90 22 "
       << (mt + (H - mt - mb) / 2) << ")'>" << spec.ylabel << "</text>\n";

    for (std::size_t si = 0; si < spec.series.size(); ++si) {
        const auto& s = spec.series[si];
        const char* color = detail::plot_color(si);
        std::ostringstream pts;
        bool any = false;
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            if ((spec.logx && s.x[i] <= 0) || (spec.logy && s.y[i] <= 0)) continue;
            pts << px(s.x[i]) << "," << py(s.y[i]) << " ";
            any = true;
        }
        if (!any) continue;
        os << "<polyline points='" << pts.str() << "' fill='none' stroke='" << color
           << "' stroke-width='1.8'/>\n";
        if (s.points)
            for (std::size_t i = 0; i < s.x.size(); ++i) {
                if ((spec.logx && s.x[i] <= 0) || (spec.logy && s.y[i] <= 0)) continue;
                os << "<circle cx='" << px(s.x[i]) << "' cy='" << py(s.y[i])
                   << "' r='3' fill='" << color << "'/>\n";
            }
        const double lyy = mt + 18.0 + 20.0 * double(si);
        os << "<line x1='" << (W - mr + 12) << "' y1='" << lyy << "' x2='" << (W - mr + 36)
           << "' y2='" << lyy << "' stroke='" << color << "' stroke-width='2'/>\n";
        os << "<text x='" << (W - mr + 42) << "' y='" << (lyy + 4)
           << "' font-size='12' font-family='sans-serif'>" << s.name << "</text>\n";
    }
    os << "</svg>\n";
}

} // namespace mvfluct
