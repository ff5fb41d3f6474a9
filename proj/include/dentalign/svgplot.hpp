#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "dentalign/errors.hpp"

namespace dentalign {

enum class PlotKind { kLossCurve, kScaleCurve, kGroupBars };

inline PlotKind parse_plot_kind(const std::string& s) {
    if (s == "loss-curve") return PlotKind::kLossCurve;
    if (s == "scale-curve") return PlotKind::kScaleCurve;
    if (s == "group-bars") return PlotKind::kGroupBars;
    throw ConfigError("plot kind must be loss-curve, scale-curve or group-bars, got '" + s + "'");
}

namespace detail {

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};

inline CsvTable parse_csv(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw FormatError("cannot open " + path);
    CsvTable table;
    std::string line;
    std::size_t line_no = 0;
    auto split = [](const std::string& l) {
        std::vector<std::string> cells;
        std::string cell;
        std::istringstream ss(l);
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (!l.empty() && l.back() == ',') cells.push_back("");
        return cells;
    };
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto cells = split(line);
        if (table.header.empty()) {
            table.header = std::move(cells);
            continue;
        }
        if (cells.size() != table.header.size()) {
            throw FormatError(path + " line " + std::to_string(line_no) + ": expected " +
                              std::to_string(table.header.size()) + " columns, found " +
                              std::to_string(cells.size()));
        }
        table.rows.push_back(std::move(cells));
    }
    if (table.header.empty()) throw FormatError(path + ": missing header row");
    if (table.rows.empty()) throw FormatError(path + ": no data rows");
    return table;
}

inline double parse_number(const CsvTable&, const std::string& cell, const std::string& path,
                           std::size_t row) {
    char* end = nullptr;
    const double v = std::strtod(cell.c_str(), &end);
    if (end == cell.c_str() || *end != '\0' || !std::isfinite(v)) {
        throw FormatError(path + " line " + std::to_string(row + 2) + ": '" + cell + "' is not a number");
    }
    return v;
}

inline std::string fmt(double v) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.3f", v);
    return buf;
}

constexpr int kWidth = 640, kHeight = 400;
constexpr int kMarginL = 56, kMarginR = 16, kMarginT = 20, kMarginB = 40;

struct Mapper {
    double x0, x1, y0, y1;
    double px(double x) const {
        const double denom = x1 == x0 ? 1.0 : x1 - x0;
        return kMarginL + (x - x0) / denom * (kWidth - kMarginL - kMarginR);
    }
    double py(double y) const {
        const double denom = y1 == y0 ? 1.0 : y1 - y0;
        return kHeight - kMarginB - (y - y0) / denom * (kHeight - kMarginT - kMarginB);
    }
};

inline const char* series_color(std::size_t i) {
    static const char* kColors[] = {"#2166ac", "#b2182b", "#1b7837", "#762a83", "#e08214", "#35978f"};
    return kColors[i % 6];
}

inline void svg_open(std::ostringstream& os) {
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
       << "\" viewBox=\"0 0 " << kWidth << " " << kHeight << "\">\n"
       << "<rect width=\"" << kWidth << "\" height=\"" << kHeight << "\" fill=\"white\"/>\n";
}

inline void svg_axes(std::ostringstream& os, const Mapper& m, const std::string& x_label,
                     const std::string& y_label) {
    os << "<line x1=\"" << kMarginL << "\" y1=\"" << kHeight - kMarginB << "\" x2=\"" << kWidth - kMarginR
       << "\" y2=\"" << kHeight - kMarginB << "\" stroke=\"black\"/>\n";
    os << "<line x1=\"" << kMarginL << "\" y1=\"" << kMarginT << "\" x2=\"" << kMarginL << "\" y2=\""
       << kHeight - kMarginB << "\" stroke=\"black\"/>\n";
    os << "<text x=\"" << (kWidth / 2) << "\" y=\"" << (kHeight - 8)
       << "\" font-size=\"12\" text-anchor=\"middle\">" << x_label << "</text>\n";
    os << "<text x=\"14\" y=\"" << (kHeight / 2)
       << "\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 14 " << (kHeight / 2)
       << ")\">" << y_label << "</text>\n";
    os << "<text x=\"" << kMarginL << "\" y=\"" << (kHeight - kMarginB + 16)
       << "\" font-size=\"10\" text-anchor=\"middle\">" << fmt(m.x0) << "</text>\n";
    os << "<text x=\"" << (kWidth - kMarginR) << "\" y=\"" << (kHeight - kMarginB + 16)
       << "\" font-size=\"10\" text-anchor=\"middle\">" << fmt(m.x1) << "</text>\n";
    os << "<text x=\"" << (kMarginL - 6) << "\" y=\"" << (kHeight - kMarginB + 4)
       << "\" font-size=\"10\" text-anchor=\"end\">" << fmt(m.y0) << "</text>\n";
    os << "<text x=\"" << (kMarginL - 6) << "\" y=\"" << (kMarginT + 4)
       << "\" font-size=\"10\" text-anchor=\"end\">" << fmt(m.y1) << "</text>\n";
}

}  // namespace detail

// Deterministic SVG (no timestamps): first column is x, every other column
// becomes one series; group-bars treats rows as labeled bars of the `mean`
// column with whiskers when ci columns are present.
inline void emit_plot(const std::string& csv_path, PlotKind kind, const std::string& out_path) {
    using namespace detail;
    CsvTable table = parse_csv(csv_path);
    std::ostringstream os;
    svg_open(os);

    if (kind == PlotKind::kLossCurve || kind == PlotKind::kScaleCurve) {
        if (table.header.size() < 2) throw FormatError(csv_path + ": need at least two columns");
        const std::size_t rows = table.rows.size();
        std::vector<double> xs(rows);
        std::vector<std::vector<double>> series(table.header.size() - 1, std::vector<double>(rows));
        for (std::size_t r = 0; r < rows; ++r) {
            xs[r] = parse_number(table, table.rows[r][0], csv_path, r);
            for (std::size_t c = 1; c < table.header.size(); ++c) {
                series[c - 1][r] = parse_number(table, table.rows[r][c], csv_path, r);
            }
        }
        Mapper m{};
        m.x0 = *std::min_element(xs.begin(), xs.end());
        m.x1 = *std::max_element(xs.begin(), xs.end());
        m.y0 = series[0][0];
        m.y1 = series[0][0];
        for (const auto& s : series) {
            for (double v : s) {
                m.y0 = std::min(m.y0, v);
                m.y1 = std::max(m.y1, v);
            }
        }
        svg_axes(os, m, table.header[0], table.header.size() == 2 ? table.header[1] : "value");
        for (std::size_t s = 0; s < series.size(); ++s) {
            os << "<polyline fill=\"none\" stroke=\"" << series_color(s) << "\" stroke-width=\"1.5\" points=\"";
            for (std::size_t r = 0; r < rows; ++r) {
                if (r) os << " ";
                os << fmt(m.px(xs[r])) << "," << fmt(m.py(series[s][r]));
            }
            os << "\"/>\n";
            if (kind == PlotKind::kScaleCurve) {
                for (std::size_t r = 0; r < rows; ++r) {
                    os << "<circle cx=\"" << fmt(m.px(xs[r])) << "\" cy=\"" << fmt(m.py(series[s][r]))
                       << "\" r=\"3\" fill=\"" << series_color(s) << "\"/>\n";
                }
            }
            os << "<text x=\"" << (kWidth - kMarginR - 4) << "\" y=\"" << (kMarginT + 14 * (s + 1))
               << "\" font-size=\"11\" text-anchor=\"end\" fill=\"" << series_color(s) << "\">"
               << table.header[s + 1] << "</text>\n";
        }
    } else {
        // group-bars: label column + mean column (+ optional ci_low/ci_high)
        auto col_of = [&](const std::string& name) -> std::ptrdiff_t {
            auto it = std::find(table.header.begin(), table.header.end(), name);
            return it == table.header.end() ? -1 : it - table.header.begin();
        };
        const auto mean_col = col_of("mean");
        const auto lo_col = col_of("ci_low");
        const auto hi_col = col_of("ci_high");
        if (mean_col < 0) throw FormatError(csv_path + ": group-bars needs a 'mean' column");

        const std::size_t rows = table.rows.size();
        std::vector<double> means(rows);
        double ymax = 0;
        for (std::size_t r = 0; r < rows; ++r) {
            means[r] = parse_number(table, table.rows[r][static_cast<std::size_t>(mean_col)], csv_path, r);
            ymax = std::max(ymax, means[r]);
            if (hi_col >= 0) {
                ymax = std::max(ymax, parse_number(table, table.rows[r][static_cast<std::size_t>(hi_col)],
                                                   csv_path, r));
            }
        }
        Mapper m{0.0, static_cast<double>(rows), 0.0, ymax <= 0 ? 1.0 : ymax};
        svg_axes(os, m, table.header[0], "mean");
        const double band = (kWidth - kMarginL - kMarginR) / static_cast<double>(rows);
        for (std::size_t r = 0; r < rows; ++r) {
            const double x = kMarginL + band * (static_cast<double>(r) + 0.2);
            const double w = band * 0.6;
            const double y = m.py(means[r]);
            os << "<rect x=\"" << fmt(x) << "\" y=\"" << fmt(y) << "\" width=\"" << fmt(w) << "\" height=\""
               << fmt(kHeight - kMarginB - y) << "\" fill=\"" << series_color(0) << "\"/>\n";
            if (lo_col >= 0 && hi_col >= 0) {
                const double lo = m.py(std::max(
                    0.0, parse_number(table, table.rows[r][static_cast<std::size_t>(lo_col)], csv_path, r)));
                const double hi = m.py(parse_number(table, table.rows[r][static_cast<std::size_t>(hi_col)],
                                                    csv_path, r));
                const double cx = x + w / 2;
                os << "<line x1=\"" << fmt(cx) << "\" y1=\"" << fmt(lo) << "\" x2=\"" << fmt(cx)
                   << "\" y2=\"" << fmt(hi) << "\" stroke=\"black\"/>\n";
            }
            os << "<text x=\"" << fmt(x + w / 2) << "\" y=\"" << (kHeight - kMarginB + 16)
               << "\" font-size=\"9\" text-anchor=\"middle\">" << table.rows[r][0] << "</text>\n";
        }
    }

    os << "</svg>\n";
    std::ofstream of(out_path, std::ios::binary);
    if (!of) throw FormatError("cannot open " + out_path + " for writing");
    const std::string body = os.str();
    of.write(body.data(), static_cast<std::streamsize>(body.size()));
}

}  // namespace dentalign
