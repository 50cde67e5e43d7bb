#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "disbelief/core/error.hpp"

namespace disbelief {

/// 12 significant digits, the precision every CSV artifact is written with.
inline std::string format_number(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}

struct CsvTable {
    std::vector<std::string> columns;
    std::vector<std::vector<std::string>> rows;

    void add_row(std::vector<std::string> row) {
        if (row.size() != columns.size())
            throw ShapeError("csv: row has " + std::to_string(row.size()) + " cells, header has " +
                             std::to_string(columns.size()));
        rows.push_back(std::move(row));
    }
};

inline std::string render_csv(const CsvTable& t) {
    std::ostringstream os;
    for (std::size_t i = 0; i < t.columns.size(); ++i) os << (i ? "," : "") << t.columns[i];
    os << '\n';
    for (const auto& r : t.rows) {
        for (std::size_t i = 0; i < r.size(); ++i) os << (i ? "," : "") << r[i];
        os << '\n';
    }
    return os.str();
}

/// Writes through a temporary sibling and renames, so a failed write leaves no partial file.
inline void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw IoError("cannot open " + path.string() + " for writing");
        os << text;
        os.flush();
        if (!os) throw IoError("write failed for " + path.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp, ec);
        throw IoError("cannot move " + tmp.string() + " into place");
    }
}

inline void write_csv(const std::filesystem::path& path, const CsvTable& t) {
    if (t.rows.empty()) throw ValueError("csv export: no data rows for " + path.string());
    write_text_atomic(path, render_csv(t));
}

inline CsvTable parse_csv(const std::string& text) {
    CsvTable t;
    std::istringstream is(text);
    std::string line;
    auto split = [](const std::string& l) {
        std::vector<std::string> cells;
        std::string cell;
        std::istringstream ls(l);
        while (std::getline(ls, cell, ',')) cells.push_back(cell);
        if (!l.empty() && l.back() == ',') cells.emplace_back();
        return cells;
    };
    if (!std::getline(is, line)) throw ParseError("csv: missing header");
    t.columns = split(line);
    std::size_t n = 1;
    while (std::getline(is, line)) {
        ++n;
        if (line.empty()) continue;
        auto cells = split(line);
        if (cells.size() != t.columns.size()) throw ParseError("csv: line " + std::to_string(n) + " has the wrong cell count");
        t.rows.push_back(std::move(cells));
    }
    return t;
}

inline CsvTable read_csv(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open " + path.string());
    std::ostringstream ss;
    ss << is.rdbuf();
    return parse_csv(ss.str());
}

struct LearningCurveRow {
    double frames = 0;
    std::uint64_t seed = 0;
    std::string variant;
    double beta = 0;
    std::size_t episode = 0; ///< 1-based episode index within the meta-episode
    double return_mean = 0;
    double return_std = 0;
};

inline CsvTable learning_curve_table(const std::vector<LearningCurveRow>& rows) {
    CsvTable t{{"frames", "seed", "variant", "beta", "episode", "return_mean", "return_std"}, {}};
    for (const auto& r : rows)
        t.add_row({format_number(r.frames), std::to_string(r.seed), r.variant, format_number(r.beta),
                   std::to_string(r.episode), format_number(r.return_mean), format_number(r.return_std)});
    return t;
}

struct ProbeRow {
    std::string feature;
    double beta = 0;
    std::size_t d_s = 0;
    std::size_t d_z = 0;
    double accuracy = 0;
    double z_kl = 0;
};

inline CsvTable probe_table(const std::vector<ProbeRow>& rows) {
    CsvTable t{{"feature", "beta", "d_s", "d_z", "accuracy", "z_kl"}, {}};
    for (const auto& r : rows)
        t.add_row({r.feature, format_number(r.beta), std::to_string(r.d_s), std::to_string(r.d_z),
                   format_number(r.accuracy), format_number(r.z_kl)});
    return t;
}

struct PlotSeries {
    std::string name;
    std::vector<double> x;
    std::vector<double> y;
};

struct PlotSpec {
    std::string title;
    std::string x_label;
    std::string y_label;
    std::vector<PlotSeries> series;
    std::vector<double> vertical_markers; ///< e.g. episode boundaries
};

namespace detail {

inline std::string xml_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '&': out += "&amp;"; break;
        case '"': out += "&quot;"; break;
        default: out += c;
        }
    }
    return out;
}

inline std::string coord(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

/// Round tick spacing covering [lo, hi] with about five intervals.
inline double tick_step(double lo, double hi) {
    const double raw = (hi - lo) / 5.0;
    const double mag = std::pow(10.0, std::floor(std::log10(raw)));
    for (double m : {1.0, 2.0, 5.0, 10.0})
        if (raw <= m * mag) return m * mag;
    return 10.0 * mag;
}

} // namespace detail

inline std::string render_svg(const PlotSpec& spec) {
    if (spec.series.empty()) throw ValueError("svg export: no series");
    double xmin = INFINITY, xmax = -INFINITY, ymin = INFINITY, ymax = -INFINITY;
    for (const auto& s : spec.series) {
        if (s.x.empty() || s.x.size() != s.y.size())
            throw ValueError("svg export: series '" + s.name + "' is empty or has mismatched x/y lengths");
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i]))
                throw ValueError("svg export: series '" + s.name + "' has a non-finite point");
            xmin = std::min(xmin, s.x[i]);
            xmax = std::max(xmax, s.x[i]);
            ymin = std::min(ymin, s.y[i]);
            ymax = std::max(ymax, s.y[i]);
        }
    }
    if (xmax == xmin) xmax = xmin + 1;
    if (ymax == ymin) {
        ymin -= 0.5;
        ymax += 0.5;
    }
    const double pad = 0.05 * (ymax - ymin);
    ymin -= pad;
    ymax += pad;

    const double W = 720, H = 440, L = 70, R = 170, Tp = 40, B = 60;
    const double pw = W - L - R, ph = H - Tp - B;
    auto px = [&](double x) { return L + (x - xmin) / (xmax - xmin) * pw; };
    auto py = [&](double y) { return Tp + (1.0 - (y - ymin) / (ymax - ymin)) * ph; };
    static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};

    using detail::coord;
    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" viewBox=\"0 0 " << W
       << ' ' << H << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    os << "<text x=\"" << coord(W / 2) << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">"
       << detail::xml_escape(spec.title) << "</text>\n";
    os << "<line x1=\"" << coord(L) << "\" y1=\"" << coord(Tp + ph) << "\" x2=\"" << coord(L + pw) << "\" y2=\""
       << coord(Tp + ph) << "\" stroke=\"black\"/>\n";
    os << "<line x1=\"" << coord(L) << "\" y1=\"" << coord(Tp) << "\" x2=\"" << coord(L) << "\" y2=\"" << coord(Tp + ph)
       << "\" stroke=\"black\"/>\n";
    const double xs = detail::tick_step(xmin, xmax), ys = detail::tick_step(ymin, ymax);
    for (double v = std::ceil(xmin / xs) * xs; v <= xmax + 1e-9 * xs; v += xs) {
        os << "<line x1=\"" << coord(px(v)) << "\" y1=\"" << coord(Tp + ph) << "\" x2=\"" << coord(px(v)) << "\" y2=\""
           << coord(Tp + ph + 5) << "\" stroke=\"black\"/>";
        os << "<text x=\"" << coord(px(v)) << "\" y=\"" << coord(Tp + ph + 19) << "\" text-anchor=\"middle\">"
           << format_number(std::abs(v) < 1e-12 * xs ? 0.0 : v) << "</text>\n";
    }
    for (double v = std::ceil(ymin / ys) * ys; v <= ymax + 1e-9 * ys; v += ys) {
        os << "<line x1=\"" << coord(L - 5) << "\" y1=\"" << coord(py(v)) << "\" x2=\"" << coord(L) << "\" y2=\""
           << coord(py(v)) << "\" stroke=\"black\"/>";
        os << "<text x=\"" << coord(L - 8) << "\" y=\"" << coord(py(v) + 4) << "\" text-anchor=\"end\">"
           << format_number(std::abs(v) < 1e-12 * ys ? 0.0 : v) << "</text>\n";
    }
    for (double m : spec.vertical_markers) {
        if (m < xmin || m > xmax) continue;
        os << "<line x1=\"" << coord(px(m)) << "\" y1=\"" << coord(Tp) << "\" x2=\"" << coord(px(m)) << "\" y2=\""
           << coord(Tp + ph) << "\" stroke=\"#999\" stroke-dasharray=\"4 3\"/>\n";
    }
    os << "<text x=\"" << coord(L + pw / 2) << "\" y=\"" << coord(H - 15) << "\" text-anchor=\"middle\">"
       << detail::xml_escape(spec.x_label) << "</text>\n";
    os << "<text transform=\"translate(18 " << coord(Tp + ph / 2) << ") rotate(-90)\" text-anchor=\"middle\">"
       << detail::xml_escape(spec.y_label) << "</text>\n";
    for (std::size_t k = 0; k < spec.series.size(); ++k) {
        const auto& s = spec.series[k];
        const char* color = palette[k % 8];
        os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.8\" points=\"";
        for (std::size_t i = 0; i < s.x.size(); ++i) os << (i ? " " : "") << coord(px(s.x[i])) << ',' << coord(py(s.y[i]));
        os << "\"/>\n";
        const double ly = Tp + 10 + 20.0 * static_cast<double>(k);
        os << "<line x1=\"" << coord(L + pw + 15) << "\" y1=\"" << coord(ly) << "\" x2=\"" << coord(L + pw + 40)
           << "\" y2=\"" << coord(ly) << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>";
        os << "<text x=\"" << coord(L + pw + 46) << "\" y=\"" << coord(ly + 4) << "\">" << detail::xml_escape(s.name)
           << "</text>\n";
    }
    os << "</svg>\n";
    return os.str();
}

inline void write_svg(const std::filesystem::path& path, const PlotSpec& spec) {
    write_text_atomic(path, render_svg(spec));
}

} // namespace disbelief
