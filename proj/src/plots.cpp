#include "fesr/plots.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

namespace fesr {

namespace fs = std::filesystem;

namespace {

constexpr double kW = 640;
constexpr double kH = 360;
constexpr double kPad = 48;

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::stringstream ss(line);
    while (std::getline(ss, cell, ',')) {
        out.push_back(cell);
    }
    if (!line.empty() && line.back() == ',') {
        out.emplace_back();
    }
    return out;
}

std::string svg_open(const std::string& title) {
    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH << "\">\n"
       << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
       << "<text x=\"" << kW / 2 << "\" y=\"20\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\">"
       << title << "</text>\n"
       << "<line x1=\"" << kPad << "\" y1=\"" << kH - kPad << "\" x2=\"" << kW - kPad / 2 << "\" y2=\"" << kH - kPad
       << "\" stroke=\"black\"/>\n"
       << "<line x1=\"" << kPad << "\" y1=\"" << kPad / 2 << "\" x2=\"" << kPad << "\" y2=\"" << kH - kPad
       << "\" stroke=\"black\"/>\n";
    return os.str();
}

std::string label(double x, double y, const std::string& text, const char* anchor = "end") {
    std::ostringstream os;
    os << "<text x=\"" << x << "\" y=\"" << y << "\" text-anchor=\"" << anchor
       << "\" font-family=\"sans-serif\" font-size=\"10\">" << text << "</text>\n";
    return os.str();
}

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(4);
    os << v;
    return os.str();
}

}  // namespace

int MetricsTable::column(const std::string& name) const {
    auto it = std::find(columns.begin(), columns.end(), name);
    return it == columns.end() ? -1 : static_cast<int>(it - columns.begin());
}

MetricsTable read_metrics_csv(const fs::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw DataError("cannot read metrics file " + path.string());
    }
    std::string line;
    if (!std::getline(in, line) || line.empty()) {
        throw DataError("metrics file " + path.string() + " is empty");
    }
    const auto header = split_csv(line);
    if (header.size() < 3 || header[0] != "t" || header[1] != "stage") {
        throw DataError("metrics file " + path.string() + " lacks the `t,stage,...` header");
    }
    MetricsTable table;
    table.columns.push_back("t");
    table.columns.insert(table.columns.end(), header.begin() + 2, header.end());
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) {
            continue;
        }
        const auto cells = split_csv(line);
        if (cells.size() != header.size()) {
            throw DataError(path.string() + ":" + std::to_string(line_no) + ": expected " +
                            std::to_string(header.size()) + " cells, found " + std::to_string(cells.size()));
        }
        std::vector<std::optional<double>> row;
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i == 1) {
                continue;
            }
            if (cells[i].empty()) {
                row.emplace_back();
                continue;
            }
            double v = 0.0;
            const auto r = std::from_chars(cells[i].data(), cells[i].data() + cells[i].size(), v);
            if (r.ec != std::errc() || r.ptr != cells[i].data() + cells[i].size()) {
                throw DataError(path.string() + ":" + std::to_string(line_no) + ": bad number '" + cells[i] + "'");
            }
            row.emplace_back(v);
        }
        table.rows.push_back(std::move(row));
    }
    if (table.rows.empty()) {
        throw DataError("metrics file " + path.string() + " has no rows");
    }
    return table;
}

std::vector<fs::path> write_loss_curves(const MetricsTable& table, const fs::path& out_dir) {
    fs::create_directories(out_dir);
    std::vector<fs::path> written;
    for (const std::string name : {"L_G", "L_Dimg", "L_Dz", "L_R"}) {
        const int col = table.column(name);
        if (col < 0) {
            continue;
        }
        std::vector<std::pair<double, double>> pts;
        for (const auto& row : table.rows) {
            if (row[static_cast<std::size_t>(col)] && row[0]) {
                pts.emplace_back(*row[0], *row[static_cast<std::size_t>(col)]);
            }
        }
        if (pts.empty()) {
            continue;
        }
        double x0 = pts.front().first, x1 = pts.front().first;
        double y0 = pts.front().second, y1 = pts.front().second;
        for (auto [x, y] : pts) {
            x0 = std::min(x0, x);
            x1 = std::max(x1, x);
            y0 = std::min(y0, y);
            y1 = std::max(y1, y);
        }
        if (x1 == x0) x1 = x0 + 1;
        if (y1 == y0) y1 = y0 + 1;
        auto sx = [&](double x) { return kPad + (x - x0) / (x1 - x0) * (kW - 1.5 * kPad); };
        auto sy = [&](double y) { return kH - kPad - (y - y0) / (y1 - y0) * (kH - 1.5 * kPad); };

        std::ostringstream os;
        os << svg_open(name);
        os << "<polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"1\" points=\"";
        // thin very long runs to at most ~2000 vertices
        const std::size_t stride = std::max<std::size_t>(1, pts.size() / 2000);
        for (std::size_t i = 0; i < pts.size(); i += stride) {
            os << fmt(sx(pts[i].first)) << ',' << fmt(sy(pts[i].second)) << ' ';
        }
        os << "\"/>\n";
        os << label(kPad - 4, sy(y0) + 4, fmt(y0)) << label(kPad - 4, sy(y1) + 4, fmt(y1));
        os << label(sx(x0), kH - kPad + 14, fmt(x0), "middle") << label(sx(x1), kH - kPad + 14, fmt(x1), "middle");
        os << label(kW / 2, kH - 8, "iteration", "middle");
        os << "</svg>\n";

        const auto path = out_dir / ("loss_" + name + ".svg");
        std::ofstream(path, std::ios::binary) << os.str();
        written.push_back(path);
    }
    return written;
}

void write_accuracy_bars(const std::vector<EvalReport>& reports, const fs::path& path) {
    if (reports.empty()) {
        throw DataError("no evaluation reports to plot");
    }
    std::vector<std::string> order;
    std::map<std::string, std::vector<double>> groups;
    for (const auto& r : reports) {
        if (!groups.count(r.variant)) {
            order.push_back(r.variant);
        }
        groups[r.variant].push_back(r.accuracy_mean);
    }
    std::size_t widest = 1;
    for (const auto& [v, accs] : groups) {
        widest = std::max(widest, accs.size() + 1);
    }
    const double group_w = (kW - 1.5 * kPad) / static_cast<double>(order.size());
    const double bar_w = group_w * 0.8 / static_cast<double>(widest);
    auto sy = [&](double a) { return kH - kPad - a * (kH - 1.5 * kPad); };

    std::ostringstream os;
    os << svg_open("test accuracy by variant");
    for (double a : {0.0, 0.25, 0.5, 0.75, 1.0}) {
        os << label(kPad - 4, sy(a) + 4, fmt(a));
    }
    for (std::size_t g = 0; g < order.size(); ++g) {
        const auto& accs = groups[order[g]];
        const double gx = kPad + group_w * static_cast<double>(g) + group_w * 0.1;
        double mean = 0.0;
        for (std::size_t i = 0; i <= accs.size(); ++i) {
            const bool is_mean = i == accs.size();
            const double a = is_mean ? mean / static_cast<double>(accs.size()) : accs[i];
            if (!is_mean) {
                mean += a;
            }
            os << "<rect x=\"" << fmt(gx + bar_w * static_cast<double>(i)) << "\" y=\"" << fmt(sy(a))
               << "\" width=\"" << fmt(bar_w * 0.9) << "\" height=\"" << fmt(sy(0) - sy(a)) << "\" fill=\""
               << (is_mean ? "darkorange" : "steelblue") << "\"/>\n";
        }
        os << label(gx + group_w * 0.4, kH - kPad + 14, order[g], "middle");
        os << label(gx + group_w * 0.4, kH - kPad + 26, fmt(mean / static_cast<double>(accs.size())), "middle");
    }
    os << "</svg>\n";
    fs::create_directories(path.parent_path().empty() ? fs::path(".") : path.parent_path());
    std::ofstream(path, std::ios::binary) << os.str();
}

}  // namespace fesr
