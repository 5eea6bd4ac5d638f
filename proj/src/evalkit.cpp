#include "asrl/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include "asrl/datapipe.hpp"
#include "asrl/errors.hpp"
#include "json.hpp"

namespace asrl {

double l1_metric(const Tensor& generated, const Tensor& z) {
    Tensor down = downsample_4x(generated);
    if (!down.same_shape(z))
        throw ShapeError("l1_metric: downscaled output " + shape_str(down.shape()) +
                         " does not match input " + shape_str(z.shape()));
    double acc = 0.0;
    for (std::size_t i = 0; i < down.size(); ++i) acc += std::fabs(down[i] - z[i]);
    return acc / static_cast<double>(down.size());
}

double psnr(const Tensor& a, const Tensor& b, double max_val) {
    if (!a.same_shape(b))
        throw ShapeError("psnr: shapes " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    double mse = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        mse += d * d;
    }
    mse /= static_cast<double>(a.size());
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(max_val * max_val / mse);
}

double w1_exact_1d(std::vector<double> a, std::vector<double> b) {
    if (a.empty() || b.empty()) throw ShapeError("w1_exact_1d: empty sample set");
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    const std::size_t m = a.size(), n = b.size();
    double acc = 0.0;
    if (m == n) {
        for (std::size_t i = 0; i < n; ++i) acc += std::fabs(a[i] - b[i]);
        return acc / static_cast<double>(n);
    }
    // Unequal weights: both quantile functions are constant on each interval
    // [k/(m*n), (k+1)/(m*n)), so the integral is a mean over m*n cells.
    for (std::size_t k = 0; k < m * n; ++k) acc += std::fabs(a[k / n] - b[k / m]);
    return acc / static_cast<double>(m * n);
}

double duplicate_rate(const Tensor& images, double tau) {
    if (tau <= 0.0) throw ConfigError("duplicate_rate: tau must be positive");
    if (images.rank() < 2 || images.dim(0) < 2)
        throw ShapeError("duplicate_rate: want a batch of at least 2, got " +
                         shape_str(images.shape()));
    const std::size_t b = images.dim(0);
    const std::size_t px = images.size() / b;
    std::size_t close = 0;
    for (std::size_t i = 0; i < b; ++i) {
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < b; ++j) {
            if (j == i) continue;
            double d = 0.0;
            const double* pi = images.data() + i * px;
            const double* pj = images.data() + j * px;
            for (std::size_t p = 0; p < px; ++p) d += std::fabs(pi[p] - pj[p]);
            best = std::min(best, d / static_cast<double>(px));
        }
        if (best < tau) ++close;
    }
    return static_cast<double>(close) / static_cast<double>(b);
}

std::vector<double> moving_average(const std::vector<double>& series, std::size_t window) {
    if (window < 1) throw ConfigError("moving_average: window must be >= 1");
    if (series.empty()) throw ShapeError("moving_average: empty series");
    std::vector<double> out(series.size());
    for (std::size_t i = 0; i < series.size(); ++i) {
        const std::size_t lo = i + 1 >= window ? i + 1 - window : 0;
        double acc = 0.0;
        for (std::size_t k = lo; k <= i; ++k) acc += series[k];
        out[i] = acc / static_cast<double>(i - lo + 1);
    }
    return out;
}

void emit_grid(const std::vector<std::vector<Tensor>>& rows, const std::string& path) {
    if (rows.empty() || rows[0].empty()) throw ShapeError("emit_grid: no images");
    const std::size_t cols = rows[0].size();
    const Tensor& first = rows[0][0];
    if (first.rank() != 3 || first.dim(0) != 3)
        throw ShapeError("emit_grid: tiles must be [3,h,w], got " + shape_str(first.shape()));
    const std::size_t th = first.dim(1), tw = first.dim(2);
    for (const auto& row : rows) {
        if (row.size() != cols) throw ShapeError("emit_grid: ragged rows");
        for (const auto& t : row)
            if (!t.same_shape(first))
                throw ShapeError("emit_grid: mixed tile shapes " + shape_str(t.shape()) +
                                 " vs " + shape_str(first.shape()));
    }
    Image mosaic;
    mosaic.height = rows.size() * th;
    mosaic.width = cols * tw;
    mosaic.rgb.assign(3 * mosaic.height * mosaic.width, 0);
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (std::size_t c = 0; c < cols; ++c) {
            Image tile = tensor_to_image(rows[r][c]);
            for (std::size_t y = 0; y < th; ++y) {
                unsigned char* dst =
                    mosaic.rgb.data() + 3 * ((r * th + y) * mosaic.width + c * tw);
                std::copy_n(tile.rgb.data() + 3 * y * tw, 3 * tw, dst);
            }
        }
    write_png(path, mosaic);
}

namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

void svg_panel(std::string& out, double ox, const char* title, const char* color,
               const std::vector<double>& xs, const std::vector<double>& ys) {
    const double w = 340, h = 240, oy = 30;
    double ymin = ys[0], ymax = ys[0];
    for (double v : ys) {
        ymin = std::min(ymin, v);
        ymax = std::max(ymax, v);
    }
    if (ymin == ymax) {
        ymin -= 0.5;
        ymax += 0.5;
    }
    const double xmin = xs.front(), xmax = xs.back();
    const double xspan = xmax > xmin ? xmax - xmin : 1.0;
    out += "<line x1=\"" + fmt(ox) + "\" y1=\"" + fmt(oy) + "\" x2=\"" + fmt(ox) + "\" y2=\"" +
           fmt(oy + h) + "\" stroke=\"#444\"/>\n";
    out += "<line x1=\"" + fmt(ox) + "\" y1=\"" + fmt(oy + h) + "\" x2=\"" + fmt(ox + w) +
           "\" y2=\"" + fmt(oy + h) + "\" stroke=\"#444\"/>\n";
    out += "<path fill=\"none\" stroke=\"" + std::string(color) + "\" stroke-width=\"1.5\" d=\"";
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double px = ox + (xs[i] - xmin) / xspan * w;
        const double py = oy + h - (ys[i] - ymin) / (ymax - ymin) * h;
        out += (i == 0 ? "M" : " L") + std::string(" ") + fmt(px) + " " + fmt(py);
    }
    out += "\"/>\n";
    out += "<text x=\"" + fmt(ox + w / 2) + "\" y=\"20\" text-anchor=\"middle\" "
           "font-family=\"sans-serif\" font-size=\"14\">" + std::string(title) + "</text>\n";
    out += "<text x=\"" + fmt(ox) + "\" y=\"" + fmt(oy + h + 16) +
           "\" font-family=\"sans-serif\" font-size=\"11\">" + fmt(xmin) + "</text>\n";
    out += "<text x=\"" + fmt(ox + w) + "\" y=\"" + fmt(oy + h + 16) +
           "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" + fmt(xmax) +
           "</text>\n";
    out += "<text x=\"" + fmt(ox + 4) + "\" y=\"" + fmt(oy + 12) +
           "\" font-family=\"sans-serif\" font-size=\"11\">" + fmt(ymax) + "</text>\n";
    out += "<text x=\"" + fmt(ox + 4) + "\" y=\"" + fmt(oy + h - 4) +
           "\" font-family=\"sans-serif\" font-size=\"11\">" + fmt(ymin) + "</text>\n";
}

}  // namespace

void emit_curves(const std::vector<TrainRecord>& records, const std::string& path) {
    if (records.empty()) throw ConfigError("emit_curves: no records");
    std::vector<double> xs, l1, jd, jg;
    for (const auto& r : records) {
        xs.push_back(static_cast<double>(r.g_iter));
        l1.push_back(r.l1_metric);
        jd.push_back(r.j_d);
        jg.push_back(r.j_g);
    }
    std::string out =
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"1160\" height=\"300\" "
        "viewBox=\"0 0 1160 300\">\n<rect width=\"1160\" height=\"300\" fill=\"white\"/>\n";
    svg_panel(out, 30, "l1_metric", "#2ca02c", xs, moving_average(l1));
    svg_panel(out, 420, "j_d", "#1f77b4", xs, moving_average(jd));
    svg_panel(out, 810, "j_g", "#d62728", xs, moving_average(jg));
    out += "</svg>\n";
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("emit_curves: cannot open " + path);
    os << out;
    if (!os) throw IoError("emit_curves: write failed for " + path);
}

void emit_w1_plot(const std::vector<std::array<double, 3>>& rows, const std::string& path) {
    if (rows.empty()) throw ConfigError("emit_w1_plot: no rows");
    const double w = 340, h = 240, ox = 40, oy = 30;
    double ymin = 0.0, ymax = 0.0, xmin = rows.front()[0], xmax = rows.back()[0];
    for (const auto& r : rows) {
        ymax = std::max({ymax, r[1], r[2]});
        ymin = std::min({ymin, r[1], r[2]});
    }
    if (ymin == ymax) ymax += 1.0;
    const double xspan = xmax > xmin ? xmax - xmin : 1.0;
    std::string out =
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"420\" height=\"300\" "
        "viewBox=\"0 0 420 300\">\n<rect width=\"420\" height=\"300\" fill=\"white\"/>\n";
    out += "<line x1=\"" + fmt(ox) + "\" y1=\"" + fmt(oy) + "\" x2=\"" + fmt(ox) + "\" y2=\"" +
           fmt(oy + h) + "\" stroke=\"#444\"/>\n";
    out += "<line x1=\"" + fmt(ox) + "\" y1=\"" + fmt(oy + h) + "\" x2=\"" + fmt(ox + w) +
           "\" y2=\"" + fmt(oy + h) + "\" stroke=\"#444\"/>\n";
    auto polyline = [&](std::size_t col, const char* color) {
        out += "<path fill=\"none\" stroke=\"" + std::string(color) +
               "\" stroke-width=\"1.5\" d=\"";
        for (std::size_t i = 0; i < rows.size(); ++i) {
            const double px = ox + (rows[i][0] - xmin) / xspan * w;
            const double py = oy + h - (rows[i][col] - ymin) / (ymax - ymin) * h;
            out += (i == 0 ? "M" : " L") + std::string(" ") + fmt(px) + " " + fmt(py);
        }
        out += "\"/>\n";
    };
    polyline(1, "#2ca02c");
    polyline(2, "#1f77b4");
    out += "<text x=\"" + fmt(ox + w / 2) +
           "\" y=\"20\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\">"
           "W1 vs critic estimate</text>\n";
    out += "<text x=\"" + fmt(ox + w - 4) + "\" y=\"" + fmt(oy + 14) +
           "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\" "
           "fill=\"#2ca02c\">exact</text>\n";
    out += "<text x=\"" + fmt(ox + w - 4) + "\" y=\"" + fmt(oy + 28) +
           "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\" "
           "fill=\"#1f77b4\">-j_d</text>\n";
    out += "<text x=\"" + fmt(ox) + "\" y=\"" + fmt(oy + h + 16) +
           "\" font-family=\"sans-serif\" font-size=\"11\">" + fmt(xmin) + "</text>\n";
    out += "<text x=\"" + fmt(ox + w) + "\" y=\"" + fmt(oy + h + 16) +
           "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" + fmt(xmax) +
           "</text>\n";
    out += "<text x=\"" + fmt(ox + 4) + "\" y=\"" + fmt(oy + 12) +
           "\" font-family=\"sans-serif\" font-size=\"11\">" + fmt(ymax) + "</text>\n";
    out += "</svg>\n";
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("emit_w1_plot: cannot open " + path);
    os << out;
    if (!os) throw IoError("emit_w1_plot: write failed for " + path);
}

std::string report_json(const EvalReport& r) {
    using json = nlohmann::ordered_json;
    auto db = [](double v) {
        return std::isinf(v) ? json("inf") : json(v);
    };
    json j;
    j["l1"] = r.l1;
    j["psnr_db"] = db(r.psnr_db);
    j["duplicate_rate"] = r.duplicate_rate;
    j["bicubic_l1"] = r.bicubic_l1;
    j["bicubic_psnr_db"] = db(r.bicubic_psnr_db);
    if (!r.w1_table.empty()) {
        json table = json::array();
        for (const auto& row : r.w1_table) {
            json entry;
            entry["shift"] = row[0];
            entry["w1_exact"] = row[1];
            entry["neg_j_d"] = row[2];
            table.push_back(entry);
        }
        j["w1_table"] = table;
    }
    return j.dump(2) + "\n";
}

}  // namespace asrl
