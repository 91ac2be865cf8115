#include "covnet/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

namespace covnet {

std::vector<MetricsRow> merge_metrics(const std::vector<std::string>& paths) {
    std::vector<MetricsRow> out;
    std::map<std::string, std::size_t> first_file;  // run_id -> file index
    for (std::size_t fi = 0; fi < paths.size(); ++fi) {
        for (auto& r : read_metrics_csv(paths[fi])) {
            auto [it, inserted] = first_file.emplace(r.run_id, fi);
            if (inserted || it->second == fi) out.push_back(std::move(r));
        }
    }
    return out;
}

std::vector<SummaryRow> summarize(const std::vector<MetricsRow>& rows) {
    std::map<std::string, SummaryRow> best;
    std::vector<std::string> order;
    for (const auto& r : rows) {
        if (!std::isinf(r.cov_snr_db) || r.cov_snr_db < 0) continue;  // clean rows only
        if (std::isnan(r.train_mse)) continue;                        // eval-only rows are not runs
        auto it = best.find(r.run_id);
        if (it == best.end()) {
            best.emplace(r.run_id, SummaryRow{r.run_id, r.variant, r.cr, r.eval_nmse_db, r.epoch, r.flops_total});
            order.push_back(r.run_id);
        } else if (r.eval_nmse_db < it->second.best_nmse_db) {
            it->second.best_nmse_db = r.eval_nmse_db;
            it->second.best_epoch = r.epoch;
        }
    }
    std::vector<SummaryRow> out;
    out.reserve(order.size());
    for (const auto& id : order) out.push_back(best.at(id));
    std::sort(out.begin(), out.end(), [](const SummaryRow& a, const SummaryRow& b) {
        if (a.variant != b.variant) return a.variant < b.variant;
        if (a.cr != b.cr) return a.cr < b.cr;
        return a.run_id < b.run_id;
    });
    return out;
}

void write_summary_csv(const std::string& path, const std::vector<SummaryRow>& rows) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open summary file for writing: " + path);
    f << "run_id,variant,cr,best_nmse_db,best_epoch,flops_total\n";
    for (const auto& r : rows) {
        char nmse[40];
        std::snprintf(nmse, sizeof nmse, "%.6g", r.best_nmse_db);
        f << r.run_id << ',' << r.variant << ',' << r.cr << ',' << nmse << ',' << r.best_epoch << ','
          << r.flops_total << "\n";
    }
    if (!f.flush()) throw std::runtime_error("failed writing summary file: " + path);
}

namespace {

constexpr double kW = 640, kH = 400;
constexpr double kLeft = 64, kRight = 24, kTop = 40, kBottom = 48;
const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22"};

std::string fnum(double v) {
    char b[40];
    std::snprintf(b, sizeof b, "%.2f", v);
    return b;
}

std::string fshort(double v) {
    char b[40];
    std::snprintf(b, sizeof b, "%.4g", v);
    return b;
}

std::string xml_escape(const std::string& s) {
    std::string o;
    for (char c : s) {
        switch (c) {
            case '&': o += "&amp;"; break;
            case '<': o += "&lt;"; break;
            case '>': o += "&gt;"; break;
            case '"': o += "&quot;"; break;
            default: o += c;
        }
    }
    return o;
}

}  // namespace

std::string render_line_svg(const std::string& title, const std::string& x_label, const std::string& y_label,
                            const std::vector<Series>& series, const std::vector<AxisTick>& x_ticks) {
    double xmin = 0, xmax = 1, ymin = 0, ymax = 1;
    bool any = false;
    for (const auto& s : series)
        for (auto [x, y] : s.pts) {
            if (!std::isfinite(x) || !std::isfinite(y)) continue;
            if (!any) {
                xmin = xmax = x;
                ymin = ymax = y;
                any = true;
            } else {
                xmin = std::min(xmin, x);
                xmax = std::max(xmax, x);
                ymin = std::min(ymin, y);
                ymax = std::max(ymax, y);
            }
        }
    for (const auto& t : x_ticks) {
        if (!any) { xmin = xmax = t.x; any = true; }
        xmin = std::min(xmin, t.x);
        xmax = std::max(xmax, t.x);
    }
    if (xmax - xmin < 1e-12) { xmin -= 0.5; xmax += 0.5; }
    if (ymax - ymin < 1e-12) { ymin -= 0.5; ymax += 0.5; }
    const double ypad = 0.06 * (ymax - ymin);
    ymin -= ypad;
    ymax += ypad;

    const double pw = kW - kLeft - kRight, ph = kH - kTop - kBottom;
    auto sx = [&](double x) { return kLeft + (x - xmin) / (xmax - xmin) * pw; };
    auto sy = [&](double y) { return kTop + (ymax - y) / (ymax - ymin) * ph; };

    std::ostringstream o;
    o << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH << "\" viewBox=\"0 0 "
      << kW << " " << kH << "\">\n";
    o << "<rect width=\"" << kW << "\" height=\"" << kH << "\" fill=\"white\"/>\n";
    o << "<text x=\"" << kW / 2 << "\" y=\"22\" font-family=\"monospace\" font-size=\"14\" text-anchor=\"middle\">"
      << xml_escape(title) << "</text>\n";

    // axes
    o << "<line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft << "\" y2=\"" << kTop + ph
      << "\" stroke=\"black\"/>\n";
    o << "<line x1=\"" << kLeft << "\" y1=\"" << kTop + ph << "\" x2=\"" << kLeft + pw << "\" y2=\"" << kTop + ph
      << "\" stroke=\"black\"/>\n";

    // y ticks: 6 even divisions
    for (int i = 0; i <= 5; ++i) {
        const double yv = ymin + (ymax - ymin) * i / 5.0;
        const double py = sy(yv);
        o << "<line x1=\"" << kLeft - 4 << "\" y1=\"" << fnum(py) << "\" x2=\"" << kLeft + pw << "\" y2=\""
          << fnum(py) << "\" stroke=\"#dddddd\"/>\n";
        o << "<text x=\"" << kLeft - 8 << "\" y=\"" << fnum(py + 4)
          << "\" font-family=\"monospace\" font-size=\"11\" text-anchor=\"end\">" << fshort(yv) << "</text>\n";
    }
    for (const auto& t : x_ticks) {
        const double px = sx(t.x);
        o << "<line x1=\"" << fnum(px) << "\" y1=\"" << kTop + ph << "\" x2=\"" << fnum(px) << "\" y2=\""
          << kTop + ph + 4 << "\" stroke=\"black\"/>\n";
        o << "<text x=\"" << fnum(px) << "\" y=\"" << kTop + ph + 18
          << "\" font-family=\"monospace\" font-size=\"11\" text-anchor=\"middle\">" << xml_escape(t.label)
          << "</text>\n";
    }
    o << "<text x=\"" << kLeft + pw / 2 << "\" y=\"" << kH - 10
      << "\" font-family=\"monospace\" font-size=\"12\" text-anchor=\"middle\">" << xml_escape(x_label)
      << "</text>\n";
    o << "<text x=\"16\" y=\"" << kTop + ph / 2 << "\" font-family=\"monospace\" font-size=\"12\" "
      << "text-anchor=\"middle\" transform=\"rotate(-90 16 " << kTop + ph / 2 << ")\">" << xml_escape(y_label)
      << "</text>\n";

    for (std::size_t si = 0; si < series.size(); ++si) {
        const char* color = kPalette[si % (sizeof kPalette / sizeof kPalette[0])];
        std::ostringstream pts;
        for (auto [x, y] : series[si].pts) {
            if (!std::isfinite(y)) continue;  // -inf NMSE: point omitted from the polyline
            pts << fnum(sx(x)) << "," << fnum(sy(y)) << " ";
        }
        o << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"" << pts.str()
          << "\"/>\n";
        for (auto [x, y] : series[si].pts) {
            if (!std::isfinite(y)) continue;
            o << "<circle cx=\"" << fnum(sx(x)) << "\" cy=\"" << fnum(sy(y)) << "\" r=\"3\" fill=\"" << color
              << "\"/>\n";
        }
        const double ly = kTop + 14 + 14 * static_cast<double>(si);
        o << "<rect x=\"" << kLeft + pw - 150 << "\" y=\"" << ly - 8 << "\" width=\"10\" height=\"3\" fill=\""
          << color << "\"/>\n";
        o << "<text x=\"" << kLeft + pw - 135 << "\" y=\"" << ly
          << "\" font-family=\"monospace\" font-size=\"11\">" << xml_escape(series[si].label) << "</text>\n";
    }
    o << "</svg>\n";
    return o.str();
}

std::string plot_nmse_vs_cr(const std::vector<MetricsRow>& rows) {
    // best clean NMSE per (variant, cr)
    std::map<std::string, std::map<std::int64_t, double>> by_variant;
    std::set<std::int64_t> crs;
    for (const auto& s : summarize(rows)) {
        auto [it, fresh] = by_variant[s.variant].emplace(s.cr, s.best_nmse_db);
        if (!fresh) it->second = std::min(it->second, s.best_nmse_db);
        crs.insert(s.cr);
    }
    std::vector<Series> series;
    for (const auto& [variant, pts] : by_variant) {
        Series s{variant, {}};
        for (const auto& [cr, nmse] : pts) s.pts.emplace_back(std::log2(static_cast<double>(cr)), nmse);
        series.push_back(std::move(s));
    }
    std::vector<AxisTick> ticks;
    for (auto cr : crs) ticks.push_back({std::log2(static_cast<double>(cr)), std::to_string(cr)});
    return render_line_svg("NMSE vs compression ratio", "CR (log2 scale)", "NMSE (dB)", series, ticks);
}

std::string plot_nmse_vs_snr(const std::vector<MetricsRow>& rows) {
    // latest row per (variant, cr, snr); +inf rendered one step right of the last finite tick
    std::map<std::string, std::map<double, double>> by_series;  // label -> snr -> nmse
    std::set<double> finite_snrs;
    bool have_inf = false;
    for (const auto& r : rows) {
        if (std::isinf(r.cov_snr_db) && r.cov_snr_db < 0) continue;
        const std::string label = r.variant + " cr" + std::to_string(r.cr);
        by_series[label][r.cov_snr_db] = r.eval_nmse_db;
        if (std::isinf(r.cov_snr_db)) have_inf = true;
        else finite_snrs.insert(r.cov_snr_db);
    }
    double inf_x = 0;
    double step = 5;
    if (finite_snrs.size() >= 2) {
        auto last = *finite_snrs.rbegin();
        auto prev = *std::next(finite_snrs.rbegin());
        step = last - prev;
        inf_x = last + step;
    } else if (finite_snrs.size() == 1) {
        inf_x = *finite_snrs.begin() + step;
    }
    std::vector<Series> series;
    for (const auto& [label, pts] : by_series) {
        Series s{label, {}};
        for (const auto& [snr, nmse] : pts) s.pts.emplace_back(std::isinf(snr) ? inf_x : snr, nmse);
        std::sort(s.pts.begin(), s.pts.end());
        series.push_back(std::move(s));
    }
    std::vector<AxisTick> ticks;
    for (double snr : finite_snrs) ticks.push_back({snr, fshort(snr)});
    if (have_inf) ticks.push_back({inf_x, "inf"});
    return render_line_svg("NMSE vs covariance SNR", "covariance SNR (dB)", "NMSE (dB)", series, ticks);
}

}  // namespace covnet
