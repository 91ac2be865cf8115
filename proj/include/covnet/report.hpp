#pragma once

#include <string>
#include <vector>

#include "covnet/train.hpp"

namespace covnet {

// Rows from several metrics files. A run_id first seen in an earlier file
// shadows rows under the same id in later files; rows within one file are
// kept as-is (a run legitimately has one row per evaluation point).
std::vector<MetricsRow> merge_metrics(const std::vector<std::string>& paths);

struct SummaryRow {
    std::string run_id;
    std::string variant;
    std::int64_t cr = 0;
    double best_nmse_db = 0;
    std::int64_t best_epoch = 0;
    std::int64_t flops_total = 0;
};

// One row per training run (clean-covariance rows only, best eval NMSE),
// sorted by (variant, cr) — the shape of a results table.
std::vector<SummaryRow> summarize(const std::vector<MetricsRow>& rows);
void write_summary_csv(const std::string& path, const std::vector<SummaryRow>& rows);

struct Series {
    std::string label;
    std::vector<std::pair<double, double>> pts;  // x ascending
};

struct AxisTick {
    double x = 0;
    std::string label;
};

// Minimal deterministic line chart (fixed size, fonts, palette); returns the
// SVG document. Series are drawn in the order given.
std::string render_line_svg(const std::string& title, const std::string& x_label, const std::string& y_label,
                            const std::vector<Series>& series, const std::vector<AxisTick>& x_ticks);

// NMSE-vs-CR (one series per variant, log2 CR axis, clean rows) and
// NMSE-vs-SNR (one series per variant/CR pair; +inf plotted as the rightmost tick).
std::string plot_nmse_vs_cr(const std::vector<MetricsRow>& rows);
std::string plot_nmse_vs_snr(const std::vector<MetricsRow>& rows);

}  // namespace covnet
