#pragma once

// Minimal SVG output for loss curves and accuracy comparisons.

#include "fesr/metrics.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace fesr {

struct MetricsTable {
    std::vector<std::string> columns;
    std::vector<std::vector<std::optional<double>>> rows;  // numeric columns only; stage is dropped

    [[nodiscard]] int column(const std::string& name) const;
};

/// Parses a training metrics CSV. Throws DataError naming the file when it is empty or malformed.
MetricsTable read_metrics_csv(const std::filesystem::path& path);

/// One `loss_<objective>.svg` per objective column (L_G, L_Dimg, L_Dz, L_R) that has values.
std::vector<std::filesystem::path> write_loss_curves(const MetricsTable& table, const std::filesystem::path& out_dir);

/// Grouped bars: one group per variant, one bar per report of that variant, plus the group mean.
void write_accuracy_bars(const std::vector<EvalReport>& reports, const std::filesystem::path& path);

}  // namespace fesr
