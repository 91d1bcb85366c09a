#pragma once

#include <ostream>
#include <span>
#include <string>
#include <string_view>

#include "mow/mow_optimizer.hpp"

namespace mow {

// Frozen CSV schema; tests assert this string verbatim.
inline constexpr std::string_view kMetricsHeader =
    "step,examples_seen,live_rec_error,distance_value,train_cost,test_rec_error,"
    "test_distance,selection_metric,wall_ms";

std::string metrics_row_string(const MetricsRow& row);
void write_metrics_csv(std::ostream& out, std::span<const MetricsRow> rows);
void write_metrics_file(const std::string& path, std::span<const MetricsRow> rows);

// Strip the wall_ms column (everything after the last comma).
std::string drop_wall_column(const std::string& csv_line);

}  // namespace mow
