#include "mow/metrics.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "mow/errors.hpp"

namespace mow {

std::string metrics_row_string(const MetricsRow& row) {
    char buf[512];
    std::snprintf(buf, sizeof buf,
                  "%lld,%lld,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.3f",
                  static_cast<long long>(row.step),
                  static_cast<long long>(row.examples_seen), row.live_rec_error,
                  row.distance_value, row.train_cost, row.test_rec_error, row.test_distance,
                  row.selection_metric, row.wall_ms);
    return buf;
}

void write_metrics_csv(std::ostream& out, std::span<const MetricsRow> rows) {
    out << kMetricsHeader << '\n';
    for (const auto& row : rows) out << metrics_row_string(row) << '\n';
}

void write_metrics_file(const std::string& path, std::span<const MetricsRow> rows) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream f(tmp, std::ios::trunc);
        if (!f) throw IoError("cannot write metrics file " + tmp);
        write_metrics_csv(f, rows);
        if (!f) throw IoError("short write to " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

std::string drop_wall_column(const std::string& csv_line) {
    const auto pos = csv_line.rfind(',');
    return pos == std::string::npos ? csv_line : csv_line.substr(0, pos);
}

}  // namespace mow
