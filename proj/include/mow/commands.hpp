#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "mow/checkpoint.hpp"
#include "mow/config.hpp"

namespace mow {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNumeric = 3;
inline constexpr int kExitTheoremFail = 4;

int cmd_train(const std::string& config_path, std::ostream& log);
int cmd_compare(const std::string& config_path, const std::vector<int>& k_override,
                std::ostream& log);
int cmd_verify_theorem(const std::string& config_path, std::ostream& log);
int cmd_sample(const std::string& checkpoint_path, int count, const std::string& mode,
               const std::string& out_prefix, const std::string& data_config_path,
               uint64_t seed, std::ostream& log);

// ---- compare internals, exposed so tests can re-run the selection ----
struct CompareRow {
    int k = 0;
    double eta = 0.0;
    uint64_t seed = 0;
    MetricsRow final_row;
};

inline constexpr std::string_view kCompareHeader =
    "k,eta,seed,test_rec_error,test_distance,selection_metric";

std::string compare_row_string(const CompareRow& row);
std::vector<CompareRow> parse_compare_csv(const std::string& text);

struct CompareResult {
    std::vector<CompareRow> rows;        // ordered by (k, eta, seed)
    std::vector<CompareRow> best_per_k;  // winner of each k by selection metric
};

CompareResult run_compare(const RunConfig& cfg, const LoadedData& data,
                          const std::vector<int>& k_list, std::ostream* progress);

// Lowest selection metric per k; ties resolved by row order.
std::vector<CompareRow> select_best_per_k(const std::vector<CompareRow>& rows);

// Theorem study problem assembled from a config (toy defaults unless the
// config provides [data]/[model]/[cost]/[optimizer] sections).
FlowProblem flow_problem_from_config(const RunConfig& cfg);

}  // namespace mow
