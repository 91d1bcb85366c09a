#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mow/data_io.hpp"
#include "mow/flow_harness.hpp"
#include "mow/mow_optimizer.hpp"

namespace mow {

struct DataConfig {
    std::string kind = "gauss_mix";  // gauss_mix | ring | grid_images | idx
    int size = 1024;
    int test_size = 256;
    uint64_t seed = 1;
    SyntheticParams synth;
    std::string path;       // [data] path for kind=idx
    std::string test_path;  // optional idx test file
};

struct RunSection {
    int64_t eval_interval = 100;
    std::string out_dir = ".";
    std::string resume;  // checkpoint to continue from
    std::vector<double> eta_grid = {1e-2, 5e-3, 2.5e-3, 1e-3};
    int seeds = 3;
    std::vector<int> k_list = {1, 32, 64};
    int threads = 0;  // 0 = hardware concurrency
};

struct TheoremSection {
    std::vector<double> etas = {2e-2, 1e-2, 5e-3};
    int seeds = 20;
    double horizon = 0.5;
    int oracle_samples = 4096;
    double flow_dt = 5e-4;
    FlowIntegrator integrator = FlowIntegrator::euler;
};

struct RunConfig {
    DataConfig data;
    NetSpec net;  // input_dim 0 means "match the dataset"
    MowConfig mow;
    RunSection run;
    TheoremSection theorem;
    bool has_data_section = false;
    bool has_model_section = false;
    bool has_cost_section = false;
    bool has_optimizer_section = false;
    uint64_t digest = 0;  // FNV-1a over the semantic training sections
    std::string source_path;
};

RunConfig parse_run_config(const std::string& path);
RunConfig parse_run_config_text(const std::string& text, const std::string& base_dir);

uint64_t fnv1a64(const std::string& bytes);

// Train/test pair resolved from the [data] section.
struct LoadedData {
    Dataset train;
    Dataset test;
};
LoadedData load_datasets(const DataConfig& cfg);

// Fill in defaults that depend on the dataset (input_dim, default net).
void resolve_net(NetSpec& net, const Dataset& train, bool had_model_section);

}  // namespace mow
