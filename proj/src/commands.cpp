#include "mow/commands.hpp"

#include <atomic>
#include <bit>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>

#include "mow/errors.hpp"
#include "mow/metrics.hpp"

namespace fs = std::filesystem;

namespace mow {

namespace {

int exit_code_for(const std::exception& e, std::ostream& log) {
    if (dynamic_cast<const NumericError*>(&e) != nullptr) {
        log << "numeric failure: " << e.what() << "\n";
        return kExitNumeric;
    }
    log << "error: " << e.what() << "\n";
    return kExitConfig;
}

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create output directory " + dir);
}

void atomic_write(const std::string& path, const std::string& contents) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw IoError("cannot write " + tmp);
        f.write(contents.data(), static_cast<std::streamsize>(contents.size()));
        if (!f) throw IoError("short write to " + tmp);
    }
    fs::rename(tmp, path);
}

Checkpoint make_checkpoint(const RunConfig& cfg, const NetSpec& net, const TrainResult& res) {
    Checkpoint ck;
    ck.net = net;
    ck.mow = cfg.mow;
    ck.state = res.state;
    ck.queue_rng = res.queue_rng;
    ck.queue_draws = res.queue_draws;
    ck.config_digest = cfg.digest;
    return ck;
}

}  // namespace

int cmd_train(const std::string& config_path, std::ostream& log) {
    try {
        RunConfig cfg = parse_run_config(config_path);
        LoadedData data = load_datasets(cfg.data);
        resolve_net(cfg.net, data.train, cfg.has_model_section);
        cfg.mow.validate();
        ensure_dir(cfg.run.out_dir);

        TrainOptions opts;
        opts.eval_interval = cfg.run.eval_interval;
        opts.test = data.test.count() > 0 ? &data.test : nullptr;

        TrainResult res;
        if (!cfg.run.resume.empty()) {
            Checkpoint ck = load_checkpoint(cfg.run.resume);
            if (ck.config_digest != cfg.digest)
                throw ConfigError("checkpoint " + cfg.run.resume +
                                  " was produced by a different config");
            DataQueue queue(data.train, ck.queue_rng);
            queue.restore(ck.queue_rng, ck.queue_draws);
            res = continue_training(std::move(ck.state), queue, cfg.mow, cfg.net, opts);
        } else {
            res = run_training(cfg.mow, cfg.net, data.train, opts);
        }

        const std::string metrics_path = (fs::path(cfg.run.out_dir) / "metrics.csv").string();
        write_metrics_file(metrics_path, res.log);

        if (res.aborted) {
            const std::string snap =
                (fs::path(cfg.run.out_dir) / "abort_checkpoint.mow1").string();
            save_checkpoint(snap, make_checkpoint(cfg, cfg.net, res));
            log << "training aborted: " << res.abort_message << "\n"
                << "diagnostic snapshot written to " << snap << "\n";
            return kExitNumeric;
        }

        const std::string ck_path = (fs::path(cfg.run.out_dir) / "checkpoint.mow1").string();
        save_checkpoint(ck_path, make_checkpoint(cfg, cfg.net, res));
        log << "wrote " << metrics_path << " (" << res.log.size() << " rows) and " << ck_path
            << "\n";
        return kExitOk;
    } catch (const std::exception& e) {
        return exit_code_for(e, log);
    }
}

std::string compare_row_string(const CompareRow& row) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "%d,%.17g,%llu,%.17g,%.17g,%.17g", row.k, row.eta,
                  static_cast<unsigned long long>(row.seed), row.final_row.test_rec_error,
                  row.final_row.test_distance, row.final_row.selection_metric);
    return buf;
}

std::vector<CompareRow> parse_compare_csv(const std::string& text) {
    std::vector<CompareRow> rows;
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line != kCompareHeader)
        throw IoError("compare CSV header mismatch");
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        CompareRow r;
        unsigned long long seed = 0;
        if (std::sscanf(line.c_str(), "%d,%lg,%llu,%lg,%lg,%lg", &r.k, &r.eta, &seed,
                        &r.final_row.test_rec_error, &r.final_row.test_distance,
                        &r.final_row.selection_metric) != 6)
            throw IoError("bad compare CSV row: " + line);
        r.seed = seed;
        rows.push_back(r);
    }
    return rows;
}

std::vector<CompareRow> select_best_per_k(const std::vector<CompareRow>& rows) {
    std::vector<CompareRow> best;
    for (const auto& row : rows) {
        auto it = std::find_if(best.begin(), best.end(),
                               [&](const CompareRow& b) { return b.k == row.k; });
        if (it == best.end())
            best.push_back(row);
        else if (row.final_row.selection_metric < it->final_row.selection_metric)
            *it = row;
    }
    std::sort(best.begin(), best.end(),
              [](const CompareRow& a, const CompareRow& b) { return a.k < b.k; });
    return best;
}

CompareResult run_compare(const RunConfig& cfg, const LoadedData& data,
                          const std::vector<int>& k_list, std::ostream* progress) {
    if (cfg.mow.steps < 1) throw ConfigError("compare needs steps >= 1");
    if (cfg.run.seeds < 1) throw ConfigError("compare needs seeds >= 1");
    if (cfg.run.eta_grid.empty()) throw ConfigError("compare needs a non-empty eta_grid");
    for (int k : k_list)
        if (k < 1 || k > cfg.mow.n)
            throw ConfigError("compare k=" + std::to_string(k) + " outside [1, n]");

    struct Cell {
        int k;
        double eta;
        uint64_t seed;
    };
    std::vector<Cell> cells;
    for (int k : k_list)
        for (double eta : cfg.run.eta_grid)
            for (int s = 0; s < cfg.run.seeds; ++s)
                cells.push_back({k, eta, cfg.mow.seed + static_cast<uint64_t>(s)});

    std::vector<CompareRow> rows(cells.size());
    std::atomic<std::size_t> next{0};
    std::mutex progress_mutex;
    auto worker = [&]() {
        while (true) {
            const std::size_t i = next.fetch_add(1);
            if (i >= cells.size()) return;
            const Cell& cell = cells[i];
            MowConfig mc = cfg.mow;
            mc.k = cell.k;
            mc.eta = cell.eta;
            mc.seed = cell.seed;
            TrainOptions opts;
            opts.eval_interval = mc.steps + 1;  // final row only
            opts.test = data.test.count() > 0 ? &data.test : nullptr;
            TrainResult res = run_training(mc, cfg.net, data.train, opts);
            CompareRow row{cell.k, cell.eta, cell.seed, {}};
            if (res.aborted) {
                // a diverged grid cell loses the selection but does not
                // invalidate the sweep
                row.final_row.step = res.state.l;
                row.final_row.live_rec_error = std::numeric_limits<double>::infinity();
                row.final_row.test_rec_error = std::numeric_limits<double>::infinity();
                row.final_row.test_distance = std::numeric_limits<double>::infinity();
                row.final_row.selection_metric = std::numeric_limits<double>::infinity();
            } else {
                row.final_row = res.log.back();
            }
            rows[i] = row;
            if (progress != nullptr) {
                std::lock_guard<std::mutex> lock(progress_mutex);
                (*progress) << compare_row_string(row) << "\n" << std::flush;
            }
        }
    };

    int threads = cfg.run.threads > 0 ? cfg.run.threads
                                      : static_cast<int>(std::thread::hardware_concurrency());
    threads = std::max(1, std::min<int>(threads, static_cast<int>(cells.size())));
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        std::exception_ptr failure;
        std::mutex failure_mutex;
        for (int t = 0; t < threads; ++t)
            pool.emplace_back([&]() {
                try {
                    worker();
                } catch (...) {
                    std::lock_guard<std::mutex> lock(failure_mutex);
                    if (!failure) failure = std::current_exception();
                    next.store(cells.size());
                }
            });
        for (auto& th : pool) th.join();
        if (failure) std::rethrow_exception(failure);
    }

    std::sort(rows.begin(), rows.end(), [](const CompareRow& a, const CompareRow& b) {
        if (a.k != b.k) return a.k < b.k;
        if (a.eta != b.eta) return a.eta < b.eta;
        return a.seed < b.seed;
    });
    CompareResult out;
    out.rows = std::move(rows);
    out.best_per_k = select_best_per_k(out.rows);
    return out;
}

int cmd_compare(const std::string& config_path, const std::vector<int>& k_override,
                std::ostream& log) {
    try {
        RunConfig cfg = parse_run_config(config_path);
        LoadedData data = load_datasets(cfg.data);
        resolve_net(cfg.net, data.train, cfg.has_model_section);
        ensure_dir(cfg.run.out_dir);
        const std::vector<int>& k_list = k_override.empty() ? cfg.run.k_list : k_override;

        std::ofstream progress((fs::path(cfg.run.out_dir) / "compare_progress.log").string(),
                               std::ios::trunc);
        CompareResult result = run_compare(cfg, data, k_list, &progress);

        std::ostringstream summary;
        summary << kCompareHeader << "\n";
        for (const auto& row : result.rows) summary << compare_row_string(row) << "\n";
        atomic_write((fs::path(cfg.run.out_dir) / "compare_summary.csv").string(),
                     summary.str());

        std::ostringstream best;
        best << kCompareHeader << "\n";
        for (const auto& row : result.best_per_k) best << compare_row_string(row) << "\n";
        atomic_write((fs::path(cfg.run.out_dir) / "compare_best.csv").string(), best.str());

        log << "best per k (" << kCompareHeader << "):\n";
        for (const auto& row : result.best_per_k) log << "  " << compare_row_string(row) << "\n";
        return kExitOk;
    } catch (const std::exception& e) {
        return exit_code_for(e, log);
    }
}

// Toy problem unless the config supplies its own sections; the summed
// reconstruction form is forced either way.
FlowProblem flow_problem_from_config(const RunConfig& cfg) {
    FlowProblem problem = default_toy_problem();
    if (cfg.has_data_section || cfg.has_model_section) {
        LoadedData data = load_datasets(cfg.data);
        problem.dataset = std::move(data.train);
        NetSpec net = cfg.net;
        resolve_net(net, problem.dataset, cfg.has_model_section);
        problem.net = net;
    }
    if (cfg.has_optimizer_section) {
        problem.base.n = cfg.mow.n;
        problem.base.k = cfg.mow.k;
    }
    if (cfg.has_cost_section) {
        problem.base.lambda = cfg.mow.lambda;
        problem.base.distance = cfg.mow.distance;
    }
    problem.base.recon_reduction = ReconReduction::sum;
    problem.T = cfg.theorem.horizon;
    problem.oracle_samples = cfg.theorem.oracle_samples;
    problem.flow_dt = cfg.theorem.flow_dt;
    problem.integrator = cfg.theorem.integrator;
    return problem;
}

int cmd_verify_theorem(const std::string& config_path, std::ostream& log) {
    try {
        RunConfig cfg = parse_run_config(config_path);
        if (cfg.theorem.etas.size() < 3)
            throw ConfigError("verify-theorem needs at least three etas");
        ensure_dir(cfg.run.out_dir);
        FlowProblem problem = flow_problem_from_config(cfg);

        ConvergenceReport report =
            convergence_study(problem, cfg.theorem.etas, cfg.theorem.seeds);

        std::ostringstream csv;
        write_convergence_csv(report, csv);
        atomic_write((fs::path(cfg.run.out_dir) / "theorem_report.csv").string(), csv.str());
        log << csv.str();
        log << (report.monotone ? "PASS" : "FAIL")
            << ": sup-norm deviation from the gradient flow "
            << (report.monotone ? "decreases strictly with eta" : "is not strictly decreasing")
            << "\n";
        return report.monotone ? kExitOk : kExitTheoremFail;
    } catch (const std::exception& e) {
        return exit_code_for(e, log);
    }
}

namespace {

void append_f64_le(std::string& out, double v) {
    const uint64_t bits = std::bit_cast<uint64_t>(v);
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
}

void append_u32_le(std::string& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

}  // namespace

int cmd_sample(const std::string& checkpoint_path, int count, const std::string& mode,
               const std::string& out_prefix, const std::string& data_config_path,
               uint64_t seed, std::ostream& log) {
    try {
        if (count < 1) throw ConfigError("sample count must be positive");
        Checkpoint ck = load_checkpoint(checkpoint_path);
        const NetSpec& net = ck.net;
        const ParamVector& theta = ck.state.theta;

        Dataset dataset;
        if (mode == "reconstruct" || mode == "interpolate") {
            if (data_config_path.empty())
                throw ConfigError("mode " + mode + " needs --data <config>");
            RunConfig dcfg = parse_run_config(data_config_path);
            LoadedData data = load_datasets(dcfg.data);
            dataset = data.test.count() > 0 ? std::move(data.test) : std::move(data.train);
            if (dataset.dim() != net.input_dim)
                throw ConfigError("dataset dimension does not match checkpoint model");
        }

        std::vector<Vector> outputs;
        std::ostringstream index;
        index << "row,mode,source\n";
        Rng rng = Rng::derive(seed, 0x53414D50ull);

        if (mode == "prior") {
            for (int i = 0; i < count; ++i) {
                Vector z(net.latent_dim);
                for (int j = 0; j < net.latent_dim; ++j) z[j] = rng.next_gaussian();
                outputs.push_back(decode_value(theta, net, z));
                index << outputs.size() - 1 << ",prior,draw" << i << "\n";
            }
        } else if (mode == "reconstruct") {
            for (int i = 0; i < count; ++i) {
                const auto row = static_cast<Eigen::Index>(i % dataset.count());
                const Vector x = dataset.examples.row(row).transpose();
                outputs.push_back(x);
                index << outputs.size() - 1 << ",input," << row << "\n";
                outputs.push_back(decode_value(theta, net, encode_value(theta, net, x)));
                index << outputs.size() - 1 << ",reconstruction," << row << "\n";
            }
        } else if (mode == "interpolate") {
            if (dataset.count() < 2) throw ConfigError("interpolate needs two examples");
            const Vector z0 = encode_value(theta, net, dataset.examples.row(0).transpose());
            const Vector z1 = encode_value(theta, net, dataset.examples.row(1).transpose());
            constexpr int kSteps = 8;
            for (int i = 0; i < kSteps; ++i) {
                const double t = static_cast<double>(i) / (kSteps - 1);
                outputs.push_back(decode_value(theta, net, Vector((1.0 - t) * z0 + t * z1)));
                char buf[64];
                std::snprintf(buf, sizeof buf, "%d,interpolate,t=%.6f", i, t);
                index << buf << "\n";
            }
        } else {
            throw ConfigError("unknown sample mode '" + mode + "'");
        }

        std::string blob;
        append_u32_le(blob, static_cast<uint32_t>(outputs.size()));
        append_u32_le(blob, static_cast<uint32_t>(net.input_dim));
        for (const Vector& row : outputs)
            for (Eigen::Index j = 0; j < row.size(); ++j) append_f64_le(blob, row[j]);
        atomic_write(out_prefix + ".bin", blob);
        atomic_write(out_prefix + ".csv", index.str());
        log << "wrote " << outputs.size() << " rows to " << out_prefix << ".bin\n";
        return kExitOk;
    } catch (const std::exception& e) {
        return exit_code_for(e, log);
    }
}

}  // namespace mow
