#include "mow/config.hpp"

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "mow/errors.hpp"

namespace mow {

namespace {

std::string trim(std::string s) {
    const auto notspace = [](unsigned char c) { return !std::isspace(c); };
    s.erase(s.begin(), std::find_if(s.begin(), s.end(), notspace));
    s.erase(std::find_if(s.rbegin(), s.rend(), notspace).base(), s.end());
    return s;
}

struct Parser {
    std::string section;
    std::string base_dir;
    int line_no = 0;

    [[noreturn]] void fail(const std::string& msg) const {
        throw ConfigError("config line " + std::to_string(line_no) + ": " + msg);
    }

    double to_double(const std::string& v) const {
        try {
            std::size_t used = 0;
            const double d = std::stod(v, &used);
            if (used != v.size()) fail("bad number '" + v + "'");
            return d;
        } catch (const std::exception&) {
            fail("bad number '" + v + "'");
        }
    }
    int64_t to_int(const std::string& v) const {
        try {
            std::size_t used = 0;
            const int64_t i = std::stoll(v, &used);
            if (used != v.size()) fail("bad integer '" + v + "'");
            return i;
        } catch (const std::exception&) {
            fail("bad integer '" + v + "'");
        }
    }
    uint64_t to_u64(const std::string& v) const {
        try {
            std::size_t used = 0;
            const uint64_t i = std::stoull(v, &used);
            if (used != v.size()) fail("bad integer '" + v + "'");
            return i;
        } catch (const std::exception&) {
            fail("bad integer '" + v + "'");
        }
    }
    std::vector<double> to_double_list(const std::string& v) const {
        std::vector<double> out;
        std::stringstream ss(v);
        std::string item;
        while (std::getline(ss, item, ',')) out.push_back(to_double(trim(item)));
        if (out.empty()) fail("empty list");
        return out;
    }
    std::vector<int> to_int_list(const std::string& v) const {
        std::vector<int> out;
        std::stringstream ss(v);
        std::string item;
        while (std::getline(ss, item, ',')) out.push_back(static_cast<int>(to_int(trim(item))));
        if (out.empty()) fail("empty list");
        return out;
    }
    std::string resolve_path(const std::string& v) const {
        std::filesystem::path p(v);
        if (p.is_absolute()) return p.lexically_normal().string();
        return (std::filesystem::path(base_dir) / p).lexically_normal().string();
    }
    Activation to_activation(const std::string& v) const {
        if (v == "relu") return Activation::relu;
        if (v == "sigmoid") return Activation::sigmoid;
        if (v == "tanh") return Activation::tanh;
        if (v == "linear") return Activation::linear;
        fail("unknown activation '" + v + "'");
    }
};

std::vector<LayerSpec> to_layers(const Parser& p, const std::string& widths, Activation act) {
    std::vector<LayerSpec> out;
    for (int w : p.to_int_list(widths)) out.push_back({w, act});
    return out;
}

}  // namespace

uint64_t fnv1a64(const std::string& bytes) {
    uint64_t h = 0xCBF29CE484222325ull;
    for (const unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001B3ull;
    }
    return h;
}

RunConfig parse_run_config_text(const std::string& text, const std::string& base_dir) {
    RunConfig cfg;

    // Digest covers the semantic identity of a training run: the [data],
    // [model], [cost] and [optimizer] sections except steps. Resuming with
    // more steps, a different out_dir or an added resume= key stays valid;
    // touching anything that changes the trajectory does not.
    std::string canonical;

    Parser p;
    p.base_dir = base_dir;

    // raw key/value capture first so activations can apply to layer lists
    std::string enc_widths, dec_widths;
    Activation enc_act = Activation::relu, dec_act = Activation::relu;
    bool saw_encoder = false, saw_decoder = false;

    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        ++p.line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') p.fail("malformed section header");
            p.section = trim(line.substr(1, line.size() - 2));
            if (p.section != "data" && p.section != "model" && p.section != "cost" &&
                p.section != "optimizer" && p.section != "run" && p.section != "theorem")
                p.fail("unknown section [" + p.section + "]");
            if (p.section == "data") cfg.has_data_section = true;
            if (p.section == "model") cfg.has_model_section = true;
            if (p.section == "cost") cfg.has_cost_section = true;
            if (p.section == "optimizer") cfg.has_optimizer_section = true;
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) p.fail("expected key=value");
        const std::string key = trim(line.substr(0, eq));
        const std::string val = trim(line.substr(eq + 1));
        if (p.section.empty()) p.fail("key '" + key + "' outside any section");
        if (p.section == "data" || p.section == "model" || p.section == "cost" ||
            (p.section == "optimizer" && key != "steps"))
            canonical += p.section + "." + key + "=" + val + "\n";

        if (p.section == "data") {
            if (key == "kind") cfg.data.kind = val;
            else if (key == "size") cfg.data.size = static_cast<int>(p.to_int(val));
            else if (key == "test_size") cfg.data.test_size = static_cast<int>(p.to_int(val));
            else if (key == "seed") cfg.data.seed = p.to_u64(val);
            else if (key == "components") cfg.data.synth.components = static_cast<int>(p.to_int(val));
            else if (key == "center_radius") cfg.data.synth.center_radius = p.to_double(val);
            else if (key == "variance") cfg.data.synth.variance = p.to_double(val);
            else if (key == "noise") cfg.data.synth.noise = p.to_double(val);
            else if (key == "path") cfg.data.path = p.resolve_path(val);
            else if (key == "test_path") cfg.data.test_path = p.resolve_path(val);
            else p.fail("unknown key '" + key + "' in [data]");
        } else if (p.section == "model") {
            if (key == "input_dim") cfg.net.input_dim = static_cast<int>(p.to_int(val));
            else if (key == "latent_dim") cfg.net.latent_dim = static_cast<int>(p.to_int(val));
            else if (key == "encoder") { enc_widths = val; saw_encoder = true; }
            else if (key == "decoder") { dec_widths = val; saw_decoder = true; }
            else if (key == "encoder_activation") enc_act = p.to_activation(val);
            else if (key == "decoder_activation") dec_act = p.to_activation(val);
            else if (key == "output_activation") cfg.net.output_activation = p.to_activation(val);
            else p.fail("unknown key '" + key + "' in [model]");
        } else if (p.section == "cost") {
            if (key == "distance") {
                if (val == "mmd") cfg.mow.distance.kind = DistanceKind::mmd_imq;
                else if (val == "cw") cfg.mow.distance.kind = DistanceKind::cramer_wold;
                else if (val == "sw") cfg.mow.distance.kind = DistanceKind::sliced_wasserstein;
                else p.fail("unknown distance '" + val + "'");
            } else if (key == "lambda") cfg.mow.lambda = p.to_double(val);
            else if (key == "kernel_scale") cfg.mow.distance.kernel_scale = val == "auto" ? 0.0 : p.to_double(val);
            else if (key == "gamma") cfg.mow.distance.gamma = val == "auto" ? 0.0 : p.to_double(val);
            else if (key == "directions") cfg.mow.distance.n_directions = static_cast<int>(p.to_int(val));
            else if (key == "selection") {
                if (val == "cost") cfg.mow.selection = SelectionMetric::cost;
                else if (val == "rec_plus_log_distance") cfg.mow.selection = SelectionMetric::rec_plus_log_distance;
                else p.fail("unknown selection metric '" + val + "'");
            } else if (key == "reconstruction") {
                if (val == "mean") cfg.mow.recon_reduction = ReconReduction::mean;
                else if (val == "sum") cfg.mow.recon_reduction = ReconReduction::sum;
                else p.fail("reconstruction must be mean or sum");
            } else p.fail("unknown key '" + key + "' in [cost]");
        } else if (p.section == "optimizer") {
            if (key == "rule") {
                if (val == "sgd") cfg.mow.rule = UpdateRule::sgd;
                else if (val == "adam") cfg.mow.rule = UpdateRule::adam;
                else p.fail("unknown update rule '" + val + "'");
            } else if (key == "eta") cfg.mow.eta = p.to_double(val);
            else if (key == "beta1") cfg.mow.adam.beta1 = p.to_double(val);
            else if (key == "beta2") cfg.mow.adam.beta2 = p.to_double(val);
            else if (key == "eps_adam") cfg.mow.adam.eps = p.to_double(val);
            else if (key == "n") cfg.mow.n = static_cast<int>(p.to_int(val));
            else if (key == "k") cfg.mow.k = static_cast<int>(p.to_int(val));
            else if (key == "steps") cfg.mow.steps = p.to_int(val);
            else if (key == "seed") cfg.mow.seed = p.to_u64(val);
            else p.fail("unknown key '" + key + "' in [optimizer]");
        } else if (p.section == "run") {
            if (key == "eval_interval") cfg.run.eval_interval = p.to_int(val);
            else if (key == "out_dir") cfg.run.out_dir = p.resolve_path(val);
            else if (key == "resume") cfg.run.resume = p.resolve_path(val);
            else if (key == "eta_grid") cfg.run.eta_grid = p.to_double_list(val);
            else if (key == "seeds") cfg.run.seeds = static_cast<int>(p.to_int(val));
            else if (key == "k_list") cfg.run.k_list = p.to_int_list(val);
            else if (key == "threads") cfg.run.threads = static_cast<int>(p.to_int(val));
            else p.fail("unknown key '" + key + "' in [run]");
        } else if (p.section == "theorem") {
            if (key == "etas") cfg.theorem.etas = p.to_double_list(val);
            else if (key == "seeds") cfg.theorem.seeds = static_cast<int>(p.to_int(val));
            else if (key == "horizon") cfg.theorem.horizon = p.to_double(val);
            else if (key == "oracle_samples") cfg.theorem.oracle_samples = static_cast<int>(p.to_int(val));
            else if (key == "flow_dt") cfg.theorem.flow_dt = p.to_double(val);
            else if (key == "integrator") {
                if (val == "euler") cfg.theorem.integrator = FlowIntegrator::euler;
                else if (val == "heun") cfg.theorem.integrator = FlowIntegrator::heun;
                else p.fail("integrator must be euler or heun");
            } else p.fail("unknown key '" + key + "' in [theorem]");
        }
    }

    if (saw_encoder) cfg.net.encoder_layers = to_layers(p, enc_widths, enc_act);
    if (saw_decoder) cfg.net.decoder_layers = to_layers(p, dec_widths, dec_act);
    cfg.digest = fnv1a64(canonical);
    return cfg;
}

RunConfig parse_run_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read config file " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    RunConfig cfg = parse_run_config_text(
        ss.str(), std::filesystem::path(path).parent_path().string());
    cfg.source_path = path;
    return cfg;
}

LoadedData load_datasets(const DataConfig& cfg) {
    LoadedData out;
    if (cfg.kind == "idx") {
        if (cfg.path.empty()) throw ConfigError("[data] kind=idx requires path=");
        out.train = load_idx(cfg.path);
        if (!cfg.test_path.empty()) out.test = load_idx(cfg.test_path);
        return out;
    }
    SyntheticKind kind;
    if (cfg.kind == "gauss_mix") kind = SyntheticKind::gauss_mix;
    else if (cfg.kind == "ring") kind = SyntheticKind::ring;
    else if (cfg.kind == "grid_images") kind = SyntheticKind::grid_images;
    else throw ConfigError("[data] unknown kind '" + cfg.kind + "'");
    out.train = make_synthetic(kind, cfg.size, cfg.synth, cfg.seed);
    if (cfg.test_size > 0)
        out.test = make_synthetic(kind, cfg.test_size, cfg.synth, cfg.seed + 0x7E57ull);
    return out;
}

void resolve_net(NetSpec& net, const Dataset& train, bool had_model_section) {
    if (!had_model_section) {
        net.latent_dim = 2;
        net.encoder_layers = {{16, Activation::relu}};
        net.decoder_layers = {{16, Activation::relu}};
        net.output_activation = Activation::linear;
    }
    if (net.input_dim == 0) net.input_dim = static_cast<int>(train.dim());
    if (net.latent_dim == 0) net.latent_dim = std::min(2, net.input_dim);
    if (static_cast<Eigen::Index>(net.input_dim) != train.dim())
        throw ConfigError("model input_dim " + std::to_string(net.input_dim) +
                          " does not match dataset dimension " + std::to_string(train.dim()));
    net.validate();
}

}  // namespace mow
