#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mow/commands.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Moving-window training for latent-matching autoencoders"};
    app.require_subcommand(1);

    std::string config_path;
    auto* train = app.add_subcommand("train", "run one training configuration");
    train->add_option("config", config_path, "config file")->required();

    std::string compare_config;
    std::vector<int> k_list;
    auto* compare = app.add_subcommand("compare", "grid of batch regimes (k x eta x seed)");
    compare->add_option("config", compare_config, "config file")->required();
    compare->add_option("--k", k_list, "override [run] k_list");

    std::string theorem_config;
    auto* verify = app.add_subcommand("verify-theorem",
                                      "check convergence of the iterate path to the gradient flow");
    verify->add_option("config", theorem_config, "config file")->required();

    std::string checkpoint_path, mode = "prior", out_prefix = "samples", data_config;
    int count = 16;
    uint64_t sample_seed = 0;
    auto* sample = app.add_subcommand("sample", "decode outputs from a trained checkpoint");
    sample->add_option("checkpoint", checkpoint_path, "checkpoint file")->required();
    sample->add_option("--count", count, "number of samples (pairs for reconstruct)");
    sample->add_option("--mode", mode, "prior | reconstruct | interpolate");
    sample->add_option("--out", out_prefix, "output prefix for .bin/.csv");
    sample->add_option("--data", data_config, "config supplying the dataset");
    sample->add_option("--seed", sample_seed, "prior draw seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return mow::kExitConfig;
    }

    if (train->parsed()) return mow::cmd_train(config_path, std::cout);
    if (compare->parsed()) return mow::cmd_compare(compare_config, k_list, std::cout);
    if (verify->parsed()) return mow::cmd_verify_theorem(theorem_config, std::cout);
    if (sample->parsed())
        return mow::cmd_sample(checkpoint_path, count, mode, out_prefix, data_config,
                               sample_seed, std::cout);
    return mow::kExitConfig;
}
