#include <iostream>

#include "CLI11.hpp"
#include "disbelief/runner.hpp"

using namespace disbelief;

namespace {

ExperimentConfig load(const std::string& path, const std::optional<std::uint64_t>& seed_override) {
    auto cfg = load_experiment_config(path);
    if (seed_override) cfg.seeds = {*seed_override};
    return cfg;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Belief-state meta-RL experiments: train, probe, evaluate, plot and check against the exact filter"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kVersion);

    std::string config, checkpoint, out;
    std::optional<std::uint64_t> seed_override;
    bool force = false;
    std::vector<std::string> inputs;
    std::string title;
    std::optional<std::size_t> episode;

    auto common = [&](CLI::App* cmd, bool needs_checkpoint) {
        cmd->add_option("--config", config, "experiment config (YAML)")->required()->check(CLI::ExistingFile);
        cmd->add_option("--seed-override", seed_override, "replace the config's seed list with this seed");
        cmd->add_option("--out", out, "output directory");
        cmd->add_flag("--force", force, "overwrite existing outputs");
        if (needs_checkpoint)
            cmd->add_option("--checkpoint", checkpoint, "checkpoint file")->required()->check(CLI::ExistingFile);
    };
    auto* train = app.add_subcommand("train", "train every configured seed into a run directory");
    common(train, false);
    auto* probe = app.add_subcommand("probe", "logistic-regression probes of a trained model");
    common(probe, true);
    auto* eval = app.add_subcommand("eval", "greedy per-timestep reward curve of a trained agent");
    common(eval, true);
    auto* oracle = app.add_subcommand("oracle-check", "compare a trained ChainWorld belief with the exact filter");
    common(oracle, true);
    auto* plot = app.add_subcommand("plot", "overlay reward-curve or learning-curve CSVs into one SVG");
    plot->add_option("inputs", inputs, "CSV files")->required()->check(CLI::ExistingFile);
    plot->add_option("--out", out, "output SVG path")->required();
    plot->add_option("--title", title, "plot title");
    plot->add_option("--episode", episode, "learning curves: episode index to plot (default: last)");
    plot->add_flag("--force", force, "overwrite an existing SVG");

    CLI11_PARSE(app, argc, argv);

    try {
        if (train->parsed()) {
            auto cfg = load(config, seed_override);
            const fs::path dir = out.empty() ? fs::path(cfg.output_dir) : fs::path(out);
            auto m = cmd_train(cfg, dir, force, std::cout);
            std::size_t failed = 0;
            for (const auto& s : m.seeds) failed += s.status == SeedStatus::Failed;
            std::cout << "run directory " << dir.string() << ": " << m.seeds.size() - failed << " of " << m.seeds.size()
                      << " seeds completed\n";
            return failed ? 1 : 0;
        }
        if (plot->parsed()) {
            std::vector<fs::path> paths(inputs.begin(), inputs.end());
            cmd_plot(paths, out, PlotOptions{title, episode}, force);
            return 0;
        }
        auto cfg = load(config, seed_override);
        const fs::path dir = out.empty() ? default_output_dir(checkpoint) : fs::path(out);
        if (probe->parsed()) cmd_probe(cfg, checkpoint, dir, force, std::cout);
        else if (eval->parsed()) cmd_eval(cfg, checkpoint, dir, force, std::cout);
        else if (oracle->parsed()) cmd_oracle_check(cfg, checkpoint, dir, force, std::cout);
        return 0;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
