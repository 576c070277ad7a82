#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "commands.hpp"

namespace fs = std::filesystem;
using namespace phaseforge::cli;

namespace {

struct ConfigFlags {
    std::string preset;
    std::string config_file;
    std::vector<std::string> sets;
    std::optional<long> seed;

    void attach(CLI::App& app) {
        app.add_option("--preset", preset, "Named preset applied before --config");
        app.add_option("--config", config_file, "key = value config file");
        app.add_option("--set", sets, "key=value override, repeatable");
        app.add_option("--seed", seed, "Seed, overrides every other source");
    }

    // defaults < preset < run config < config file < --set < --seed
    RunConfig resolve(const fs::path& run_config = {}) const {
        RunConfig config;
        if (!preset.empty()) apply_preset(config, preset);
        if (!run_config.empty()) config.merge_file(run_config);
        if (!config_file.empty()) config.merge_file(config_file);
        for (const auto& s : sets) config.set(s);
        if (seed) config.set("seed", std::to_string(*seed));
        config.seed();
        return config;
    }
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Frequency-domain adversarial augmentation: training, attacks and evaluation"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kVersion);

    ConfigFlags train_flags, eval_flags, augment_flags;
    std::string train_out = "runs";

    auto* train_cmd = app.add_subcommand("train", "Train a model; writes a run directory named by config hash and seed");
    train_flags.attach(*train_cmd);
    train_cmd->add_option("--out", train_out, "Root directory for run directories");

    auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on clean, attacked and corrupted data");
    eval_flags.attach(*eval_cmd);
    std::string eval_run, eval_checkpoint, eval_out;
    eval_cmd->add_option("--run", eval_run, "Run directory; supplies config.txt and model.ckpt");
    eval_cmd->add_option("--checkpoint", eval_checkpoint, "Checkpoint file (overrides the run's model.ckpt)");
    eval_cmd->add_option("--out", eval_out, "Output directory (default: the run directory)");

    auto* augment_cmd = app.add_subcommand("augment", "Write phase, swap, AA or AP images in CIFAR binary layout");
    augment_flags.attach(*augment_cmd);
    AugmentOptions augment_opts;
    std::string partner, checkpoint, spectra;
    augment_cmd->add_option("--input", augment_opts.input, "CIFAR-layout input file")->required();
    augment_cmd->add_option("--output", augment_opts.output, "CIFAR-layout output file")->required();
    augment_cmd->add_option("--mode", augment_opts.mode, "phase | swap | aa | ap")->required();
    augment_cmd->add_option("--partner", partner, "Amplitude donors for swap mode");
    augment_cmd->add_option("--checkpoint", checkpoint, "Model attacked in aa/ap mode");
    augment_cmd->add_option("--spectra", spectra, "Directory for per-image amplitude/phase CSV dumps");

    auto* report_cmd = app.add_subcommand("report", "Summarize run directories and flag overfitting");
    std::vector<std::string> report_runs;
    std::string report_out = "report";
    report_cmd->add_option("runs", report_runs, "Run directories")->required();
    report_cmd->add_option("--out", report_out, "Output directory");

    app.add_subcommand("presets", "List preset names");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (train_cmd->parsed()) {
            cmd_train(train_flags.resolve(), train_out, std::cout);
        } else if (eval_cmd->parsed()) {
            RunConfig config;
            fs::path ckpt = eval_checkpoint;
            fs::path out = eval_out;
            if (!eval_run.empty()) {
                config = eval_flags.resolve(fs::path(eval_run) / "config.txt");
                if (ckpt.empty()) ckpt = fs::path(eval_run) / "model.ckpt";
                if (out.empty()) out = eval_run;
            } else {
                config = eval_flags.resolve();
                if (ckpt.empty()) throw ConfigError("eval needs --run or --checkpoint");
                if (out.empty()) out = ".";
            }
            cmd_eval(config, ckpt, out, std::cout);
        } else if (augment_cmd->parsed()) {
            if (!partner.empty()) augment_opts.partner = partner;
            if (!checkpoint.empty()) augment_opts.checkpoint = checkpoint;
            if (!spectra.empty()) augment_opts.spectra_dir = spectra;
            cmd_augment(augment_flags.resolve(), augment_opts, std::cout);
        } else if (report_cmd->parsed()) {
            std::vector<fs::path> runs(report_runs.begin(), report_runs.end());
            cmd_report(runs, report_out, std::cout);
        } else {
            for (const auto& [name, text] : presets()) std::cout << name << '\n';
        }
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
