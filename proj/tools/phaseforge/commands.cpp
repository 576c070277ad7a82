#include "commands.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>

#include "phaseforge/attacks.hpp"
#include "phaseforge/corruptions.hpp"
#include "phaseforge/eval_report.hpp"
#include "phaseforge/random.hpp"
#include "phaseforge/spectrum.hpp"
#include "phaseforge/training.hpp"

namespace phaseforge::cli {
namespace fs = std::filesystem;
namespace {

// Seed streams derived from the run seed, kept apart from the training streams.
enum : std::uint64_t {
    train_data_stream = 101,
    test_data_stream = 102,
    init_stream = 103,
    corruption_stream = 104,
    augment_attack_stream = 105,
};

void write_text(const fs::path& path, std::string_view text) {
    std::ofstream out(path, std::ios::binary);
    out << text;
    if (!out) throw std::runtime_error("cannot write " + path.string());
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    std::ostringstream text;
    text << in.rdbuf();
    return text.str();
}

std::string format(const char* fmt, double v) {
    char buffer[64];
    std::snprintf(buffer, sizeof buffer, fmt, v);
    return buffer;
}

std::string header_comment(const RunConfig& config) {
    return "# phaseforge " + std::string(kVersion) + ", corruption table v" + std::to_string(kCorruptionTableVersion) +
           ", config hash " + config.config_hash() + "\n";
}

std::string spectra_csv(const Image& image) {
    const AmpPhase s = decompose(image);
    std::string out = "channel,u,v,amplitude,phase\n";
    char buffer[128];
    for (std::size_t c = 0; c < s.channels; ++c) {
        for (std::size_t u = 0; u < s.height; ++u) {
            for (std::size_t v = 0; v < s.width; ++v) {
                const std::size_t i = c * s.plane_size() + u * s.width + v;
                std::snprintf(buffer, sizeof buffer, "%zu,%zu,%zu,%.17g,%.17g\n", c, u, v, s.amplitude[i], s.phase[i]);
                out += buffer;
            }
        }
    }
    return out;
}

Model<float> augment_model(const RunConfig& config, const AugmentOptions& options, const Shape& input) {
    if (options.checkpoint) return load_checkpoint(*options.checkpoint);
    return initial_model(config, input);
}

std::vector<Image> attack_images(const Model<float>& model, const Dataset& data, const AttackConfig& attack,
                                 std::uint64_t seed) {
    std::vector<Image> out;
    out.reserve(data.size());
    Rng rng(seed);
    constexpr std::size_t chunk = 100;
    for (std::size_t begin = 0; begin < data.size(); begin += chunk) {
        const std::size_t end = std::min(data.size(), begin + chunk);
        const auto x = stack_images<float>(std::span<const Image>(data.images.data() + begin, end - begin));
        const auto x_adv =
            run_attack(model, x, std::span<const int>(data.labels.data() + begin, end - begin), attack, rng);
        for (auto& image : unstack_images(x_adv)) out.push_back(std::move(image));
    }
    return out;
}

TrainLog read_log(const fs::path& run_dir) { return TrainLog::parse_csv(read_text(run_dir / "train.csv")); }

std::string optional_cell(const std::optional<double>& v) { return v ? format("%.4f", *v) : std::string(); }

}  // namespace

Dataset load_split(const RunConfig& config, Split split) {
    const auto& source = config.get("data.source");
    const bool train = split == Split::train;
    if (source == "synth") {
        SynthKind kind;
        try {
            kind = parse_synth_kind(config.get("data.synth_kind"));
        } catch (const std::invalid_argument& e) {
            throw ConfigError(std::string("data.synth_kind: ") + e.what());
        }
        const long count = config.integer(train ? "data.train_count" : "data.test_count");
        const long classes = config.integer("data.classes");
        if (count < 1) throw ConfigError("data: image counts must be >= 1");
        if (classes < 2 || static_cast<std::size_t>(classes) > synth_capacity(kind)) {
            throw ConfigError("data.classes: " + config.get("data.synth_kind") + " supports 2.." +
                              std::to_string(synth_capacity(kind)) + " classes");
        }
        return synth_dataset(kind, static_cast<std::size_t>(count), static_cast<std::size_t>(classes),
                             derive_seed(config.seed(), train ? train_data_stream : test_data_stream), split);
    }
    if (source == "cifar") {
        const auto names = config.list(train ? "data.train_files" : "data.test_files");
        if (names.empty()) throw ConfigError(std::string(train ? "data.train_files" : "data.test_files") + " is empty");
        std::vector<fs::path> paths(names.begin(), names.end());
        return load_cifar_files(paths, split);
    }
    throw ConfigError("data.source must be synth or cifar, got '" + source + "'");
}

Architecture resolve_architecture(const RunConfig& config, const Shape& input) {
    const auto& text = config.get("model.arch");
    Architecture arch;
    try {
        const auto names = preset_names();
        if (std::find(names.begin(), names.end(), text) != names.end()) {
            arch = preset_architecture(text, input);
        } else {
            arch = Architecture::parse(text);
        }
        arch.trace_shapes();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("model.arch: ") + e.what());
    }
    if (arch.input != input) {
        throw ConfigError("model.arch expects input " + to_string(arch.input) + " but the data is " + to_string(input));
    }
    return arch;
}

Model<float> initial_model(const RunConfig& config, const Shape& input) {
    return Model<float>::build(resolve_architecture(config, input), derive_seed(config.seed(), init_stream));
}

void cmd_augment(const RunConfig& config, const AugmentOptions& options, std::ostream& log) {
    const auto& mode = options.mode;
    if (mode != "phase" && mode != "swap" && mode != "aa" && mode != "ap") {
        throw ConfigError("augment: mode must be phase, swap, aa or ap, got '" + mode + "'");
    }
    if (mode == "swap" && !options.partner) throw ConfigError("augment: mode swap needs --partner");

    const Dataset input = load_cifar_file(options.input);
    if (input.empty()) throw ConfigError("augment: no images in " + options.input.string());
    Dataset output;
    output.class_names = input.class_names;
    output.labels = input.labels;
    output.images.reserve(input.size());

    if (mode == "phase") {
        for (const auto& image : input.images) output.images.push_back(phase_image(image).image);
    } else if (mode == "swap") {
        const Dataset partner = load_cifar_file(*options.partner);
        if (partner.size() != input.size() && partner.size() != 1) {
            throw ConfigError("augment: partner file has " + std::to_string(partner.size()) + " images, expected " +
                              std::to_string(input.size()) + " or 1");
        }
        for (std::size_t i = 0; i < input.size(); ++i) {
            const Image& donor = partner.images[partner.size() == 1 ? 0 : i];
            output.images.push_back(swap_image(input.images[i], donor).image);
        }
    } else {
        const Model<float> model = augment_model(config, options, input.images.front().shape());
        AttackConfig attack = train_config(config).attack;
        const auto adversarial = attack_images(model, input, attack, derive_seed(config.seed(), augment_attack_stream));
        for (std::size_t i = 0; i < input.size(); ++i) {
            auto pair = adversarial_amplitude_swap(input.images[i], adversarial[i]);
            output.images.push_back(mode == "aa" ? std::move(pair.adversarial_amplitude.image)
                                                 : std::move(pair.adversarial_phase.image));
        }
    }

    if (options.output.has_parent_path()) fs::create_directories(options.output.parent_path());
    save_cifar_file(output, options.output);
    if (options.spectra_dir) {
        fs::create_directories(*options.spectra_dir);
        for (std::size_t i = 0; i < output.size(); ++i) {
            write_text(*options.spectra_dir / ("image_" + std::to_string(i) + ".csv"), spectra_csv(output.images[i]));
        }
    }
    log << "augment " << mode << ": " << output.size() << " images -> " << options.output.string() << '\n';
}

fs::path cmd_train(const RunConfig& config, const fs::path& out_root, std::ostream& log) {
    const TrainConfig train_cfg = train_config(config);
    const long checkpoint_every = config.integer("train.checkpoint_every");
    if (checkpoint_every < 0) throw ConfigError("train.checkpoint_every must be >= 0");
    const bool wall_time = config.flag("train.log_wall_time");

    const Dataset train_set = load_split(config, Split::train);
    const Dataset test_set = load_split(config, Split::test);
    Model<float> model = initial_model(config, train_set.images.front().shape());
    if (model.classes() < train_set.classes()) {
        throw ConfigError("model.arch has " + std::to_string(model.classes()) + " outputs for " +
                          std::to_string(train_set.classes()) + " classes");
    }

    const fs::path run_dir = out_root / (config.config_hash() + "-s" + std::to_string(config.seed()));
    fs::create_directories(run_dir);
    write_text(run_dir / "config.txt", header_comment(config) + config.resolved_text());
    if (checkpoint_every > 0) fs::create_directories(run_dir / "checkpoints");

    std::string timing = "epoch,seconds\n";
    TrainHooks hooks;
    hooks.on_epoch = [&](const TrainRecord& r, const Model<float>& m) {
        timing += std::to_string(r.epoch) + ',' + format("%.3f", r.seconds) + '\n';
        log << "epoch " << r.epoch << " loss " << format("%.4f", r.loss) << " clean " << format("%.1f", r.clean_acc);
        if (r.fgsm_acc) log << " fgsm " << format("%.1f", *r.fgsm_acc);
        if (r.pgd_acc) log << " pgd " << format("%.1f", *r.pgd_acc);
        log << " (" << format("%.1f", r.seconds) << "s)\n";
        log.flush();
        if (checkpoint_every > 0 && (r.epoch + 1) % checkpoint_every == 0) {
            save_checkpoint(m, run_dir / "checkpoints" / ("epoch_" + std::to_string(r.epoch) + ".ckpt"));
        }
    };
    const TrainResult result = train(std::move(model), train_set, test_set, train_cfg, hooks);

    save_checkpoint(result.model, run_dir / "model.ckpt");
    write_text(run_dir / "train.csv", result.log.to_csv(wall_time));
    write_text(run_dir / "timing.csv", timing);
    if (!result.log.records.empty()) write_text(run_dir / "curves.svg", svg_training_curves(result.log));
    log << "run directory " << run_dir.string() << '\n';
    return run_dir;
}

void cmd_eval(const RunConfig& config, const fs::path& checkpoint, const fs::path& out_dir, std::ostream& log) {
    const auto& split_name = config.get("eval.split");
    if (split_name != "test" && split_name != "train") throw ConfigError("eval.split must be test or train");
    const auto kinds = eval_corruptions(config);
    const auto severities = eval_severities(config);
    const bool attacks = config.flag("eval.attacks");
    const AttackConfig fgsm_cfg = eval_fgsm_config(config);
    const AttackConfig pgd_cfg = eval_pgd_config(config);
    try {
        fgsm_cfg.validate();
        pgd_cfg.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    const long subset = config.integer("eval.subset");
    if (subset < 0) throw ConfigError("eval.subset must be >= 0");

    const Model<float> model = load_checkpoint(checkpoint);
    Dataset data = load_split(config, split_name == "train" ? Split::train : Split::test);
    if (subset > 0 && static_cast<std::size_t>(subset) < data.size()) {
        data.images.resize(static_cast<std::size_t>(subset));
        data.labels.resize(static_cast<std::size_t>(subset));
    }
    const Shape input = data.images.front().shape();
    if (model.architecture().input != input) {
        throw ConfigError("checkpoint expects input " + to_string(model.architecture().input) + " but the data is " +
                          to_string(input));
    }
    if (model.classes() < data.classes()) {
        throw ConfigError("checkpoint has " + std::to_string(model.classes()) + " outputs for " +
                          std::to_string(data.classes()) + " classes");
    }

    EvalReport report;
    report.clean_acc = accuracy(model, data);
    log << "clean " << format("%.2f", *report.clean_acc) << '\n';
    const std::uint64_t seed = config.seed();
    if (attacks) {
        report.attack_accs["fgsm"] = attack_accuracy(model, data, fgsm_cfg, derive_seed(seed, 1));
        report.attack_accs["pgd"] = attack_accuracy(model, data, pgd_cfg, derive_seed(seed, 2));
        report.provenance["fgsm"] = fgsm_cfg.describe();
        report.provenance["pgd"] = pgd_cfg.describe();
        log << "fgsm " << format("%.2f", report.attack_accs["fgsm"]) << " pgd "
            << format("%.2f", report.attack_accs["pgd"]) << '\n';
    }
    if (!kinds.empty()) {
        const auto suite = corruption_suite(data, kinds, severities, derive_seed(seed, corruption_stream));
        for (const auto& [cell, images] : suite) {
            report.corruption_accs[{std::string(corruption_name(cell.first)), cell.second}] = accuracy(model, images);
        }
        log << "corruption mean " << format("%.2f", *report.corr_mean()) << '\n';
    }
    report.provenance["architecture"] = model.architecture().describe();
    report.provenance["split"] = split_name;
    report.provenance["images"] = std::to_string(data.size());
    report.provenance["seed"] = std::to_string(seed);
    report.provenance["config_hash"] = config.config_hash();
    report.provenance["corruption_table_version"] = std::to_string(kCorruptionTableVersion);
    report.provenance["version"] = kVersion;

    fs::create_directories(out_dir);
    write_text(out_dir / "report.csv", report_to_csv(report));
    write_text(out_dir / "report.json", report_to_json(report));
    write_text(out_dir / "report.svg", svg_report(report));
    if (!report.corruption_accs.empty()) write_text(out_dir / "corruptions.csv", corruption_csv(report));
    log << "report written to " << out_dir.string() << '\n';
}

void cmd_report(std::span<const fs::path> run_dirs, const fs::path& out_dir, std::ostream& log) {
    if (run_dirs.empty()) throw ConfigError("report: no run directories given");
    fs::create_directories(out_dir);
    std::string summary =
        "run,epochs,final_clean,final_fgsm,final_pgd,catastrophic_epoch,robust_epoch,eval_clean,eval_fgsm,eval_pgd,"
        "corr_mean\n";
    for (const auto& dir : run_dirs) {
        const TrainLog train_log = read_log(dir);
        const auto findings = overfit_scan(train_log);
        const std::string name = fs::path(dir).lexically_normal().filename().string().empty()
                                     ? fs::path(dir).lexically_normal().parent_path().filename().string()
                                     : fs::path(dir).lexically_normal().filename().string();
        std::string row = name + ',' + std::to_string(train_log.records.size()) + ',';
        if (train_log.records.empty()) {
            row += ",,,";
        } else {
            const auto& last = train_log.records.back();
            row += format("%.4f", last.clean_acc) + ',' + optional_cell(last.fgsm_acc) + ',' +
                   optional_cell(last.pgd_acc) + ',';
            write_text(out_dir / (name + "-curves.svg"), svg_training_curves(train_log));
        }
        row += (findings.catastrophic ? std::to_string(*findings.catastrophic) : "") + ',';
        row += (findings.robust ? std::to_string(*findings.robust) : "") + ',';
        if (fs::exists(dir / "report.csv")) {
            const EvalReport report = report_from_csv(read_text(dir / "report.csv"));
            auto attack = [&](const char* key) {
                const auto it = report.attack_accs.find(key);
                return it == report.attack_accs.end() ? std::optional<double>() : std::optional<double>(it->second);
            };
            row += optional_cell(report.clean_acc) + ',' + optional_cell(attack("fgsm")) + ',' +
                   optional_cell(attack("pgd")) + ',' + optional_cell(report.corr_mean());
        } else {
            row += ",,,";
        }
        summary += row + '\n';
        log << name << ": ";
        if (findings.catastrophic) log << "catastrophic overfitting at epoch " << *findings.catastrophic << "; ";
        if (findings.robust) log << "robust overfitting from epoch " << *findings.robust << "; ";
        if (!findings.catastrophic && !findings.robust) log << "no overfitting flagged; ";
        log << train_log.records.size() << " epochs\n";
    }
    write_text(out_dir / "summary.csv", summary);
    log << "summary written to " << (out_dir / "summary.csv").string() << '\n';
}

}  // namespace phaseforge::cli
