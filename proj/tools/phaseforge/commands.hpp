#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>

#include "phaseforge/data.hpp"
#include "phaseforge/model.hpp"
#include "run_config.hpp"

namespace phaseforge::cli {

inline constexpr const char* kVersion = "0.1.0";

/// Train or test split described by the data.* keys. Synthetic splits are
/// seeded from the run seed so train and eval see the same images.
Dataset load_split(const RunConfig& config, Split split);

/// model.arch is either a preset name or architecture text.
Architecture resolve_architecture(const RunConfig& config, const Shape& input);

/// Freshly initialized model for a run: model.arch seeded from the run seed.
Model<float> initial_model(const RunConfig& config, const Shape& input);

struct AugmentOptions {
    std::filesystem::path input;
    std::filesystem::path output;
    std::string mode;  // phase | swap | aa | ap
    std::optional<std::filesystem::path> partner;
    std::optional<std::filesystem::path> checkpoint;
    std::optional<std::filesystem::path> spectra_dir;
};

/// Reads CIFAR-layout images, writes the augmented images in the same layout.
/// aa/ap attack the images with attack.* using the checkpoint, or a fresh
/// model.arch initialized from the seed when no checkpoint is given.
void cmd_augment(const RunConfig& config, const AugmentOptions& options, std::ostream& log);

/// Runs training into `<out_root>/<config hash>-s<seed>` and returns that
/// directory. It holds config.txt, train.csv, timing.csv, model.ckpt and
/// curves.svg, plus checkpoints/ when train.checkpoint_every > 0.
std::filesystem::path cmd_train(const RunConfig& config, const std::filesystem::path& out_root, std::ostream& log);

/// Clean, FGSM, PGD and corruption accuracies of a checkpoint; writes
/// report.csv, report.json, report.svg and corruptions.csv into `out_dir`.
void cmd_eval(const RunConfig& config, const std::filesystem::path& checkpoint, const std::filesystem::path& out_dir,
              std::ostream& log);

/// Summarizes run directories: summary.csv plus one curves SVG per run.
void cmd_report(std::span<const std::filesystem::path> run_dirs, const std::filesystem::path& out_dir,
                std::ostream& log);

}  // namespace phaseforge::cli
