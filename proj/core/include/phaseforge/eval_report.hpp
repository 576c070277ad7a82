#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "phaseforge/attacks.hpp"
#include "phaseforge/data.hpp"
#include "phaseforge/model.hpp"
#include "phaseforge/training.hpp"

namespace phaseforge {

/// Percentage of images whose argmax logit equals the label. Throws
/// std::invalid_argument on an empty set or mismatched lengths.
double accuracy(const Model<float>& model, std::span<const Image> images, std::span<const int> labels);
double accuracy(const Model<float>& model, const Dataset& dataset);

/// Accuracy on attacked images. Randomness (PGD random start) is derived
/// from `seed` per chunk, so the result does not depend on thread count.
double attack_accuracy(const Model<float>& model, std::span<const Image> images, std::span<const int> labels,
                       const AttackConfig& config, std::uint64_t seed = 0);
double attack_accuracy(const Model<float>& model, const Dataset& dataset, const AttackConfig& config,
                       std::uint64_t seed = 0);

using CorruptionCell = std::pair<std::string, int>;  // kind name, severity

struct EvalReport {
    std::optional<double> clean_acc;
    std::map<std::string, double> attack_accs;
    std::map<CorruptionCell, double> corruption_accs;
    std::map<std::string, std::string> provenance;

    /// Arithmetic mean of all corruption cells; empty when there are none.
    std::optional<double> corr_mean() const;
    /// Severity-averaged accuracy per corruption kind.
    std::map<std::string, double> per_kind_means() const;

    /// Throws std::invalid_argument when a percentage is outside [0, 100].
    void validate() const;
};

struct UniformityGap {
    double gap = 0.0;
    std::string highest;
    std::string lowest;
};

/// Max minus min of the per-kind means. Needs at least two kinds.
UniformityGap uniformity_gap(const EvalReport& report);

/// Per-kind mean of `high_kind` minus that of `low_kind`; the single-cell
/// framing used when quoting one corruption against another.
double pairing_gap(const EvalReport& report, std::string_view high_kind, std::string_view low_kind);

struct OverfitThresholds {
    double catastrophic_points = 50.0;
    double robust_points = 5.0;
};

struct OverfitFindings {
    std::optional<int> catastrophic;  // epoch index
    std::optional<int> robust;
};

/// catastrophic: first epoch with fgsm_acc - pgd_acc > catastrophic_points.
/// robust: first epoch after a learning-rate decay whose pgd_acc is more than
/// robust_points below the running maximum and stays there for the rest of
/// the log. Records without attack accuracies are skipped.
OverfitFindings overfit_scan(const TrainLog& log, const OverfitThresholds& thresholds = {});

/// report.csv: header `section,name,severity,value`, one row per metric cell
/// with value printed at full precision. A report with no cells yields the
/// header row only.
std::string report_to_csv(const EvalReport& report);
/// Corruption cells only, header `kind,severity,accuracy`.
std::string corruption_csv(const EvalReport& report);
EvalReport report_from_csv(std::string_view text);

std::string report_to_json(const EvalReport& report);
EvalReport report_from_json(std::string_view text);

struct Series {
    std::string name;
    std::vector<double> x;
    std::vector<double> y;
};

/// Self-contained SVG line chart with axes and legend; one polyline per series.
std::string svg_line_chart(std::string_view title, std::string_view x_label, std::string_view y_label,
                           std::span<const Series> series);
/// Curves of the TrainLog: clean, and FGSM / PGD when recorded.
std::string svg_training_curves(const TrainLog& log);
/// Bar chart of clean, attack and per-kind corruption accuracies.
std::string svg_report(const EvalReport& report);

}  // namespace phaseforge
