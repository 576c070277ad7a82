#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <regex>

#include "phaseforge/eval_report.hpp"

using namespace phaseforge;

namespace {

// Per-kind accuracies of two rows of the published 15-corruption table.
const std::vector<std::string> kKinds{"gaussian_noise", "shot_noise",  "impulse_noise", "defocus_blur", "glass_blur",
                                      "motion_blur",    "zoom_blur",   "snow",          "frost",        "fog",
                                      "brightness",     "contrast",    "elastic",       "pixelate",     "jpeg"};
const std::vector<double> kStdRow{75.5, 80.4, 76.0, 92.2, 70.6, 89.3, 90.9, 86.0, 86.7, 91.6, 93.3, 92.2, 86.3, 88.3, 79.3};
const std::vector<double> kAaRow{87.6, 87.9, 82.9, 86.9, 81.4, 85.2, 87.0, 85.6, 87.4, 81.7, 89.0, 84.4, 84.5, 87.2, 86.6};

EvalReport fixture(const std::vector<double>& row) {
    EvalReport report;
    for (std::size_t i = 0; i < kKinds.size(); ++i) report.corruption_accs[{kKinds[i], 1}] = row[i];
    return report;
}

Model32 two_pixel_model(std::vector<float> weight, std::vector<float> bias) {
    const auto arch = preset_architecture("linear-k2", {1, 1, 2});
    std::vector<Parameter<float>> params{{"layer1.weight", Tensor32({2, 2}, std::move(weight))},
                                         {"layer1.bias", Tensor32({2}, std::move(bias))}};
    return Model32::from_parameters(arch, std::move(params));
}

Dataset two_pixel_dataset(std::mt19937_64& rng, std::size_t n) {
    Dataset ds;
    ds.class_names = {"left", "right"};
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    for (std::size_t i = 0; i < n; ++i) {
        Image image(1, 1, 2);
        image.pixels = {u(rng), u(rng)};
        ds.labels.push_back(image.pixels[0] > image.pixels[1] ? 0 : 1);
        ds.images.push_back(image);
    }
    return ds;
}

TrainLog log_from(const std::vector<double>& fgsm, const std::vector<double>& pgd, const std::vector<double>& lr) {
    TrainLog log;
    for (std::size_t e = 0; e < pgd.size(); ++e) {
        log.records.push_back({static_cast<int>(e), 1.0, 80.0, fgsm[e], pgd[e], lr[e], 0.0});
    }
    return log;
}

}  // namespace

TEST(Accuracy, PerfectPredictorScoresHundred) {
    std::mt19937_64 rng(1);
    const auto ds = two_pixel_dataset(rng, 200);
    EXPECT_DOUBLE_EQ(accuracy(two_pixel_model({1, -1, -1, 1}, {0, 0}), ds), 100.0);
}

TEST(Accuracy, ConstantModelScoresMajorityFraction) {
    Dataset ds;
    ds.class_names = {"a", "b"};
    for (int i = 0; i < 10; ++i) {
        ds.images.emplace_back(1, 1, 2, 0.5f);
        ds.labels.push_back(i < 7 ? 0 : 1);
    }
    EXPECT_DOUBLE_EQ(accuracy(two_pixel_model({0, 0, 0, 0}, {1, 0}), ds), 70.0);
}

TEST(Accuracy, RandomModelNearChanceOnBalancedData) {
    const auto ds = synth_dataset(SynthKind::blobs, 1000, 4, 3);
    const auto model = Model32::build(preset_architecture("smallcnn-k4"), 17);
    const double acc = accuracy(model, ds);
    EXPECT_GE(acc, 18.0);
    EXPECT_LE(acc, 32.0);
}

TEST(Accuracy, PermutationInvariantAndRejectsEmpty) {
    std::mt19937_64 rng(2);
    auto ds = two_pixel_dataset(rng, 150);
    const auto model = two_pixel_model({0.3f, -1, 0.2f, 1}, {0.1f, 0});
    const double a = accuracy(model, ds);
    std::vector<std::size_t> order(ds.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), rng);
    Dataset shuffled = ds;
    for (std::size_t i = 0; i < order.size(); ++i) {
        shuffled.images[i] = ds.images[order[i]];
        shuffled.labels[i] = ds.labels[order[i]];
    }
    EXPECT_DOUBLE_EQ(accuracy(model, shuffled), a);
    EXPECT_THROW(accuracy(model, Dataset{}), std::invalid_argument);
}

TEST(Accuracy, ZeroBudgetAttackEqualsClean) {
    const auto ds = synth_dataset(SynthKind::bars, 120, 4, 4);
    const auto model = Model32::build(preset_architecture("smallcnn-k4"), 2);
    const double clean = accuracy(model, ds);
    EXPECT_DOUBLE_EQ(attack_accuracy(model, ds, {AttackKind::fgsm, 0.0}), clean);
    EXPECT_DOUBLE_EQ(attack_accuracy(model, ds, {AttackKind::pgd, 0.0, 2.0 / 255.0, 3, true}, 5), clean);
}

TEST(Uniformity, EqualKindsGiveZeroGap) {
    EvalReport report;
    for (const auto& kind : {"a", "b", "c"})
        for (int s = 1; s <= 5; ++s) report.corruption_accs[{kind, s}] = 60.0 + s;
    EXPECT_DOUBLE_EQ(uniformity_gap(report).gap, 0.0);
}

TEST(Uniformity, StandardRowFixture) {
    const auto gap = uniformity_gap(fixture(kStdRow));
    EXPECT_NEAR(gap.gap, 22.7, 1e-9);
    EXPECT_EQ(gap.highest, "brightness");
    EXPECT_EQ(gap.lowest, "glass_blur");
}

TEST(Uniformity, AmplitudeRowFixtureBothFramings) {
    const auto report = fixture(kAaRow);
    const auto gap = uniformity_gap(report);
    EXPECT_NEAR(gap.gap, 7.6, 1e-9);
    EXPECT_EQ(gap.highest, "brightness");
    EXPECT_NEAR(pairing_gap(report, "shot_noise", "glass_blur"), 6.5, 1e-9);
    EXPECT_THROW(pairing_gap(report, "shot_noise", "rain"), std::invalid_argument);
}

TEST(Uniformity, SeverityAveragedPerKind) {
    EvalReport report;
    report.corruption_accs[{"a", 1}] = 90.0;
    report.corruption_accs[{"a", 5}] = 50.0;
    report.corruption_accs[{"b", 1}] = 60.0;
    EXPECT_DOUBLE_EQ(uniformity_gap(report).gap, 10.0);
    EXPECT_NEAR(*report.corr_mean(), 200.0 / 3.0, 1e-12);
}

TEST(Uniformity, NeedsTwoKinds) {
    EvalReport report;
    report.corruption_accs[{"a", 1}] = 90.0;
    EXPECT_THROW(uniformity_gap(report), std::invalid_argument);
    EXPECT_FALSE(EvalReport{}.corr_mean().has_value());
}

TEST(Report, ValidateRange) {
    EvalReport report;
    report.clean_acc = 101.0;
    EXPECT_THROW(report.validate(), std::invalid_argument);
}

TEST(OverfitScan, MonotoneLogHasNoFindings) {
    const auto log = log_from({30, 35, 40, 45, 50}, {20, 25, 30, 35, 40}, {0.1, 0.1, 0.01, 0.01, 0.01});
    const auto f = overfit_scan(log);
    EXPECT_FALSE(f.catastrophic.has_value());
    EXPECT_FALSE(f.robust.has_value());
}

TEST(OverfitScan, CatastrophicFixture) {
    const auto log = log_from({40, 55, 97.1, 98}, {35, 42, 1.5, 0.4}, {0.1, 0.1, 0.1, 0.1});
    EXPECT_EQ(overfit_scan(log).catastrophic, 2);
}

TEST(OverfitScan, RobustOverfittingAfterDecay) {
    // Peak of 50 right after the decay at epoch 3, then a slide to 40.
    const std::vector<double> pgd{30, 35, 38, 50, 47, 44.5, 42, 40};
    const std::vector<double> lr{0.1, 0.1, 0.1, 0.01, 0.01, 0.01, 0.01, 0.01};
    const auto f = overfit_scan(log_from(pgd, pgd, lr));
    EXPECT_EQ(f.robust, 5);
    EXPECT_FALSE(f.catastrophic.has_value());
}

TEST(OverfitScan, RecoveredDipIsNotRobustOverfitting) {
    const std::vector<double> pgd{30, 50, 40, 49, 50};
    const std::vector<double> lr{0.1, 0.01, 0.01, 0.01, 0.01};
    EXPECT_FALSE(overfit_scan(log_from(pgd, pgd, lr)).robust.has_value());
}

TEST(ReportCsv, EmptyCorruptionMapGivesHeaderOnly) {
    EXPECT_EQ(corruption_csv(EvalReport{}), "kind,severity,accuracy\n");
    EXPECT_EQ(report_to_csv(EvalReport{}), "section,name,severity,value\n");
}

TEST(ReportCsv, RoundTripIsExact) {
    EvalReport report;
    report.clean_acc = 100.0 / 3.0;
    report.attack_accs["pgd"] = 12.345678901234567;
    report.attack_accs["fgsm"] = 0.1;
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.0, 100.0);
    for (const auto& kind : {"contrast", "pixelate"})
        for (int s = 1; s <= 5; ++s) report.corruption_accs[{kind, s}] = u(rng);
    const auto back = report_from_csv(report_to_csv(report));
    EXPECT_EQ(back.clean_acc, report.clean_acc);
    EXPECT_EQ(back.attack_accs, report.attack_accs);
    EXPECT_EQ(back.corruption_accs, report.corruption_accs);
    EXPECT_NEAR(*back.corr_mean(), *report.corr_mean(), 1e-6);
    EXPECT_THROW(report_from_csv("bogus\n"), std::invalid_argument);
}

TEST(ReportJson, RoundTripKeepsProvenance) {
    EvalReport report = fixture(kAaRow);
    report.clean_acc = 89.1;
    report.attack_accs["pgd"] = 50.1;
    report.provenance["pgd"] = "pgd epsilon=0.0313725 alpha=0.00784314 steps=20";
    const auto json = report_to_json(report);
    EXPECT_NE(json.find("\"uniformity_gap\""), std::string::npos);
    const auto back = report_from_json(json);
    EXPECT_EQ(back.provenance, report.provenance);
    EXPECT_EQ(back.corruption_accs, report.corruption_accs);
    EXPECT_EQ(back.clean_acc, report.clean_acc);
    EXPECT_THROW(report_from_json("{"), std::invalid_argument);
}

TEST(Svg, TwoSeriesGiveTwoPolylines) {
    const std::vector<Series> series{{"clean", {0, 1, 2}, {10, 20, 30}}, {"pgd", {0, 1, 2}, {5, 8, 9}}};
    const auto svg = svg_line_chart("curves", "epoch", "accuracy", series);
    const std::regex polyline("<polyline");
    EXPECT_EQ(std::distance(std::sregex_iterator(svg.begin(), svg.end(), polyline), std::sregex_iterator()), 2);
    EXPECT_EQ(svg.rfind("<svg", 0), 0u);
    EXPECT_NE(svg.find("</svg>"), std::string::npos);
    EXPECT_NE(svg.find(">pgd<"), std::string::npos);
}

TEST(Svg, TrainingCurvesSkipMissingSeries) {
    TrainLog log;
    log.records.push_back({0, 1.0, 50.0, std::nullopt, std::nullopt, 0.1, 0.0});
    log.records.push_back({1, 0.5, 60.0, std::nullopt, std::nullopt, 0.1, 0.0});
    const auto svg = svg_training_curves(log);
    const std::regex polyline("<polyline");
    EXPECT_EQ(std::distance(std::sregex_iterator(svg.begin(), svg.end(), polyline), std::sregex_iterator()), 1);
    EXPECT_NE(svg_report(fixture(kStdRow)).find("<rect"), std::string::npos);
}
