#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "oracles.hpp"
#include "phaseforge/eval_report.hpp"
#include "phaseforge/ops.hpp"
#include "phaseforge/spectrum.hpp"
#include "phaseforge/training.hpp"

using namespace phaseforge;

namespace {

Tensor32 images_to_batch(const std::vector<Image>& images) { return stack_images<float>(std::span<const Image>(images)); }

std::vector<Image> random_images(std::mt19937_64& rng, std::size_t n, std::size_t side = 32) {
    std::vector<Image> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back(oracle::random_image(rng, 3, side, side));
    return out;
}

TrainConfig quick_config(Objective objective, TrainMode mode) {
    TrainConfig cfg;
    cfg.objective = objective;
    cfg.mode = mode;
    cfg.epochs = 2;
    cfg.batch_size = 8;
    cfg.lr = 0.05;
    cfg.lr_decay_epochs = {1};
    cfg.attack = {AttackKind::pgd, 8.0 / 255.0, 2.0 / 255.0, 2, true};
    cfg.eval_attacks = false;
    cfg.augment.flip = false;
    cfg.seed = 3;
    return cfg;
}

std::vector<std::vector<float>> parameter_values(const Model32& model) {
    std::vector<std::vector<float>> out;
    for (const auto& p : model.parameters()) out.push_back(p.value.values());
    return out;
}

}  // namespace

TEST(TrainConfig, ObjectiveModeCompatibility) {
    TrainConfig cfg;
    cfg.objective = Objective::trades;
    cfg.mode = TrainMode::c_and_aa;
    EXPECT_THROW(cfg.validate(), std::invalid_argument);
    cfg.mode = TrainMode::aa;
    EXPECT_NO_THROW(cfg.validate());
    cfg.objective = Objective::standard;
    EXPECT_THROW(cfg.validate(), std::invalid_argument);
    cfg.mode = TrainMode::apr_p;
    EXPECT_NO_THROW(cfg.validate());
    cfg.objective = Objective::adv;
    cfg.mode = TrainMode::clean;
    EXPECT_THROW(cfg.validate(), std::invalid_argument);
}

TEST(TrainConfig, RangeChecks) {
    TrainConfig cfg;
    cfg.lr_decay_factor = 0.0;
    EXPECT_THROW(cfg.validate(), std::invalid_argument);
    cfg.lr_decay_factor = 1.0;
    EXPECT_NO_THROW(cfg.validate());
    cfg.beta = -1.0;
    EXPECT_THROW(cfg.validate(), std::invalid_argument);
    cfg.beta = 1.0;
    cfg.batch_size = 0;
    EXPECT_THROW(cfg.validate(), std::invalid_argument);
}

TEST(TrainConfig, EnumNamesRoundTrip) {
    for (auto m : {TrainMode::clean, TrainMode::adv, TrainMode::aa, TrainMode::ap, TrainMode::c_and_adv,
                   TrainMode::c_and_aa, TrainMode::c_and_ap, TrainMode::apr_p, TrainMode::swap_label_policy}) {
        EXPECT_EQ(parse_mode(mode_name(m)), m);
    }
    for (auto o : {Objective::standard, Objective::adv, Objective::trades}) EXPECT_EQ(parse_objective(objective_name(o)), o);
    for (auto p : {LabelPolicy::phase_label, LabelPolicy::amplitude_label, LabelPolicy::both}) {
        EXPECT_EQ(parse_label_policy(label_policy_name(p)), p);
    }
    EXPECT_THROW(parse_mode("c&aa"), std::invalid_argument);
}

TEST(Schedule, DecaysAtConfiguredEpochs) {
    TrainConfig cfg;  // lr 0.01, decay 0.1 at 100 and 150
    EXPECT_DOUBLE_EQ(learning_rate_at(cfg, 0), 0.01);
    EXPECT_DOUBLE_EQ(learning_rate_at(cfg, 99), 0.01);
    EXPECT_NEAR(learning_rate_at(cfg, 100), 0.001, 1e-15);
    EXPECT_NEAR(learning_rate_at(cfg, 149), 0.001, 1e-15);
    EXPECT_NEAR(learning_rate_at(cfg, 150), 0.0001, 1e-15);
}

TEST(Schedule, CleanWarmupSwitchesToTheConfiguredObjective) {
    auto cfg = quick_config(Objective::trades, TrainMode::aa);
    cfg.clean_warmup_epochs = 3;
    for (int e = 0; e < 3; ++e) {
        const auto w = epoch_train_config(cfg, e);
        EXPECT_EQ(w.objective, Objective::standard);
        EXPECT_EQ(w.mode, TrainMode::clean);
    }
    const auto later = epoch_train_config(cfg, 3);
    EXPECT_EQ(later.objective, Objective::trades);
    EXPECT_EQ(later.mode, TrainMode::aa);

    // Standard objectives keep their augmentation mode.
    auto swap = quick_config(Objective::standard, TrainMode::apr_p);
    swap.clean_warmup_epochs = 3;
    EXPECT_EQ(epoch_train_config(swap, 0).mode, TrainMode::apr_p);

    cfg.clean_warmup_epochs = -1;
    EXPECT_THROW(cfg.validate(), std::invalid_argument);
}

TEST(BatchImages, CleanModeIsBitIdentical) {
    std::mt19937_64 rng(1);
    const auto model = Model32::build(preset_architecture("smallcnn-k4"), 1);
    const auto x = images_to_batch(random_images(rng, 3));
    const std::vector<int> y{0, 1, 2};
    Rng r(0);
    const auto out = make_batch_images(model, x, y, quick_config(Objective::standard, TrainMode::clean), r);
    EXPECT_EQ(out.images.values(), x.values());
    EXPECT_EQ(out.labels, y);
}

TEST(BatchImages, ZeroBudgetAmplitudeSwapReturnsCleanBatch) {
    std::mt19937_64 rng(2);
    const auto model = Model32::build(preset_architecture("smallcnn-k4"), 1);
    const auto x = images_to_batch(random_images(rng, 3));
    const std::vector<int> y{3, 1, 2};
    for (auto mode : {TrainMode::aa, TrainMode::ap}) {
        auto cfg = quick_config(Objective::adv, mode);
        cfg.attack.epsilon = 0.0;
        Rng r(0);
        const auto out = make_batch_images(model, x, y, cfg, r);
        EXPECT_LT(linf_distance(out.images, x), 1e-6);
    }
}

TEST(BatchImages, CleanAndAdvDoublesBatchWithLabelsInOrder) {
    std::mt19937_64 rng(3);
    const auto model = Model32::build(preset_architecture("smallcnn-k4"), 1);
    const auto x = images_to_batch(random_images(rng, 3));
    const std::vector<int> y{3, 1, 2};
    for (auto mode : {TrainMode::c_and_adv, TrainMode::c_and_aa, TrainMode::c_and_ap}) {
        Rng r(0);
        const auto out = make_batch_images(model, x, y, quick_config(Objective::adv, mode), r);
        EXPECT_EQ(out.images.dim(0), 6u);
        EXPECT_EQ(out.labels, (std::vector<int>{3, 1, 2, 3, 1, 2}));
        const std::vector<float> head(out.images.data().begin(), out.images.data().begin() + x.numel());
        EXPECT_EQ(head, x.values());
    }
}

TEST(BatchImages, AprPairsSwapAmplitudes) {
    std::mt19937_64 rng(4);
    const auto model = Model32::build(preset_architecture("smallcnn-k4"), 1);
    const auto images = random_images(rng, 2);
    const auto x = images_to_batch(images);
    const std::vector<int> y{0, 1};
    const std::vector<std::size_t> swap{1, 0};
    Rng r(0);
    const auto out = make_batch_images(model, x, y, quick_config(Objective::standard, TrainMode::apr_p), r, swap);
    EXPECT_EQ(out.partners, swap);
    EXPECT_EQ(out.labels, y);
    const auto got = unstack_images(out.images);
    for (std::size_t i = 0; i < 2; ++i) {
        const auto r_i = swap_image(images[i], images[swap[i]]);
        EXPECT_EQ(got[i], r_i.image);
        const auto spectra = decompose(r_i.pre_clip);
        const auto donor = decompose(images[swap[i]]);
        double worst = 0.0;
        for (std::size_t k = 0; k < donor.amplitude.size(); ++k) {
            worst = std::max(worst, std::abs(spectra.amplitude[k] - donor.amplitude[k]));
        }
        EXPECT_LT(worst, 1e-6);
    }
}

TEST(BatchImages, SwapLabelPolicies) {
    std::mt19937_64 rng(5);
    const auto model = Model32::build(preset_architecture("smallcnn-k4"), 1);
    const auto x = images_to_batch(random_images(rng, 3));
    const std::vector<int> y{0, 1, 2};
    const std::vector<std::size_t> pi{2, 0, 0};
    auto cfg = quick_config(Objective::standard, TrainMode::swap_label_policy);
    Rng r(0);
    cfg.label_policy = LabelPolicy::phase_label;
    EXPECT_EQ(make_batch_images(model, x, y, cfg, r, pi).labels, y);
    cfg.label_policy = LabelPolicy::amplitude_label;
    EXPECT_EQ(make_batch_images(model, x, y, cfg, r, pi).labels, (std::vector<int>{2, 0, 0}));
    cfg.label_policy = LabelPolicy::both;
    const auto both = make_batch_images(model, x, y, cfg, r, pi);
    EXPECT_EQ(both.labels, (std::vector<int>{0, 1, 2, 2, 0, 0}));
    EXPECT_EQ(both.images.dim(0), 6u);
}

TEST(BatchImages, RejectsMismatchedModeAndBadPartners) {
    const auto model = Model32::build(preset_architecture("smallcnn-k4"), 1);
    const auto x = Tensor32::zeros({2, 3, 32, 32});
    const std::vector<int> y{0, 1};
    Rng r(0);
    EXPECT_THROW(make_batch_images(model, x, y, quick_config(Objective::trades, TrainMode::c_and_aa), r),
                 std::invalid_argument);
    const std::vector<std::size_t> bad{0, 5};
    EXPECT_THROW(make_batch_images(model, x, y, quick_config(Objective::standard, TrainMode::apr_p), r, bad),
                 std::out_of_range);
}

TEST(TrainStep, LinearOneStepMatchesHandGradient) {
    const Shape input{1, 2, 2};
    auto model = Model32::build(preset_architecture("linear-k2", input), 4);
    const std::vector<float> pixels{0.1f, 0.9f, 0.4f, 0.6f, 0.8f, 0.2f, 0.3f, 0.7f};
    const Tensor32 x({2, 1, 2, 2}, pixels);
    const std::vector<int> y{1, 0};

    // Hand gradient of mean cross-entropy: dW = mean_b (p_b - e_y) x_b^T, db = mean_b (p_b - e_y).
    const auto w = model.parameter("layer1.weight").value.values();
    const auto b = model.parameter("layer1.bias").value.values();
    std::vector<double> gw(8, 0.0), gb(2, 0.0);
    for (std::size_t n = 0; n < 2; ++n) {
        double logits[2];
        for (std::size_t k = 0; k < 2; ++k) {
            logits[k] = b[k];
            for (std::size_t i = 0; i < 4; ++i) logits[k] += static_cast<double>(w[k * 4 + i]) * pixels[n * 4 + i];
        }
        const double top = std::max(logits[0], logits[1]);
        const double z = std::exp(logits[0] - top) + std::exp(logits[1] - top);
        for (std::size_t k = 0; k < 2; ++k) {
            const double delta = std::exp(logits[k] - top) / z - (static_cast<int>(k) == y[n] ? 1.0 : 0.0);
            gb[k] += delta / 2.0;
            for (std::size_t i = 0; i < 4; ++i) gw[k * 4 + i] += delta * pixels[n * 4 + i] / 2.0;
        }
    }

    auto cfg = quick_config(Objective::standard, TrainMode::clean);
    cfg.momentum = 0.0;
    cfg.weight_decay = 0.0;
    SgdState state;
    Rng r(0);
    train_step(model, state, x, y, cfg, 0.1, r);
    const auto w1 = model.parameter("layer1.weight").value.values();
    const auto b1 = model.parameter("layer1.bias").value.values();
    for (std::size_t i = 0; i < 8; ++i) EXPECT_NEAR(w1[i], w[i] - 0.1 * gw[i], 1e-6) << i;
    for (std::size_t k = 0; k < 2; ++k) EXPECT_NEAR(b1[k], b[k] - 0.1 * gb[k], 1e-6) << k;
}

TEST(TrainStep, MomentumAndWeightDecayUpdateRule) {
    auto model = Model32::build(preset_architecture("linear-k2", {1, 1, 2}), 2);
    const auto theta0 = model.parameter("layer1.weight").value.values();
    SgdState state;
    const Gradients<float> none;
    // Zero gradient: v1 = wd * theta0, theta1 = theta0 - lr * v1.
    sgd_update(model, state, none, 0.5, 0.9, 0.1);
    const auto theta1 = model.parameter("layer1.weight").value.values();
    for (std::size_t i = 0; i < theta0.size(); ++i) {
        EXPECT_NEAR(theta1[i], theta0[i] - 0.5 * 0.1 * theta0[i], 1e-7);
    }
    // Second step: v2 = 0.9 v1 + wd * theta1.
    sgd_update(model, state, none, 0.5, 0.9, 0.1);
    const auto theta2 = model.parameter("layer1.weight").value.values();
    for (std::size_t i = 0; i < theta0.size(); ++i) {
        const double v1 = 0.1 * theta0[i];
        const double v2 = 0.9 * v1 + 0.1 * theta1[i];
        EXPECT_NEAR(theta2[i], theta1[i] - 0.5 * v2, 1e-7);
    }
}

TEST(TrainStep, ZeroGradientWithoutDecayLeavesParameters) {
    auto model = Model32::build(preset_architecture("smallcnn-k4"), 2);
    const auto before = parameter_values(model);
    SgdState state;
    sgd_update(model, state, Gradients<float>{}, 0.1, 0.9, 0.0);
    EXPECT_EQ(parameter_values(model), before);
}

TEST(TrainStep, TradesWithZeroBetaIsCrossEntropy) {
    std::mt19937_64 rng(6);
    const auto model = Model32::build(preset_architecture("smallcnn-k4"), 3);
    const auto x = images_to_batch(random_images(rng, 4));
    const std::vector<int> y{0, 1, 2, 3};
    const double ce = cross_entropy(model.forward(x), y).item();
    EXPECT_NEAR(trades_objective(model, x, Tensor32{}, y, 0.0).item(), ce, 1e-12);

    auto cfg = quick_config(Objective::trades, TrainMode::adv);
    cfg.beta = 0.0;
    auto copy = model;
    SgdState state;
    Rng r(0);
    EXPECT_NEAR(train_step(copy, state, x, y, cfg, 0.01, r), ce, 1e-12);
}

TEST(TrainStep, TradesTermIsNonNegative) {
    std::mt19937_64 rng(7);
    const auto model = Model32::build(preset_architecture("smallcnn-k4"), 3);
    const auto x = images_to_batch(random_images(rng, 4));
    const auto x2 = images_to_batch(random_images(rng, 4));
    const std::vector<int> y{0, 1, 2, 3};
    EXPECT_GE(trades_objective(model, x, x2, y, 6.0).item(), trades_objective(model, x, x2, y, 0.0).item());
}

TEST(TrainStep, NonFiniteLossAborts) {
    auto model = Model32::build(preset_architecture("linear-k2", {1, 2, 2}), 2);
    model.parameter("layer1.bias").value.mutable_data()[0] = std::numeric_limits<float>::quiet_NaN();
    SgdState state;
    Rng r(0);
    const std::vector<int> y{0};
    EXPECT_THROW(train_step(model, state, Tensor32::zeros({1, 1, 2, 2}), y,
                            quick_config(Objective::standard, TrainMode::clean), 0.1, r),
                 std::runtime_error);
}

TEST(Train, ZeroEpochsLeavesModelAndLogEmpty) {
    const auto ds = synth_dataset(SynthKind::bars, 8, 4, 1);
    const auto model = Model32::build(preset_architecture("smallcnn-k4"), 5);
    auto cfg = quick_config(Objective::adv, TrainMode::adv);
    cfg.epochs = 0;
    const auto result = train(model, ds, ds, cfg);
    EXPECT_TRUE(result.log.empty());
    EXPECT_EQ(parameter_values(result.model), parameter_values(model));
}

TEST(Train, SameSeedIsBitIdentical) {
    const auto train_set = synth_dataset(SynthKind::bars, 24, 4, 1);
    const auto eval_set = synth_dataset(SynthKind::bars, 8, 4, 2);
    const auto model = Model32::build(preset_architecture("smallcnn-k4"), 5);
    auto cfg = quick_config(Objective::adv, TrainMode::c_and_aa);
    cfg.eval_attacks = true;
    cfg.eval_pgd.steps = 2;
    const auto a = train(model, train_set, eval_set, cfg);
    const auto b = train(model, train_set, eval_set, cfg);
    EXPECT_EQ(parameter_values(a.model), parameter_values(b.model));
    EXPECT_EQ(a.log.to_csv(), b.log.to_csv());
    ASSERT_EQ(a.log.size(), 2u);
    EXPECT_TRUE(a.log.records[0].pgd_acc.has_value());
    EXPECT_NEAR(a.log.records[1].lr, 0.005, 1e-12);

    cfg.seed = 4;
    const auto c = train(model, train_set, eval_set, cfg);
    EXPECT_NE(parameter_values(a.model), parameter_values(c.model));
}

TEST(Train, ZeroBudgetAmplitudeSwapTrainsLikeClean) {
    const auto train_set = synth_dataset(SynthKind::bars, 24, 4, 1);
    const auto model = Model32::build(preset_architecture("smallcnn-k4"), 6);
    auto clean = quick_config(Objective::standard, TrainMode::clean);
    clean.epochs = 3;
    auto aa = clean;
    aa.objective = Objective::adv;
    aa.mode = TrainMode::aa;
    aa.attack.epsilon = 0.0;
    const auto a = train(model, train_set, train_set, clean);
    const auto b = train(model, train_set, train_set, aa);
    ASSERT_EQ(a.log.size(), b.log.size());
    for (std::size_t e = 0; e < a.log.size(); ++e) EXPECT_NEAR(a.log.records[e].loss, b.log.records[e].loss, 1e-6) << e;
}

TEST(Train, HookSeesEveryEpoch) {
    const auto ds = synth_dataset(SynthKind::blobs, 16, 4, 1);
    const auto model = Model32::build(preset_architecture("smallcnn-k4"), 5);
    auto cfg = quick_config(Objective::standard, TrainMode::clean);
    cfg.epochs = 3;
    std::vector<int> seen;
    TrainHooks hooks;
    hooks.on_epoch = [&](const TrainRecord& r, const Model32&) { seen.push_back(r.epoch); };
    train(model, ds, ds, cfg, hooks);
    EXPECT_EQ(seen, (std::vector<int>{0, 1, 2}));
}

TEST(Train, RejectsShapeMismatch) {
    const auto ds = synth_dataset(SynthKind::bars, 8, 4, 1);
    const auto model = Model32::build(preset_architecture("smallcnn-k4", {3, 16, 16}), 5);
    EXPECT_THROW(train(model, ds, ds, quick_config(Objective::standard, TrainMode::clean)), ShapeError);
}

TEST(TrainLog, CsvRoundTripAndStableHeader) {
    TrainLog log;
    log.records.push_back({0, 1.25, 40.0, 30.5, 20.25, 0.01, 3.2});
    log.records.push_back({1, 0.75, 60.0, std::nullopt, std::nullopt, 0.001, 3.3});
    const auto csv = log.to_csv();
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "epoch,loss,clean_acc,fgsm_acc,pgd_acc,lr,seconds");
    EXPECT_NE(csv.find("1,0.750000,60.0000,,,0.001,0\n"), std::string::npos) << csv;
    const auto back = TrainLog::parse_csv(csv);
    ASSERT_EQ(back.size(), 2u);
    EXPECT_EQ(back.records[0].pgd_acc, 20.25);
    EXPECT_FALSE(back.records[1].fgsm_acc.has_value());
    EXPECT_EQ(back.records[0].seconds, 0.0);
    EXPECT_NEAR(TrainLog::parse_csv(log.to_csv(true)).records[0].seconds, 3.2, 1e-9);
    EXPECT_THROW(TrainLog::parse_csv("epoch,loss\n"), std::invalid_argument);
}

TEST(Evaluation, AttackPassesDoNotMutateModel) {
    const auto ds = synth_dataset(SynthKind::bars, 12, 4, 1);
    const auto model = Model32::build(preset_architecture("smallcnn-k4"), 5);
    const auto before = parameter_values(model);
    attack_accuracy(model, ds, {AttackKind::pgd, 8.0 / 255.0, 2.0 / 255.0, 3, true}, 1);
    EXPECT_EQ(parameter_values(model), before);
}
