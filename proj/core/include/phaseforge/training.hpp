#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "phaseforge/attacks.hpp"
#include "phaseforge/data.hpp"
#include "phaseforge/model.hpp"

namespace phaseforge {

enum class Objective { standard, adv, trades };

enum class TrainMode { clean, adv, aa, ap, c_and_adv, c_and_aa, c_and_ap, apr_p, swap_label_policy };

/// Which label a swap image (phase of x, amplitude of x[pi]) is trained on.
enum class LabelPolicy { phase_label, amplitude_label, both };

std::string_view objective_name(Objective objective);
std::string_view mode_name(TrainMode mode);
std::string_view label_policy_name(LabelPolicy policy);
Objective parse_objective(std::string_view name);
TrainMode parse_mode(std::string_view name);
LabelPolicy parse_label_policy(std::string_view name);

/// True when `mode` may be combined with `objective`.
bool mode_allowed(Objective objective, TrainMode mode);

struct TrainConfig {
    Objective objective = Objective::adv;
    double beta = 1.0;  // TRADES only
    TrainMode mode = TrainMode::adv;
    LabelPolicy label_policy = LabelPolicy::phase_label;
    // Training-time attack; its objective field is overridden by `objective`.
    AttackConfig attack{AttackKind::pgd, 8.0 / 255.0, 2.0 / 255.0, 10, true};
    // Adversarial objectives train plainly on clean images for this many
    // epochs first. smallcnn-k4 collapses to a constant output when attacked
    // before it leaves the initial plateau.
    int clean_warmup_epochs = 0;

    int epochs = 200;
    std::size_t batch_size = 128;
    double lr = 0.01;
    std::vector<int> lr_decay_epochs{100, 150};
    double lr_decay_factor = 0.1;
    double momentum = 0.9;
    double weight_decay = 5e-4;
    std::uint64_t seed = 0;
    AugmentOps augment{};

    // Per-epoch evaluation recorded into the TrainLog.
    AttackConfig eval_fgsm{AttackKind::fgsm, 8.0 / 255.0, 8.0 / 255.0, 1, false};
    AttackConfig eval_pgd{AttackKind::pgd, 8.0 / 255.0, 2.0 / 255.0, 20, false};
    bool eval_attacks = true;
    std::size_t eval_subset = 0;  // 0 = whole evaluation set

    /// Throws std::invalid_argument on a bad value or an objective/mode mismatch.
    void validate() const;
};

/// lr * factor^(number of decay epochs <= epoch).
double learning_rate_at(const TrainConfig& config, int epoch);

/// The config train_step uses at `epoch`: standard objective on clean images
/// during the clean warmup, `config` itself afterwards.
TrainConfig epoch_train_config(const TrainConfig& config, int epoch);

struct BatchImages {
    Tensor<float> images;
    std::vector<int> labels;
    std::vector<std::size_t> partners;  // pi, for apr_p and swap_label_policy
};

/// Training inputs for one clean batch under config.mode. `partners` fixes
/// the swap index map; when empty it is drawn uniformly from `rng`.
BatchImages make_batch_images(const Model<float>& model, const Tensor<float>& x, std::span<const int> labels,
                              const TrainConfig& config, Rng& rng, std::span<const std::size_t> partners = {});

/// Recomposes AA (adversarial_amplitude = true) or AP images for a batch;
/// outputs are clipped to [0, 1].
Tensor<float> amplitude_swap_batch(const Tensor<float>& x, const Tensor<float>& x_adv, bool adversarial_amplitude);

/// CE(f(x), y) + beta * KL(f(x) || f(x_prime)). With beta = 0 the second
/// term is skipped and x_prime may be empty.
Tensor<float> trades_objective(const Model<float>& model, const Tensor<float>& x, const Tensor<float>& x_prime,
                               std::span<const int> labels, double beta, ParamGrad mode = ParamGrad::on);

struct SgdState {
    std::vector<std::vector<float>> velocity;
};

/// v <- momentum * v + g + weight_decay * theta; theta <- theta - lr * v.
void sgd_update(Model<float>& model, SgdState& state, const Gradients<float>& grads, double lr, double momentum,
                double weight_decay);

/// One optimizer step on a clean batch; returns the objective value before
/// the update. Throws std::runtime_error on a non-finite loss.
double train_step(Model<float>& model, SgdState& state, const Tensor<float>& x, std::span<const int> labels,
                  const TrainConfig& config, double lr, Rng& rng);

struct TrainRecord {
    int epoch = 0;
    double loss = 0.0;
    double clean_acc = 0.0;
    std::optional<double> fgsm_acc;
    std::optional<double> pgd_acc;
    double lr = 0.0;
    double seconds = 0.0;
};

struct TrainLog {
    std::vector<TrainRecord> records;

    bool empty() const { return records.empty(); }
    std::size_t size() const { return records.size(); }

    /// Header: epoch,loss,clean_acc,fgsm_acc,pgd_acc,lr,seconds. Missing
    /// attack accuracies are empty cells. Wall time varies between runs, so
    /// it is written as 0 unless `wall_time` is set.
    std::string to_csv(bool wall_time = false) const;
    static TrainLog parse_csv(std::string_view text);
};

struct TrainHooks {
    std::function<void(const TrainRecord&, const Model<float>&)> on_epoch;
};

struct TrainResult {
    Model<float> model;
    TrainLog log;
};

/// Runs config.epochs epochs of shuffled mini-batch training. Shuffling,
/// augmentation and attack randomness come from separate streams keyed by
/// (seed, epoch), so results are reproducible bit for bit.
TrainResult train(Model<float> model, const Dataset& train_set, const Dataset& eval_set, const TrainConfig& config,
                  const TrainHooks& hooks = {});

}  // namespace phaseforge
