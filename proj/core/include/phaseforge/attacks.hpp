#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "phaseforge/model.hpp"

namespace phaseforge {

using Rng = std::mt19937_64;

enum class AttackKind { fgsm, pgd };
enum class AttackObjective { cross_entropy_vs_label, kl_vs_clean_logits };

/// l-infinity attack parameters. Budgets are in pixel units on [0, 1] images.
struct AttackConfig {
    AttackKind kind = AttackKind::pgd;
    double epsilon = 8.0 / 255.0;
    double alpha = 2.0 / 255.0;
    int steps = 20;
    bool random_start = false;
    AttackObjective objective = AttackObjective::cross_entropy_vs_label;

    /// Throws std::invalid_argument when epsilon < 0, or, for PGD, alpha <= 0 or steps < 1.
    void validate() const;
    std::string describe() const;
};

/// Objective value recorded at the start and after every step.
struct AttackTrace {
    std::vector<double> objective;
};

/// clip_[0,1](x + eps * sign(grad_x loss)); sign(0) = 0.
template <typename T>
Tensor<T> fgsm(const Model<T>& model, const Tensor<T>& x, std::span<const int> labels, const AttackConfig& config);

/// Projected sign-gradient ascent on cross-entropy inside the eps-ball
/// intersected with [0, 1]. Random start draws uniformly from the ball.
template <typename T>
Tensor<T> pgd(const Model<T>& model, const Tensor<T>& x, std::span<const int> labels, const AttackConfig& config,
              Rng& rng, AttackTrace* trace = nullptr);

/// Inner maximizer of the TRADES objective: ascent on
/// KL(softmax f(x) || softmax f(x')) with f(x) held constant.
template <typename T>
Tensor<T> trades_inner(const Model<T>& model, const Tensor<T>& x, const AttackConfig& config, Rng& rng,
                       AttackTrace* trace = nullptr);

/// Dispatches on config.kind / config.objective.
template <typename T>
Tensor<T> run_attack(const Model<T>& model, const Tensor<T>& x, std::span<const int> labels,
                     const AttackConfig& config, Rng& rng);

/// Largest |a - b| over all elements.
template <typename T>
double linf_distance(const Tensor<T>& a, const Tensor<T>& b);

}  // namespace phaseforge
