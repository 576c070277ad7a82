#include "phaseforge/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "phaseforge/ops.hpp"

namespace phaseforge {
namespace {

// Feasible set for one clean batch: [max(0, x - eps), min(1, x + eps)].
template <typename T>
struct FeasibleBox {
    std::vector<T> lo;
    std::vector<T> hi;

    FeasibleBox(std::span<const T> x, double epsilon) : lo(x.size()), hi(x.size()) {
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double v = static_cast<double>(x[i]);
            hi[i] = static_cast<T>(std::min(1.0, v + epsilon));
            lo[i] = std::min(static_cast<T>(std::max(0.0, v - epsilon)), hi[i]);
        }
    }

    T project(std::size_t i, T v) const { return std::clamp(v, lo[i], hi[i]); }
};

template <typename T>
T sign(T v) {
    return v > T{0} ? T{1} : (v < T{0} ? T{-1} : T{0});
}

void require_labels(std::size_t batch, std::span<const int> labels, std::size_t classes) {
    if (labels.size() != batch) {
        throw std::invalid_argument("attack: " + std::to_string(labels.size()) + " labels for a batch of " +
                                    std::to_string(batch));
    }
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= classes) {
            throw std::out_of_range("attack: label " + std::to_string(labels[i]) + " at index " + std::to_string(i) +
                                    " outside [0, " + std::to_string(classes) + ")");
        }
    }
}

template <typename T>
void require_batch(const Tensor<T>& x) {
    if (x.rank() != 4) throw ShapeError("attack: expected a [B, C, H, W] batch, got " + to_string(x.shape()));
}

// Objective value and its input gradient at `point`.
template <typename T, typename Loss>
std::pair<double, std::vector<T>> objective_and_gradient(const Model<T>& model, const Tensor<T>& point, Loss&& loss_fn) {
    Tensor<T> input(point.shape(), point.values(), true);
    const Tensor<T> loss = loss_fn(model.forward(input));
    const auto grads = backward(loss);
    return {static_cast<double>(loss.item()), grads.of(input)};
}

template <typename T, typename Loss>
double objective_only(const Model<T>& model, const Tensor<T>& point, Loss&& loss_fn) {
    return static_cast<double>(loss_fn(model.forward(point)).item());
}

template <typename T, typename Loss>
Tensor<T> sign_ascent(const Model<T>& model, const Tensor<T>& x, const AttackConfig& config, int steps, double step,
                      bool random_start, Rng* rng, AttackTrace* trace, Loss&& loss_fn) {
    const FeasibleBox<T> box(x.data(), config.epsilon);
    std::vector<T> current(x.data().begin(), x.data().end());
    if (random_start) {
        std::uniform_real_distribution<double> offset(-config.epsilon, config.epsilon);
        for (std::size_t i = 0; i < current.size(); ++i) {
            current[i] = box.project(i, static_cast<T>(static_cast<double>(current[i]) + offset(*rng)));
        }
    }
    const T step_size = static_cast<T>(step);
    Tensor<T> point(x.shape(), current);
    if (trace) trace->objective.clear();
    for (int s = 0; s < steps; ++s) {
        auto [value, grad] = objective_and_gradient(model, point, loss_fn);
        if (trace) trace->objective.push_back(value);
        for (std::size_t i = 0; i < current.size(); ++i) {
            current[i] = box.project(i, current[i] + step_size * sign(grad[i]));
        }
        point = Tensor<T>(x.shape(), current);
    }
    if (trace) trace->objective.push_back(objective_only(model, point, loss_fn));
    return point;
}

}  // namespace

void AttackConfig::validate() const {
    if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) {
        throw std::invalid_argument("attack: epsilon must be finite and >= 0, got " + std::to_string(epsilon));
    }
    if (kind == AttackKind::pgd) {
        if (!(alpha > 0.0) || !std::isfinite(alpha)) {
            throw std::invalid_argument("attack: pgd step size alpha must be > 0, got " + std::to_string(alpha));
        }
        if (steps < 1) throw std::invalid_argument("attack: pgd needs steps >= 1, got " + std::to_string(steps));
    }
}

std::string AttackConfig::describe() const {
    std::ostringstream out;
    out.precision(9);
    out << (kind == AttackKind::fgsm ? "fgsm" : "pgd") << " epsilon=" << epsilon;
    if (kind == AttackKind::pgd) out << " alpha=" << alpha << " steps=" << steps;
    out << " random_start=" << (random_start ? "true" : "false") << " objective="
        << (objective == AttackObjective::cross_entropy_vs_label ? "cross_entropy_vs_label" : "kl_vs_clean_logits");
    return out.str();
}

template <typename T>
Tensor<T> fgsm(const Model<T>& model, const Tensor<T>& x, std::span<const int> labels, const AttackConfig& config) {
    if (config.kind != AttackKind::fgsm) throw std::invalid_argument("fgsm: config kind must be fgsm");
    config.validate();
    require_batch(x);
    require_labels(x.dim(0), labels, model.classes());
    auto loss = [labels](const Tensor<T>& logits) { return cross_entropy(logits, labels); };
    return sign_ascent(model, x, config, 1, config.epsilon, false, nullptr, nullptr, loss);
}

template <typename T>
Tensor<T> pgd(const Model<T>& model, const Tensor<T>& x, std::span<const int> labels, const AttackConfig& config,
              Rng& rng, AttackTrace* trace) {
    if (config.kind != AttackKind::pgd) throw std::invalid_argument("pgd: config kind must be pgd");
    config.validate();
    require_batch(x);
    require_labels(x.dim(0), labels, model.classes());
    auto loss = [labels](const Tensor<T>& logits) { return cross_entropy(logits, labels); };
    return sign_ascent(model, x, config, config.steps, config.alpha, config.random_start, &rng, trace, loss);
}

template <typename T>
Tensor<T> trades_inner(const Model<T>& model, const Tensor<T>& x, const AttackConfig& config, Rng& rng,
                       AttackTrace* trace) {
    if (config.objective != AttackObjective::kl_vs_clean_logits) {
        throw std::invalid_argument("trades_inner: config objective must be kl_vs_clean_logits");
    }
    config.validate();
    require_batch(x);
    const Tensor<T> clean_logits = model.forward(x.detach());
    auto loss = [clean_logits](const Tensor<T>& logits) { return kl_divergence(clean_logits, logits); };
    const bool single = config.kind == AttackKind::fgsm;
    return sign_ascent(model, x, config, single ? 1 : config.steps, single ? config.epsilon : config.alpha,
                       config.random_start, &rng, trace, loss);
}

template <typename T>
Tensor<T> run_attack(const Model<T>& model, const Tensor<T>& x, std::span<const int> labels,
                     const AttackConfig& config, Rng& rng) {
    if (config.objective == AttackObjective::kl_vs_clean_logits) return trades_inner(model, x, config, rng);
    if (config.kind == AttackKind::fgsm) return fgsm(model, x, labels, config);
    return pgd(model, x, labels, config, rng);
}

template <typename T>
double linf_distance(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape() != b.shape()) throw ShapeError("linf_distance: " + to_string(a.shape()) + " vs " + to_string(b.shape()));
    double worst = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) {
        worst = std::max(worst, std::abs(static_cast<double>(a.data()[i]) - static_cast<double>(b.data()[i])));
    }
    return worst;
}

#define PHASEFORGE_INSTANTIATE_ATTACKS(T)                                                                         \
    template Tensor<T> fgsm(const Model<T>&, const Tensor<T>&, std::span<const int>, const AttackConfig&);         \
    template Tensor<T> pgd(const Model<T>&, const Tensor<T>&, std::span<const int>, const AttackConfig&, Rng&,     \
                           AttackTrace*);                                                                          \
    template Tensor<T> trades_inner(const Model<T>&, const Tensor<T>&, const AttackConfig&, Rng&, AttackTrace*);   \
    template Tensor<T> run_attack(const Model<T>&, const Tensor<T>&, std::span<const int>, const AttackConfig&,    \
                                  Rng&);                                                                           \
    template double linf_distance(const Tensor<T>&, const Tensor<T>&);

PHASEFORGE_INSTANTIATE_ATTACKS(float)
PHASEFORGE_INSTANTIATE_ATTACKS(double)

#undef PHASEFORGE_INSTANTIATE_ATTACKS

}  // namespace phaseforge
