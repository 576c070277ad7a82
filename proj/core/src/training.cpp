#include "phaseforge/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "phaseforge/eval_report.hpp"
#include "phaseforge/ops.hpp"
#include "phaseforge/random.hpp"
#include "phaseforge/spectrum.hpp"

namespace phaseforge {
namespace {

enum Stream : std::uint64_t { shuffle_stream = 1, augment_stream = 2, attack_stream = 3, eval_stream = 4 };

template <typename E, std::size_t N>
E parse_enum(std::string_view name, const std::pair<E, std::string_view> (&table)[N], const char* what) {
    for (const auto& [value, text] : table)
        if (text == name) return value;
    std::string known;
    for (const auto& [value, text] : table) known += (known.empty() ? "" : ", ") + std::string(text);
    throw std::invalid_argument(std::string("unknown ") + what + " '" + std::string(name) + "' (expected one of " +
                                known + ")");
}

constexpr std::pair<Objective, std::string_view> kObjectives[] = {
    {Objective::standard, "standard"}, {Objective::adv, "adv"}, {Objective::trades, "trades"}};

constexpr std::pair<TrainMode, std::string_view> kModes[] = {
    {TrainMode::clean, "clean"},         {TrainMode::adv, "adv"},
    {TrainMode::aa, "aa"},               {TrainMode::ap, "ap"},
    {TrainMode::c_and_adv, "c_and_adv"}, {TrainMode::c_and_aa, "c_and_aa"},
    {TrainMode::c_and_ap, "c_and_ap"},   {TrainMode::apr_p, "apr_p"},
    {TrainMode::swap_label_policy, "swap_label_policy"}};

constexpr std::pair<LabelPolicy, std::string_view> kPolicies[] = {{LabelPolicy::phase_label, "phase_label"},
                                                                   {LabelPolicy::amplitude_label, "amplitude_label"},
                                                                   {LabelPolicy::both, "both"}};

template <typename E, std::size_t N>
std::string_view enum_name(E value, const std::pair<E, std::string_view> (&table)[N]) {
    for (const auto& [v, text] : table)
        if (v == value) return text;
    return "?";
}

Tensor<float> concat_batches(const Tensor<float>& a, const Tensor<float>& b) {
    Shape shape = a.shape();
    shape[0] += b.dim(0);
    std::vector<float> values = a.values();
    values.insert(values.end(), b.data().begin(), b.data().end());
    return Tensor<float>(shape, std::move(values));
}

std::vector<int> repeat_labels(std::span<const int> labels) {
    std::vector<int> out(labels.begin(), labels.end());
    out.insert(out.end(), labels.begin(), labels.end());
    return out;
}

std::vector<std::size_t> resolve_partners(std::size_t batch, std::span<const std::size_t> partners, Rng& rng) {
    if (!partners.empty()) {
        if (partners.size() != batch) {
            throw std::invalid_argument("make_batch_images: " + std::to_string(partners.size()) +
                                        " partners for a batch of " + std::to_string(batch));
        }
        for (auto p : partners)
            if (p >= batch) throw std::out_of_range("make_batch_images: partner index " + std::to_string(p));
        return {partners.begin(), partners.end()};
    }
    std::uniform_int_distribution<std::size_t> pick(0, batch - 1);
    std::vector<std::size_t> out(batch);
    for (auto& p : out) p = pick(rng);
    return out;
}

Tensor<float> swap_batch(const Tensor<float>& x, std::span<const std::size_t> partners) {
    const auto images = unstack_images(x);
    std::vector<Image> out;
    out.reserve(images.size());
    for (std::size_t i = 0; i < images.size(); ++i) out.push_back(swap_image(images[i], images[partners[i]]).image);
    return stack_images<float>(std::span<const Image>(out));
}

AttackConfig training_attack(const TrainConfig& config) {
    AttackConfig attack = config.attack;
    attack.objective = config.objective == Objective::trades ? AttackObjective::kl_vs_clean_logits
                                                             : AttackObjective::cross_entropy_vs_label;
    return attack;
}

std::string format_number(const char* format, double value) {
    char buffer[64];
    std::snprintf(buffer, sizeof buffer, format, value);
    return buffer;
}

std::vector<std::string> split_csv_line(std::string_view line) {
    std::vector<std::string> cells;
    std::size_t start = 0;
    while (true) {
        const auto comma = line.find(',', start);
        cells.emplace_back(line.substr(start, comma - start));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return cells;
}

double parse_double(const std::string& cell, std::size_t line) {
    try {
        std::size_t used = 0;
        const double v = std::stod(cell, &used);
        if (used != cell.size()) throw std::invalid_argument(cell);
        return v;
    } catch (const std::exception&) {
        throw std::invalid_argument("train log line " + std::to_string(line) + ": bad number '" + cell + "'");
    }
}

}  // namespace

std::string_view objective_name(Objective objective) { return enum_name(objective, kObjectives); }
std::string_view mode_name(TrainMode mode) { return enum_name(mode, kModes); }
std::string_view label_policy_name(LabelPolicy policy) { return enum_name(policy, kPolicies); }
Objective parse_objective(std::string_view name) { return parse_enum(name, kObjectives, "objective"); }
TrainMode parse_mode(std::string_view name) { return parse_enum(name, kModes, "mode"); }
LabelPolicy parse_label_policy(std::string_view name) { return parse_enum(name, kPolicies, "label policy"); }

bool mode_allowed(Objective objective, TrainMode mode) {
    switch (objective) {
        case Objective::standard:
            return mode == TrainMode::clean || mode == TrainMode::apr_p || mode == TrainMode::swap_label_policy;
        case Objective::adv:
            return mode != TrainMode::clean && mode != TrainMode::swap_label_policy;
        case Objective::trades:
            return mode == TrainMode::adv || mode == TrainMode::aa || mode == TrainMode::ap;
    }
    return false;
}

void TrainConfig::validate() const {
    if (!mode_allowed(objective, mode)) {
        throw std::invalid_argument("train config: mode " + std::string(mode_name(mode)) +
                                    " cannot be used with objective " + std::string(objective_name(objective)));
    }
    if (!(beta >= 0.0) || !std::isfinite(beta)) throw std::invalid_argument("train config: beta must be >= 0");
    if (epochs < 0) throw std::invalid_argument("train config: epochs must be >= 0");
    if (clean_warmup_epochs < 0) throw std::invalid_argument("train config: clean_warmup_epochs must be >= 0");
    if (batch_size == 0) throw std::invalid_argument("train config: batch_size must be >= 1");
    if (!(lr >= 0.0) || !std::isfinite(lr)) throw std::invalid_argument("train config: lr must be >= 0");
    if (!(lr_decay_factor > 0.0 && lr_decay_factor <= 1.0)) {
        throw std::invalid_argument("train config: lr_decay_factor must lie in (0, 1]");
    }
    if (!(momentum >= 0.0 && momentum < 1.0)) throw std::invalid_argument("train config: momentum must lie in [0, 1)");
    if (!(weight_decay >= 0.0)) throw std::invalid_argument("train config: weight_decay must be >= 0");
    if (objective != Objective::standard) attack.validate();
    if (eval_attacks) {
        eval_fgsm.validate();
        eval_pgd.validate();
    }
}

TrainConfig epoch_train_config(const TrainConfig& config, int epoch) {
    TrainConfig out = config;
    if (config.objective != Objective::standard && epoch < config.clean_warmup_epochs) {
        out.objective = Objective::standard;
        out.mode = TrainMode::clean;
    }
    return out;
}

double learning_rate_at(const TrainConfig& config, int epoch) {
    double lr = config.lr;
    for (int decay : config.lr_decay_epochs)
        if (decay <= epoch) lr *= config.lr_decay_factor;
    return lr;
}

Tensor<float> amplitude_swap_batch(const Tensor<float>& x, const Tensor<float>& x_adv, bool adversarial_amplitude) {
    if (x.shape() != x_adv.shape()) {
        throw ShapeError("amplitude_swap_batch: " + to_string(x.shape()) + " vs " + to_string(x_adv.shape()));
    }
    const auto clean = unstack_images(x);
    const auto adv = unstack_images(x_adv);
    std::vector<Image> out;
    out.reserve(clean.size());
    for (std::size_t i = 0; i < clean.size(); ++i) {
        // AA keeps the clean phase, AP keeps the clean amplitude.
        out.push_back(adversarial_amplitude ? recompose(decompose(adv[i]), decompose(clean[i])).image
                                            : recompose(decompose(clean[i]), decompose(adv[i])).image);
    }
    return stack_images<float>(std::span<const Image>(out));
}

BatchImages make_batch_images(const Model<float>& model, const Tensor<float>& x, std::span<const int> labels,
                              const TrainConfig& config, Rng& rng, std::span<const std::size_t> partners) {
    if (x.rank() != 4 || x.dim(0) == 0) {
        throw ShapeError("make_batch_images: expected a nonempty [B, C, H, W] batch, got " + to_string(x.shape()));
    }
    if (labels.size() != x.dim(0)) {
        throw std::invalid_argument("make_batch_images: " + std::to_string(labels.size()) + " labels for a batch of " +
                                    std::to_string(x.dim(0)));
    }
    if (!mode_allowed(config.objective, config.mode)) {
        throw std::invalid_argument("make_batch_images: mode " + std::string(mode_name(config.mode)) +
                                    " cannot be used with objective " + std::string(objective_name(config.objective)));
    }
    const std::vector<int> y(labels.begin(), labels.end());
    const AttackConfig attack = training_attack(config);
    auto attacked = [&](const Tensor<float>& input) { return run_attack(model, input, labels, attack, rng); };

    switch (config.mode) {
        case TrainMode::clean: return {x, y, {}};
        case TrainMode::adv: return {attacked(x), y, {}};
        case TrainMode::aa: return {amplitude_swap_batch(x, attacked(x), true), y, {}};
        case TrainMode::ap: return {amplitude_swap_batch(x, attacked(x), false), y, {}};
        case TrainMode::c_and_adv: return {concat_batches(x, attacked(x)), repeat_labels(labels), {}};
        case TrainMode::c_and_aa:
            return {concat_batches(x, amplitude_swap_batch(x, attacked(x), true)), repeat_labels(labels), {}};
        case TrainMode::c_and_ap:
            return {concat_batches(x, amplitude_swap_batch(x, attacked(x), false)), repeat_labels(labels), {}};
        case TrainMode::apr_p: {
            auto pi = resolve_partners(x.dim(0), partners, rng);
            Tensor<float> swapped = swap_batch(x, pi);
            // Under the adversarial objective the swap images are then attacked.
            if (config.objective == Objective::adv) swapped = attacked(swapped);
            return {std::move(swapped), y, std::move(pi)};
        }
        case TrainMode::swap_label_policy: {
            auto pi = resolve_partners(x.dim(0), partners, rng);
            Tensor<float> swapped = swap_batch(x, pi);
            std::vector<int> amplitude_labels(y.size());
            for (std::size_t i = 0; i < y.size(); ++i) amplitude_labels[i] = y[pi[i]];
            switch (config.label_policy) {
                case LabelPolicy::phase_label: return {std::move(swapped), y, std::move(pi)};
                case LabelPolicy::amplitude_label: return {std::move(swapped), amplitude_labels, std::move(pi)};
                case LabelPolicy::both: {
                    std::vector<int> both = y;
                    both.insert(both.end(), amplitude_labels.begin(), amplitude_labels.end());
                    return {concat_batches(swapped, swapped), std::move(both), std::move(pi)};
                }
            }
        }
    }
    throw std::invalid_argument("make_batch_images: unknown mode");
}

Tensor<float> trades_objective(const Model<float>& model, const Tensor<float>& x, const Tensor<float>& x_prime,
                               std::span<const int> labels, double beta, ParamGrad mode) {
    const Tensor<float> clean_logits = model.forward(x, mode);
    Tensor<float> loss = cross_entropy(clean_logits, labels);
    if (beta == 0.0) return loss;
    const Tensor<float> adv_logits = model.forward(x_prime, mode);
    return add(loss, scale(kl_divergence(clean_logits, adv_logits), static_cast<float>(beta)));
}

void sgd_update(Model<float>& model, SgdState& state, const Gradients<float>& grads, double lr, double momentum,
                double weight_decay) {
    auto params = model.parameters();
    if (state.velocity.size() != params.size()) {
        state.velocity.assign(params.size(), {});
        for (std::size_t i = 0; i < params.size(); ++i) state.velocity[i].assign(params[i].value.numel(), 0.0f);
    }
    const auto m = static_cast<float>(momentum);
    const auto wd = static_cast<float>(weight_decay);
    const auto step = static_cast<float>(lr);
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& theta = params[i].value;
        const auto& g = grads.of(theta);
        auto values = theta.mutable_data();
        auto& v = state.velocity[i];
        for (std::size_t j = 0; j < v.size(); ++j) {
            v[j] = m * v[j] + g[j] + wd * values[j];
            values[j] -= step * v[j];
        }
    }
}

double train_step(Model<float>& model, SgdState& state, const Tensor<float>& x, std::span<const int> labels,
                  const TrainConfig& config, double lr, Rng& rng) {
    Tensor<float> loss;
    if (config.objective == Objective::trades) {
        Tensor<float> x_prime;
        if (config.beta != 0.0) {
            x_prime = trades_inner(model, x, training_attack(config), rng);
            if (config.mode == TrainMode::aa) x_prime = amplitude_swap_batch(x, x_prime, true);
            if (config.mode == TrainMode::ap) x_prime = amplitude_swap_batch(x, x_prime, false);
        }
        loss = trades_objective(model, x, x_prime, labels, config.beta, ParamGrad::on);
    } else {
        const BatchImages batch = make_batch_images(model, x, labels, config, rng);
        loss = cross_entropy(model.forward(batch.images, ParamGrad::on), batch.labels);
    }
    const double value = static_cast<double>(loss.item());
    if (!std::isfinite(value)) {
        throw std::runtime_error("train_step: non-finite loss (" + std::to_string(value) + ") with objective " +
                                 std::string(objective_name(config.objective)) + ", mode " +
                                 std::string(mode_name(config.mode)) + ", lr " + std::to_string(lr));
    }
    const auto grads = backward(loss);
    sgd_update(model, state, grads, lr, config.momentum, config.weight_decay);
    return value;
}

std::string TrainLog::to_csv(bool wall_time) const {
    std::string out = "epoch,loss,clean_acc,fgsm_acc,pgd_acc,lr,seconds\n";
    for (const auto& r : records) {
        out += std::to_string(r.epoch) + ',' + format_number("%.6f", r.loss) + ',' +
               format_number("%.4f", r.clean_acc) + ',' + (r.fgsm_acc ? format_number("%.4f", *r.fgsm_acc) : "") +
               ',' + (r.pgd_acc ? format_number("%.4f", *r.pgd_acc) : "") + ',' + format_number("%.8g", r.lr) + ',' +
               (wall_time ? format_number("%.3f", r.seconds) : "0") + '\n';
    }
    return out;
}

TrainLog TrainLog::parse_csv(std::string_view text) {
    TrainLog log;
    std::size_t line_no = 0;
    std::size_t start = 0;
    while (start < text.size()) {
        auto end = text.find('\n', start);
        if (end == std::string_view::npos) end = text.size();
        std::string_view line = text.substr(start, end - start);
        start = end + 1;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        ++line_no;
        if (line_no == 1) {
            if (line != "epoch,loss,clean_acc,fgsm_acc,pgd_acc,lr,seconds") {
                throw std::invalid_argument("train log: unexpected header '" + std::string(line) + "'");
            }
            continue;
        }
        if (line.empty()) continue;
        const auto cells = split_csv_line(line);
        if (cells.size() != 7) {
            throw std::invalid_argument("train log line " + std::to_string(line_no) + ": expected 7 cells, got " +
                                        std::to_string(cells.size()));
        }
        TrainRecord r;
        r.epoch = static_cast<int>(parse_double(cells[0], line_no));
        r.loss = parse_double(cells[1], line_no);
        r.clean_acc = parse_double(cells[2], line_no);
        if (!cells[3].empty()) r.fgsm_acc = parse_double(cells[3], line_no);
        if (!cells[4].empty()) r.pgd_acc = parse_double(cells[4], line_no);
        r.lr = parse_double(cells[5], line_no);
        r.seconds = parse_double(cells[6], line_no);
        log.records.push_back(r);
    }
    if (line_no == 0) throw std::invalid_argument("train log: empty input");
    return log;
}

TrainResult train(Model<float> model, const Dataset& train_set, const Dataset& eval_set, const TrainConfig& config,
                  const TrainHooks& hooks) {
    config.validate();
    TrainResult result{std::move(model), {}};
    if (config.epochs == 0) return result;
    train_set.validate();
    if (train_set.empty()) throw std::invalid_argument("train: empty training set");
    if (train_set.images.front().shape() != result.model.architecture().input) {
        throw ShapeError("train: images are " + to_string(train_set.images.front().shape()) + " but the model expects " +
                         to_string(result.model.architecture().input));
    }

    const std::size_t eval_count =
        config.eval_subset == 0 ? eval_set.size() : std::min(config.eval_subset, eval_set.size());
    const std::span<const Image> eval_images(eval_set.images.data(), eval_count);
    const std::span<const int> eval_labels(eval_set.labels.data(), eval_count);

    SgdState state;
    std::vector<std::size_t> order(train_set.size());
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        const auto started = std::chrono::steady_clock::now();
        const double lr = learning_rate_at(config, epoch);
        const auto e = static_cast<std::uint64_t>(epoch);
        Rng shuffle_rng(derive_seed(config.seed, e, shuffle_stream));
        Rng augment_rng(derive_seed(config.seed, e, augment_stream));
        Rng attack_rng(derive_seed(config.seed, e, attack_stream));
        const TrainConfig epoch_config = epoch_train_config(config, epoch);

        std::iota(order.begin(), order.end(), std::size_t{0});
        std::shuffle(order.begin(), order.end(), shuffle_rng);

        double loss_sum = 0.0;
        for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
            const std::size_t end = std::min(order.size(), begin + config.batch_size);
            std::vector<Image> images;
            std::vector<int> labels;
            images.reserve(end - begin);
            labels.reserve(end - begin);
            for (std::size_t i = begin; i < end; ++i) {
                images.push_back(augment(train_set.images[order[i]], config.augment, augment_rng));
                labels.push_back(train_set.labels[order[i]]);
            }
            const auto x = stack_images<float>(std::span<const Image>(images));
            const double loss = train_step(result.model, state, x, labels, epoch_config, lr, attack_rng);
            loss_sum += loss * static_cast<double>(end - begin);
        }

        TrainRecord record;
        record.epoch = epoch;
        record.loss = loss_sum / static_cast<double>(train_set.size());
        record.lr = lr;
        if (eval_count > 0) {
            record.clean_acc = accuracy(result.model, eval_images, eval_labels);
            if (config.eval_attacks) {
                const auto seed = derive_seed(config.seed, e, eval_stream);
                record.fgsm_acc = attack_accuracy(result.model, eval_images, eval_labels, config.eval_fgsm, seed);
                record.pgd_acc = attack_accuracy(result.model, eval_images, eval_labels, config.eval_pgd, seed);
            }
        }
        record.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
        result.log.records.push_back(record);
        if (hooks.on_epoch) hooks.on_epoch(record, result.model);
    }
    return result;
}

}  // namespace phaseforge
