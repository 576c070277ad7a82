#include "run_config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace phaseforge::cli {
namespace {

std::string trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return std::string(s.substr(first, last - first + 1));
}

std::uint64_t fnv1a(std::string_view text) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

double parse_plain_number(std::string_view text) {
    double value = 0.0;
    const auto* end = text.data() + text.size();
    const auto [ptr, ec] = std::from_chars(text.data(), end, value);
    if (ec != std::errc() || ptr != end) throw ConfigError("not a number: '" + std::string(text) + "'");
    return value;
}

}  // namespace

const std::map<std::string, std::string>& RunConfig::defaults() {
    static const std::map<std::string, std::string> table = {
        {"seed", "0"},
        {"data.source", "synth"},  // synth | cifar
        {"data.synth_kind", "bars"},
        {"data.classes", "4"},
        {"data.train_count", "2000"},
        {"data.test_count", "500"},
        {"data.train_files", ""},  // comma-separated CIFAR binary files
        {"data.test_files", ""},
        {"model.arch", "smallcnn-k4"},  // preset name or architecture text
        {"train.objective", "adv"},
        {"train.mode", "adv"},
        {"train.label_policy", "phase_label"},
        {"train.beta", "1"},
        {"train.epochs", "30"},
        {"train.batch_size", "64"},
        {"train.lr", "0.05"},
        {"train.lr_decay_epochs", "20,25"},
        {"train.lr_decay_factor", "0.1"},
        {"train.momentum", "0.9"},
        {"train.weight_decay", "5e-4"},
        {"train.augment_crop", "true"},
        {"train.augment_flip", "false"},
        {"train.augment_padding", "4"},
        {"train.checkpoint_every", "0"},
        {"train.log_wall_time", "false"},
        {"train.clean_warmup_epochs", "10"},
        {"attack.kind", "pgd"},
        {"attack.epsilon", "8/255"},
        {"attack.alpha", "2/255"},
        {"attack.steps", "7"},
        {"attack.random_start", "true"},
        {"eval.attacks", "true"},
        {"eval.subset", "0"},
        {"eval.split", "test"},
        {"eval.fgsm_epsilon", "8/255"},
        {"eval.pgd_epsilon", "8/255"},
        {"eval.pgd_alpha", "2/255"},
        {"eval.pgd_steps", "20"},
        {"eval.pgd_random_start", "false"},
        {"eval.corruptions", "all"},
        {"eval.severities", "1,2,3,4,5"},
    };
    return table;
}

RunConfig::RunConfig() : values_(defaults()) {}

void RunConfig::merge_text(std::string_view text, std::string_view origin) {
    std::istringstream in{std::string(text)};
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const auto content = trim(line);
        if (content.empty()) continue;
        const auto eq = content.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(std::string(origin) + ":" + std::to_string(line_no) + ": expected key = value, got '" +
                              content + "'");
        }
        try {
            set(trim(std::string_view(content).substr(0, eq)), trim(std::string_view(content).substr(eq + 1)));
        } catch (const ConfigError& e) {
            throw ConfigError(std::string(origin) + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
}

void RunConfig::merge_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file " + path.string());
    std::ostringstream text;
    text << in.rdbuf();
    merge_text(text.str(), path.string());
}

void RunConfig::set(std::string_view assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string_view::npos) throw ConfigError("expected key=value, got '" + std::string(assignment) + "'");
    set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

void RunConfig::set(const std::string& key, const std::string& value) {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
    it->second = value;
}

const std::string& RunConfig::get(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
    return it->second;
}

double RunConfig::number(const std::string& key) const {
    try {
        return parse_fraction(get(key));
    } catch (const ConfigError& e) {
        throw ConfigError(key + ": " + e.what());
    }
}

long RunConfig::integer(const std::string& key) const {
    const double v = number(key);
    if (v != static_cast<double>(static_cast<long>(v))) throw ConfigError(key + ": expected an integer, got " + get(key));
    return static_cast<long>(v);
}

bool RunConfig::flag(const std::string& key) const {
    const auto& v = get(key);
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

std::vector<std::string> RunConfig::list(const std::string& key) const {
    std::vector<std::string> out;
    std::istringstream in(get(key));
    for (std::string item; std::getline(in, item, ',');) {
        auto t = trim(item);
        if (!t.empty()) out.push_back(t);
    }
    return out;
}

std::string RunConfig::resolved_text() const {
    std::string out;
    for (const auto& [key, value] : values_) out += key + " = " + value + '\n';
    return out;
}

std::string RunConfig::config_hash() const {
    std::string text;
    for (const auto& [key, value] : values_)
        if (key != "seed") text += key + '=' + value + '\n';
    char buffer[17];
    std::snprintf(buffer, sizeof buffer, "%016llx", static_cast<unsigned long long>(fnv1a(text)));
    return buffer;
}

std::uint64_t RunConfig::seed() const {
    const long s = integer("seed");
    if (s < 0) throw ConfigError("seed must be >= 0");
    return static_cast<std::uint64_t>(s);
}

const std::map<std::string, std::string>& presets() {
    static const std::map<std::string, std::string> table = [] {
        std::map<std::string, std::string> t;
        const std::string adv = "train.objective = adv\n";
        t["std-desk"] = "train.objective = standard\ntrain.mode = clean\n";
        for (const char* mode : {"adv", "aa", "ap", "c_and_adv", "c_and_aa", "c_and_ap"})
            t[std::string("table3-") + mode + "-desk"] = adv + "train.mode = " + mode + "\n";
        for (const char* beta : {"1", "3", "6"}) {
            const std::string base = std::string("train.objective = trades\ntrain.beta = ") + beta + "\n";
            t[std::string("table5-trades-b") + beta + "-desk"] = base + "train.mode = adv\n";
            t[std::string("table5-trades-b") + beta + "-aa-desk"] = base + "train.mode = aa\n";
            t[std::string("table5-trades-b") + beta + "-ap-desk"] = base + "train.mode = ap\n";
        }
        t["table7-aprp-desk"] = "train.objective = standard\ntrain.mode = apr_p\n";
        t["table7-aprp-adv-desk"] = adv + "train.mode = apr_p\n";
        for (const char* policy : {"phase_label", "amplitude_label", "both"}) {
            t[std::string("swap-") + policy + "-desk"] =
                std::string("train.objective = standard\ntrain.mode = swap_label_policy\ntrain.label_policy = ") +
                policy + "\n";
        }
        // Single-step training on a clean + FGSM mix at a far over-budget
        // epsilon, evaluated at the same radius, to provoke catastrophic
        // overfitting. At lr 0.05 the first attacked epoch often kills the
        // model instead.
        t["fgsm-at-desk"] = adv +
                            "train.mode = c_and_adv\n"
                            "train.lr = 0.02\n"
                            "attack.kind = fgsm\n"
                            "attack.epsilon = 128/255\n"
                            "attack.random_start = false\n"
                            "eval.fgsm_epsilon = 128/255\n"
                            "eval.pgd_epsilon = 128/255\n"
                            "eval.pgd_alpha = 32/255\n"
                            "eval.pgd_steps = 10\n";
        return t;
    }();
    return table;
}

void apply_preset(RunConfig& config, std::string_view name) {
    const auto it = presets().find(std::string(name));
    if (it == presets().end()) {
        std::string known;
        for (const auto& [key, text] : presets()) known += (known.empty() ? "" : ", ") + key;
        throw ConfigError("unknown preset '" + std::string(name) + "' (known: " + known + ")");
    }
    config.merge_text(it->second, "preset " + it->first);
}

double parse_fraction(std::string_view text) {
    const auto slash = text.find('/');
    if (slash == std::string_view::npos) return parse_plain_number(text);
    const double den = parse_plain_number(text.substr(slash + 1));
    if (den == 0.0) throw ConfigError("division by zero in '" + std::string(text) + "'");
    return parse_plain_number(text.substr(0, slash)) / den;
}

TrainConfig train_config(const RunConfig& c) {
    TrainConfig t;
    try {
        t.objective = parse_objective(c.get("train.objective"));
        t.mode = parse_mode(c.get("train.mode"));
        t.label_policy = parse_label_policy(c.get("train.label_policy"));
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    t.beta = c.number("train.beta");
    t.epochs = static_cast<int>(c.integer("train.epochs"));
    const long batch = c.integer("train.batch_size");
    if (batch < 1) throw ConfigError("train.batch_size must be >= 1");
    t.batch_size = static_cast<std::size_t>(batch);
    t.lr = c.number("train.lr");
    t.lr_decay_epochs.clear();
    for (const auto& e : c.list("train.lr_decay_epochs")) t.lr_decay_epochs.push_back(static_cast<int>(parse_fraction(e)));
    t.lr_decay_factor = c.number("train.lr_decay_factor");
    t.momentum = c.number("train.momentum");
    t.weight_decay = c.number("train.weight_decay");
    t.seed = c.seed();
    t.augment.crop = c.flag("train.augment_crop");
    t.augment.flip = c.flag("train.augment_flip");
    t.augment.padding = static_cast<std::size_t>(c.integer("train.augment_padding"));

    const auto& kind = c.get("attack.kind");
    if (kind != "pgd" && kind != "fgsm") throw ConfigError("attack.kind must be pgd or fgsm, got '" + kind + "'");
    t.attack.kind = kind == "pgd" ? AttackKind::pgd : AttackKind::fgsm;
    t.attack.epsilon = c.number("attack.epsilon");
    t.attack.alpha = c.number("attack.alpha");
    t.attack.steps = static_cast<int>(c.integer("attack.steps"));
    t.attack.random_start = c.flag("attack.random_start");
    t.clean_warmup_epochs = static_cast<int>(c.integer("train.clean_warmup_epochs"));

    t.eval_attacks = c.flag("eval.attacks");
    const long subset = c.integer("eval.subset");
    if (subset < 0) throw ConfigError("eval.subset must be >= 0");
    t.eval_subset = static_cast<std::size_t>(subset);
    t.eval_fgsm = eval_fgsm_config(c);
    t.eval_pgd = eval_pgd_config(c);
    try {
        t.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    return t;
}

AttackConfig eval_fgsm_config(const RunConfig& c) {
    AttackConfig a{AttackKind::fgsm, c.number("eval.fgsm_epsilon")};
    a.alpha = a.epsilon;
    a.steps = 1;
    return a;
}

AttackConfig eval_pgd_config(const RunConfig& c) {
    return {AttackKind::pgd, c.number("eval.pgd_epsilon"), c.number("eval.pgd_alpha"),
            static_cast<int>(c.integer("eval.pgd_steps")), c.flag("eval.pgd_random_start")};
}

std::vector<CorruptionKind> eval_corruptions(const RunConfig& c) {
    const auto names = c.list("eval.corruptions");
    if (names.size() == 1 && names[0] == "all") return {kAllCorruptions.begin(), kAllCorruptions.end()};
    if (names.size() == 1 && names[0] == "none") return {};
    std::vector<CorruptionKind> kinds;
    try {
        for (const auto& n : names) kinds.push_back(parse_corruption(n));
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("eval.corruptions: ") + e.what());
    }
    return kinds;
}

std::vector<int> eval_severities(const RunConfig& c) {
    std::vector<int> out;
    for (const auto& s : c.list("eval.severities")) {
        const double v = parse_fraction(s);
        if (v < 1 || v > 5 || v != static_cast<int>(v)) throw ConfigError("eval.severities: '" + s + "' is not in 1..5");
        out.push_back(static_cast<int>(v));
    }
    if (out.empty()) throw ConfigError("eval.severities: empty list");
    return out;
}

}  // namespace phaseforge::cli
