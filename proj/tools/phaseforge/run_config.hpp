#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "phaseforge/corruptions.hpp"
#include "phaseforge/training.hpp"

namespace phaseforge::cli {

/// Bad user input: unknown key, malformed value, invalid combination.
/// Maps to exit code 1.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Flat key=value configuration. Every key has a documented default; keys not
/// in the table are rejected.
class RunConfig {
public:
    RunConfig();

    /// Lines of `key = value`; '#' starts a comment. Later lines win.
    void merge_text(std::string_view text, std::string_view origin);
    void merge_file(const std::filesystem::path& path);
    /// One `key=value` override, as given to --set.
    void set(std::string_view assignment);
    void set(const std::string& key, const std::string& value);

    const std::string& get(const std::string& key) const;
    double number(const std::string& key) const;
    long integer(const std::string& key) const;
    bool flag(const std::string& key) const;
    std::vector<std::string> list(const std::string& key) const;

    /// Every key with its resolved value, sorted, one `key = value` per line.
    std::string resolved_text() const;
    /// FNV-1a over the resolved text without the seed line, as 16 hex digits.
    std::string config_hash() const;
    std::uint64_t seed() const;

    static const std::map<std::string, std::string>& defaults();

private:
    std::map<std::string, std::string> values_;
};

/// Known preset names and their key=value text.
const std::map<std::string, std::string>& presets();
void apply_preset(RunConfig& config, std::string_view name);

/// Parses "8/255", "0.5" or "3".
double parse_fraction(std::string_view text);

TrainConfig train_config(const RunConfig& config);
AttackConfig eval_fgsm_config(const RunConfig& config);
AttackConfig eval_pgd_config(const RunConfig& config);
std::vector<CorruptionKind> eval_corruptions(const RunConfig& config);
std::vector<int> eval_severities(const RunConfig& config);

}  // namespace phaseforge::cli
