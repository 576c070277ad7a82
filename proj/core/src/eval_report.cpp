#include "phaseforge/eval_report.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <limits>
#include <set>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "phaseforge/ops.hpp"
#include "phaseforge/parallel.hpp"
#include "phaseforge/random.hpp"

namespace phaseforge {
namespace {

constexpr std::size_t kEvalChunk = 100;

void require_pairs(std::span<const Image> images, std::span<const int> labels, const char* what) {
    if (images.empty()) throw std::invalid_argument(std::string(what) + ": empty dataset");
    if (images.size() != labels.size()) {
        throw std::invalid_argument(std::string(what) + ": " + std::to_string(images.size()) + " images but " +
                                    std::to_string(labels.size()) + " labels");
    }
}

// Counts correct predictions chunk by chunk; `prepare` maps a clean chunk to
// the tensor that is classified.
template <typename Prepare>
double chunked_accuracy(const Model<float>& model, std::span<const Image> images, std::span<const int> labels,
                        Prepare&& prepare) {
    const std::size_t chunks = (images.size() + kEvalChunk - 1) / kEvalChunk;
    std::vector<std::size_t> correct(chunks, 0);
    parallel_for(chunks, [&](std::size_t c) {
        const std::size_t begin = c * kEvalChunk;
        const std::size_t end = std::min(images.size(), begin + kEvalChunk);
        const auto chunk_labels = labels.subspan(begin, end - begin);
        const auto x = stack_images<float>(images.subspan(begin, end - begin));
        const auto predicted = model.predict(prepare(c, x, chunk_labels));
        for (std::size_t i = 0; i < predicted.size(); ++i) correct[c] += predicted[i] == chunk_labels[i] ? 1 : 0;
    });
    std::size_t total = 0;
    for (auto n : correct) total += n;
    return 100.0 * static_cast<double>(total) / static_cast<double>(images.size());
}

std::string full_precision(double v) {
    char buffer[40];
    std::snprintf(buffer, sizeof buffer, "%.17g", v);
    return buffer;
}

std::string short_number(double v) {
    char buffer[40];
    std::snprintf(buffer, sizeof buffer, "%.4g", v);
    return buffer;
}

std::string xml_escape(std::string_view text) {
    std::string out;
    for (char c : text) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

struct Frame {
    double width = 640, height = 400, left = 64, right = 160, top = 40, bottom = 56;
    double x_min = 0, x_max = 1, y_min = 0, y_max = 100;

    double px(double x) const { return left + (x - x_min) / (x_max - x_min) * (width - left - right); }
    double py(double y) const { return height - bottom - (y - y_min) / (y_max - y_min) * (height - top - bottom); }
};

std::string svg_header(const Frame& f, std::string_view title) {
    std::ostringstream out;
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << f.width << "\" height=\"" << f.height
        << "\" viewBox=\"0 0 " << f.width << ' ' << f.height << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
        << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
        << "<text x=\"" << f.width / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" << xml_escape(title)
        << "</text>\n";
    return out.str();
}

std::string svg_axes(const Frame& f, std::string_view x_label, std::string_view y_label, bool x_ticks) {
    std::ostringstream out;
    const double x0 = f.px(f.x_min), x1 = f.px(f.x_max), y0 = f.py(f.y_min), y1 = f.py(f.y_max);
    out << "<g stroke=\"black\">\n<line x1=\"" << x0 << "\" y1=\"" << y0 << "\" x2=\"" << x1 << "\" y2=\"" << y0
        << "\"/>\n<line x1=\"" << x0 << "\" y1=\"" << y0 << "\" x2=\"" << x0 << "\" y2=\"" << y1 << "\"/>\n</g>\n";
    for (int t = 0; t <= 5; ++t) {
        const double v = f.y_min + (f.y_max - f.y_min) * t / 5.0;
        out << "<text x=\"" << x0 - 6 << "\" y=\"" << f.py(v) + 4 << "\" text-anchor=\"end\">" << short_number(v)
            << "</text>\n";
    }
    if (x_ticks) {
        for (int t = 0; t <= 5; ++t) {
            const double v = f.x_min + (f.x_max - f.x_min) * t / 5.0;
            out << "<text x=\"" << f.px(v) << "\" y=\"" << y0 + 16 << "\" text-anchor=\"middle\">" << short_number(v)
                << "</text>\n";
        }
    }
    out << "<text x=\"" << (x0 + x1) / 2 << "\" y=\"" << f.height - 12 << "\" text-anchor=\"middle\">"
        << xml_escape(x_label) << "</text>\n"
        << "<text x=\"16\" y=\"" << (y0 + y1) / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
        << (y0 + y1) / 2 << ")\">" << xml_escape(y_label) << "</text>\n";
    return out.str();
}

}  // namespace

double accuracy(const Model<float>& model, std::span<const Image> images, std::span<const int> labels) {
    require_pairs(images, labels, "accuracy");
    return chunked_accuracy(model, images, labels,
                            [](std::size_t, const Tensor<float>& x, std::span<const int>) { return x; });
}

double accuracy(const Model<float>& model, const Dataset& dataset) {
    return accuracy(model, dataset.images, dataset.labels);
}

double attack_accuracy(const Model<float>& model, std::span<const Image> images, std::span<const int> labels,
                       const AttackConfig& config, std::uint64_t seed) {
    require_pairs(images, labels, "attack_accuracy");
    config.validate();
    return chunked_accuracy(model, images, labels,
                            [&](std::size_t chunk, const Tensor<float>& x, std::span<const int> chunk_labels) {
                                Rng rng(derive_seed(seed, chunk));
                                return run_attack(model, x, chunk_labels, config, rng);
                            });
}

double attack_accuracy(const Model<float>& model, const Dataset& dataset, const AttackConfig& config,
                       std::uint64_t seed) {
    return attack_accuracy(model, dataset.images, dataset.labels, config, seed);
}

std::optional<double> EvalReport::corr_mean() const {
    if (corruption_accs.empty()) return std::nullopt;
    double sum = 0.0;
    for (const auto& [cell, acc] : corruption_accs) sum += acc;
    return sum / static_cast<double>(corruption_accs.size());
}

std::map<std::string, double> EvalReport::per_kind_means() const {
    std::map<std::string, std::pair<double, std::size_t>> sums;
    for (const auto& [cell, acc] : corruption_accs) {
        auto& s = sums[cell.first];
        s.first += acc;
        s.second += 1;
    }
    std::map<std::string, double> means;
    for (const auto& [kind, s] : sums) means[kind] = s.first / static_cast<double>(s.second);
    return means;
}

void EvalReport::validate() const {
    auto check = [](const std::string& what, double v) {
        if (!(v >= 0.0 && v <= 100.0)) {
            throw std::invalid_argument("eval report: " + what + " = " + std::to_string(v) + " outside [0, 100]");
        }
    };
    if (clean_acc) check("clean_acc", *clean_acc);
    for (const auto& [name, v] : attack_accs) check(name, v);
    for (const auto& [cell, v] : corruption_accs) check(cell.first + "/" + std::to_string(cell.second), v);
}

UniformityGap uniformity_gap(const EvalReport& report) {
    const auto means = report.per_kind_means();
    if (means.size() < 2) {
        throw std::invalid_argument("uniformity_gap: needs at least 2 corruption kinds, got " +
                                    std::to_string(means.size()));
    }
    auto [lo, hi] = std::minmax_element(means.begin(), means.end(),
                                        [](const auto& a, const auto& b) { return a.second < b.second; });
    return {hi->second - lo->second, hi->first, lo->first};
}

double pairing_gap(const EvalReport& report, std::string_view high_kind, std::string_view low_kind) {
    const auto means = report.per_kind_means();
    auto find = [&](std::string_view kind) {
        auto it = means.find(std::string(kind));
        if (it == means.end()) throw std::invalid_argument("pairing_gap: no cells for kind '" + std::string(kind) + "'");
        return it->second;
    };
    return find(high_kind) - find(low_kind);
}

OverfitFindings overfit_scan(const TrainLog& log, const OverfitThresholds& thresholds) {
    OverfitFindings findings;
    const auto& r = log.records;
    for (const auto& rec : r) {
        if (rec.fgsm_acc && rec.pgd_acc && *rec.fgsm_acc - *rec.pgd_acc > thresholds.catastrophic_points) {
            findings.catastrophic = rec.epoch;
            break;
        }
    }

    std::size_t first_decay = r.size();
    for (std::size_t i = 1; i < r.size(); ++i) {
        if (r[i].lr < r[i - 1].lr) {
            first_decay = i;
            break;
        }
    }
    double running_max = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < r.size(); ++i) {
        if (!r[i].pgd_acc) continue;
        running_max = std::max(running_max, *r[i].pgd_acc);
        if (i < first_decay) continue;
        const double floor = running_max - thresholds.robust_points;
        if (*r[i].pgd_acc >= floor) continue;
        bool recovered = false;
        for (std::size_t j = i + 1; j < r.size() && !recovered; ++j) recovered = r[j].pgd_acc && *r[j].pgd_acc >= floor;
        if (!recovered) {
            findings.robust = r[i].epoch;
            break;
        }
    }
    return findings;
}

std::string report_to_csv(const EvalReport& report) {
    std::string out = "section,name,severity,value\n";
    if (report.clean_acc) out += "clean,clean,," + full_precision(*report.clean_acc) + '\n';
    for (const auto& [name, v] : report.attack_accs) out += "attack," + name + ",," + full_precision(v) + '\n';
    for (const auto& [cell, v] : report.corruption_accs) {
        out += "corruption," + cell.first + ',' + std::to_string(cell.second) + ',' + full_precision(v) + '\n';
    }
    return out;
}

std::string corruption_csv(const EvalReport& report) {
    std::string out = "kind,severity,accuracy\n";
    for (const auto& [cell, v] : report.corruption_accs) {
        out += cell.first + ',' + std::to_string(cell.second) + ',' + full_precision(v) + '\n';
    }
    return out;
}

EvalReport report_from_csv(std::string_view text) {
    EvalReport report;
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line_no == 1) {
            if (line != "section,name,severity,value") {
                throw std::invalid_argument("report csv: unexpected header '" + line + "'");
            }
            continue;
        }
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::istringstream row(line);
        for (std::string cell; std::getline(row, cell, ',');) cells.push_back(cell);
        if (!line.empty() && line.back() == ',') cells.emplace_back();
        if (cells.size() != 4) {
            throw std::invalid_argument("report csv line " + std::to_string(line_no) + ": expected 4 cells");
        }
        double value = 0.0;
        try {
            value = std::stod(cells[3]);
        } catch (const std::exception&) {
            throw std::invalid_argument("report csv line " + std::to_string(line_no) + ": bad value '" + cells[3] + "'");
        }
        if (cells[0] == "clean") {
            report.clean_acc = value;
        } else if (cells[0] == "attack") {
            report.attack_accs[cells[1]] = value;
        } else if (cells[0] == "corruption") {
            report.corruption_accs[{cells[1], std::stoi(cells[2])}] = value;
        } else {
            throw std::invalid_argument("report csv line " + std::to_string(line_no) + ": unknown section '" +
                                        cells[0] + "'");
        }
    }
    if (line_no == 0) throw std::invalid_argument("report csv: empty input");
    return report;
}

std::string report_to_json(const EvalReport& report) {
    nlohmann::ordered_json j;
    j["clean_acc"] = report.clean_acc ? nlohmann::ordered_json(*report.clean_acc) : nlohmann::ordered_json(nullptr);
    j["attack_accs"] = nlohmann::ordered_json::object();
    for (const auto& [name, v] : report.attack_accs) j["attack_accs"][name] = v;
    j["corruption_accs"] = nlohmann::ordered_json::array();
    for (const auto& [cell, v] : report.corruption_accs) {
        j["corruption_accs"].push_back({{"kind", cell.first}, {"severity", cell.second}, {"accuracy", v}});
    }
    const auto mean = report.corr_mean();
    j["corr_mean"] = mean ? nlohmann::ordered_json(*mean) : nlohmann::ordered_json(nullptr);
    if (report.per_kind_means().size() >= 2) {
        const auto gap = uniformity_gap(report);
        j["uniformity_gap"] = {{"gap", gap.gap}, {"highest", gap.highest}, {"lowest", gap.lowest}};
    } else {
        j["uniformity_gap"] = nullptr;
    }
    j["provenance"] = nlohmann::ordered_json::object();
    for (const auto& [key, value] : report.provenance) j["provenance"][key] = value;
    return j.dump(2) + '\n';
}

EvalReport report_from_json(std::string_view text) {
    EvalReport report;
    try {
        const auto j = nlohmann::json::parse(text);
        if (!j.at("clean_acc").is_null()) report.clean_acc = j.at("clean_acc").get<double>();
        for (const auto& [name, v] : j.at("attack_accs").items()) report.attack_accs[name] = v.get<double>();
        for (const auto& cell : j.at("corruption_accs")) {
            report.corruption_accs[{cell.at("kind").get<std::string>(), cell.at("severity").get<int>()}] =
                cell.at("accuracy").get<double>();
        }
        for (const auto& [key, v] : j.at("provenance").items()) report.provenance[key] = v.get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument(std::string("report json: ") + e.what());
    }
    return report;
}

std::string svg_line_chart(std::string_view title, std::string_view x_label, std::string_view y_label,
                           std::span<const Series> series) {
    Frame f;
    double x_lo = std::numeric_limits<double>::infinity(), x_hi = -x_lo;
    double y_lo = 0.0, y_hi = 0.0;
    for (const auto& s : series) {
        if (s.x.size() != s.y.size()) {
            throw std::invalid_argument("svg_line_chart: series '" + s.name + "' has mismatched x and y lengths");
        }
        for (double v : s.x) x_lo = std::min(x_lo, v), x_hi = std::max(x_hi, v);
        for (double v : s.y) y_lo = std::min(y_lo, v), y_hi = std::max(y_hi, v);
    }
    if (!std::isfinite(x_lo)) x_lo = 0.0, x_hi = 1.0;
    if (x_hi <= x_lo) x_hi = x_lo + 1.0;
    f.x_min = x_lo;
    f.x_max = x_hi;
    f.y_min = y_lo;
    f.y_max = std::max(y_hi, y_lo + 1.0);
    if (y_lo >= 0.0 && y_hi <= 100.0 && y_hi > 1.0) f.y_max = 100.0;

    std::ostringstream out;
    out << svg_header(f, title) << svg_axes(f, x_label, y_label, true);
    for (std::size_t k = 0; k < series.size(); ++k) {
        const char* colour = kPalette[k % std::size(kPalette)];
        out << "<polyline fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"2\" points=\"";
        for (std::size_t i = 0; i < series[k].x.size(); ++i) {
            out << (i ? " " : "") << f.px(series[k].x[i]) << ',' << f.py(series[k].y[i]);
        }
        out << "\"/>\n";
        const double ly = f.top + 16.0 * static_cast<double>(k);
        const double lx = f.width - f.right + 16;
        out << "<rect x=\"" << lx << "\" y=\"" << ly << "\" width=\"12\" height=\"12\" fill=\"" << colour
            << "\"/>\n<text x=\"" << lx + 18 << "\" y=\"" << ly + 10 << "\">" << xml_escape(series[k].name)
            << "</text>\n";
    }
    out << "</svg>\n";
    return out.str();
}

std::string svg_training_curves(const TrainLog& log) {
    std::vector<Series> series;
    Series clean{"clean", {}, {}}, fgsm{"fgsm", {}, {}}, pgd{"pgd", {}, {}};
    for (const auto& r : log.records) {
        clean.x.push_back(r.epoch);
        clean.y.push_back(r.clean_acc);
        if (r.fgsm_acc) fgsm.x.push_back(r.epoch), fgsm.y.push_back(*r.fgsm_acc);
        if (r.pgd_acc) pgd.x.push_back(r.epoch), pgd.y.push_back(*r.pgd_acc);
    }
    series.push_back(std::move(clean));
    if (!fgsm.x.empty()) series.push_back(std::move(fgsm));
    if (!pgd.x.empty()) series.push_back(std::move(pgd));
    return svg_line_chart("Accuracy during training", "epoch", "accuracy (%)", series);
}

std::string svg_report(const EvalReport& report) {
    std::vector<std::pair<std::string, double>> bars;
    if (report.clean_acc) bars.emplace_back("clean", *report.clean_acc);
    for (const auto& [name, v] : report.attack_accs) bars.emplace_back(name, v);
    for (const auto& [kind, v] : report.per_kind_means()) bars.emplace_back(kind, v);

    Frame f;
    f.right = 24;
    f.bottom = 110;
    f.width = std::max(640.0, f.left + f.right + 36.0 * static_cast<double>(bars.size()));
    f.x_min = 0.0;
    f.x_max = std::max<double>(1.0, static_cast<double>(bars.size()));
    std::ostringstream out;
    out << svg_header(f, "Evaluation accuracy") << svg_axes(f, "", "accuracy (%)", false);
    const double slot = f.px(1.0) - f.px(0.0);
    for (std::size_t i = 0; i < bars.size(); ++i) {
        const double x = f.px(static_cast<double>(i)) + slot * 0.15;
        const double y = f.py(bars[i].second);
        const char* colour = i == 0 && report.clean_acc ? kPalette[0]
                             : i < (report.clean_acc ? 1u : 0u) + report.attack_accs.size() ? kPalette[1]
                                                                                              : kPalette[2];
        out << "<rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << slot * 0.7 << "\" height=\""
            << f.py(0.0) - y << "\" fill=\"" << colour << "\"><title>" << xml_escape(bars[i].first) << ' '
            << short_number(bars[i].second) << "</title></rect>\n";
        const double lx = x + slot * 0.35, ly = f.py(0.0) + 10;
        out << "<text x=\"" << lx << "\" y=\"" << ly << "\" text-anchor=\"end\" transform=\"rotate(-60 " << lx << ' '
            << ly << ")\">" << xml_escape(bars[i].first) << "</text>\n";
    }
    const double lx = f.width - 150;
    const char* names[] = {"clean", "attack", "corruption (mean)"};
    for (int k = 0; k < 3; ++k) {
        out << "<rect x=\"" << lx << "\" y=\"" << f.top + 16 * k << "\" width=\"12\" height=\"12\" fill=\""
            << kPalette[k] << "\"/>\n<text x=\"" << lx + 18 << "\" y=\"" << f.top + 16 * k + 10 << "\">" << names[k]
            << "</text>\n";
    }
    out << "</svg>\n";
    return out.str();
}

}  // namespace phaseforge
