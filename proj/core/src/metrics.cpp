// SPDX-License-Identifier: Apache-2.0
#include "heartdarts/metrics.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <json.hpp>
#include <sstream>
#include <vector>

namespace heartdarts {

namespace {

constexpr std::string_view kReportHeader = "heartdarts-metrics v1";

std::string pct(const std::optional<double>& v) {
    if (!v) return "n/a";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", *v);
    return buf;
}

std::vector<std::string> tokens(std::string_view line) {
    std::vector<std::string> out;
    std::istringstream is{std::string(line)};
    std::string t;
    while (is >> t) out.push_back(t);
    return out;
}

double parse_double(const std::string& s, std::string_view what) {
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size())
        throw ParseError("report: bad " + std::string(what) + " \"" + s + "\"");
    return v;
}

std::optional<double> parse_pct(const std::string& s, std::string_view what) {
    if (s == "n/a") return std::nullopt;
    return parse_double(s, what);
}

std::uint64_t parse_count(const std::string& s) {
    std::uint64_t v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) throw ParseError("report: bad count \"" + s + "\"");
    return v;
}

}  // namespace

void ConfusionMatrix::accumulate(int truth, int predicted) {
    const int n = static_cast<int>(kNumAamiClasses);
    if (truth < 0 || truth >= n || predicted < 0 || predicted >= n)
        throw InputError("confusion matrix labels must lie in [0, 5), got (" + std::to_string(truth) + ", " +
                         std::to_string(predicted) + ")");
    ++counts_[static_cast<std::size_t>(truth)][static_cast<std::size_t>(predicted)];
}

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
    for (std::size_t i = 0; i < kNumAamiClasses; ++i)
        for (std::size_t j = 0; j < kNumAamiClasses; ++j) counts_[i][j] += other.counts_[i][j];
}

std::uint64_t ConfusionMatrix::row_sum(std::size_t c) const {
    std::uint64_t s = 0;
    for (auto v : counts_.at(c)) s += v;
    return s;
}

std::uint64_t ConfusionMatrix::col_sum(std::size_t c) const {
    std::uint64_t s = 0;
    for (const auto& row : counts_) s += row.at(c);
    return s;
}

std::uint64_t ConfusionMatrix::trace() const {
    std::uint64_t s = 0;
    for (std::size_t i = 0; i < kNumAamiClasses; ++i) s += counts_[i][i];
    return s;
}

std::uint64_t ConfusionMatrix::total() const {
    std::uint64_t s = 0;
    for (std::size_t i = 0; i < kNumAamiClasses; ++i) s += row_sum(i);
    return s;
}

ClassMetrics per_class_metrics(const ConfusionMatrix& cm, std::size_t c) {
    const double tp = static_cast<double>(cm.at(c, c));
    const double fn = static_cast<double>(cm.row_sum(c)) - tp;
    const double fp = static_cast<double>(cm.col_sum(c)) - tp;
    const double tn = static_cast<double>(cm.total()) - tp - fn - fp;
    auto ratio = [](double num, double den) -> std::optional<double> {
        if (den == 0.0) return std::nullopt;
        return 100.0 * num / den;
    };
    ClassMetrics m;
    m.sensitivity = ratio(tp, tp + fn);
    m.positive_predictivity = ratio(tp, tp + fp);
    m.specificity = ratio(tn, tn + fp);
    if (m.sensitivity && m.positive_predictivity) {
        const double s = *m.sensitivity + *m.positive_predictivity;
        m.f1 = s == 0.0 ? 0.0 : 2.0 * *m.sensitivity * *m.positive_predictivity / s;
    }
    return m;
}

double round_percent(double v) { return std::round(v * 100.0) / 100.0; }

MetricsReport overall_metrics(const ConfusionMatrix& cm) {
    if (cm.total() == 0) throw InputError("metrics of an empty confusion matrix");
    MetricsReport r;
    r.matrix = cm;
    double se_sum = 0.0, ppv_sum = 0.0, f1_sum = 0.0;
    std::size_t used = 0;
    for (std::size_t c = 0; c < kNumAamiClasses; ++c) {
        const auto m = per_class_metrics(cm, c);
        auto rounded = [](const std::optional<double>& v) -> std::optional<double> {
            if (!v) return std::nullopt;
            return round_percent(*v);
        };
        r.sensitivity[c] = rounded(m.sensitivity);
        r.positive_predictivity[c] = rounded(m.positive_predictivity);
        r.specificity[c] = rounded(m.specificity);
        if (!m.sensitivity || !m.positive_predictivity) {
            ++r.excluded_classes;
            continue;
        }
        se_sum += *m.sensitivity;
        ppv_sum += *m.positive_predictivity;
        f1_sum += *m.f1;
        ++used;
    }
    r.accuracy = round_percent(100.0 * static_cast<double>(cm.trace()) / static_cast<double>(cm.total()));
    if (used > 0) {
        const double se = se_sum / static_cast<double>(used);
        const double ppv = ppv_sum / static_cast<double>(used);
        r.macro_sensitivity = round_percent(se);
        r.macro_positive_predictivity = round_percent(ppv);
        r.macro_f1 = round_percent(se + ppv == 0.0 ? 0.0 : 2.0 * se * ppv / (se + ppv));
        r.mean_class_f1 = round_percent(f1_sum / static_cast<double>(used));
    }
    return r;
}

std::string format_report(const MetricsReport& r) {
    std::ostringstream os;
    char buf[160];
    os << kReportHeader << '\n';
    std::snprintf(buf, sizeof buf, "%-6s %8s %8s %8s %8s %8s %8s %8s %8s %8s\n", "true", "N", "S", "V", "F", "Q",
                  "+P(%)", "Se(%)", "Spe(%)", "Acc(%)");
    os << buf;
    for (std::size_t c = 0; c < kNumAamiClasses; ++c) {
        std::snprintf(buf, sizeof buf, "%-6s", std::string(class_name(kAllAamiClasses[c])).c_str());
        os << buf;
        for (std::size_t p = 0; p < kNumAamiClasses; ++p) {
            std::snprintf(buf, sizeof buf, " %8llu", static_cast<unsigned long long>(r.matrix.at(c, p)));
            os << buf;
        }
        std::snprintf(buf, sizeof buf, " %8s %8s %8s", pct(r.positive_predictivity[c]).c_str(),
                      pct(r.sensitivity[c]).c_str(), pct(r.specificity[c]).c_str());
        os << buf;
        if (c == 0) {
            std::snprintf(buf, sizeof buf, " %8s", pct(r.accuracy).c_str());
            os << buf;
        }
        os << '\n';
    }
    os << "total " << r.matrix.total() << '\n';
    os << "accuracy " << pct(r.accuracy) << '\n';
    os << "macro_se " << pct(r.macro_sensitivity) << '\n';
    os << "macro_ppv " << pct(r.macro_positive_predictivity) << '\n';
    os << "macro_f1 " << pct(r.macro_f1) << '\n';
    os << "mean_class_f1 " << pct(r.mean_class_f1) << '\n';
    os << "excluded_classes " << r.excluded_classes << '\n';
    return os.str();
}

MetricsReport parse_report(std::string_view text) {
    std::vector<std::string> lines;
    {
        std::istringstream is{std::string(text)};
        std::string line;
        while (std::getline(is, line))
            if (!line.empty()) lines.push_back(line);
    }
    if (lines.size() < 2 + kNumAamiClasses + 7 || lines[0] != kReportHeader)
        throw ParseError("report: missing header or truncated");
    MetricsReport r;
    ConfusionMatrix::Counts counts{};
    for (std::size_t c = 0; c < kNumAamiClasses; ++c) {
        const auto t = tokens(lines[2 + c]);
        const std::size_t expected = c == 0 ? 10 : 9;
        if (t.size() != expected || t[0] != class_name(kAllAamiClasses[c]))
            throw ParseError("report: malformed matrix row " + std::to_string(c + 1));
        for (std::size_t p = 0; p < kNumAamiClasses; ++p) counts[c][p] = parse_count(t[1 + p]);
        r.positive_predictivity[c] = parse_pct(t[6], "+P");
        r.sensitivity[c] = parse_pct(t[7], "Se");
        r.specificity[c] = parse_pct(t[8], "Spe");
    }
    r.matrix = ConfusionMatrix(counts);
    auto kv = [&](std::size_t i, std::string_view key) {
        const auto t = tokens(lines[2 + kNumAamiClasses + i]);
        if (t.size() != 2 || t[0] != key) throw ParseError("report: expected \"" + std::string(key) + "\"");
        return t[1];
    };
    if (parse_count(kv(0, "total")) != r.matrix.total()) throw ParseError("report: total disagrees with matrix");
    r.accuracy = parse_double(kv(1, "accuracy"), "accuracy");
    r.macro_sensitivity = parse_double(kv(2, "macro_se"), "macro_se");
    r.macro_positive_predictivity = parse_double(kv(3, "macro_ppv"), "macro_ppv");
    r.macro_f1 = parse_double(kv(4, "macro_f1"), "macro_f1");
    r.mean_class_f1 = parse_double(kv(5, "mean_class_f1"), "mean_class_f1");
    r.excluded_classes = parse_count(kv(6, "excluded_classes"));
    return r;
}

std::string report_to_json(const MetricsReport& r) {
    nlohmann::ordered_json j;
    auto opt = [](const std::optional<double>& v) -> nlohmann::ordered_json {
        if (!v) return nullptr;
        return *v;
    };
    nlohmann::ordered_json classes = nlohmann::ordered_json::object();
    for (std::size_t c = 0; c < kNumAamiClasses; ++c) {
        classes[std::string(class_name(kAllAamiClasses[c]))] = {
            {"positive_predictivity", opt(r.positive_predictivity[c])},
            {"sensitivity", opt(r.sensitivity[c])},
            {"specificity", opt(r.specificity[c])},
        };
    }
    j["matrix"] = r.matrix.counts();
    j["total"] = r.matrix.total();
    j["classes"] = classes;
    j["accuracy"] = r.accuracy;
    j["macro_sensitivity"] = r.macro_sensitivity;
    j["macro_positive_predictivity"] = r.macro_positive_predictivity;
    j["macro_f1"] = r.macro_f1;
    j["mean_class_f1"] = r.mean_class_f1;
    j["excluded_classes"] = r.excluded_classes;
    return j.dump(2) + "\n";
}

}  // namespace heartdarts
