#pragma once

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "gnnaudit/config.hpp"
#include "gnnaudit/defense.hpp"
#include "gnnaudit/metrics.hpp"

namespace gnnaudit {

inline constexpr const char* kSchemaVersion = "1.0.0";

struct SweepPointResult {
    DefenseConfig defense;
    std::vector<MetricsReport> per_split;
    MetricsAggregate agg;

    bool operator==(const SweepPointResult& o) const {
        return defense == o.defense && per_split == o.per_split && agg.mean == o.agg.mean &&
               agg.stddev == o.agg.stddev && agg.count == o.agg.count;
    }
};

// Full experiment output. Equality ignores wall-clock timings, which are
// reported but excluded from determinism guarantees.
struct RunReport {
    std::string schema_version = kSchemaVersion;
    std::vector<std::pair<std::string, std::string>> config_echo;
    std::vector<MetricsReport> splits;  // primary defense point, one per repetition
    MetricsAggregate aggregate;
    std::vector<SweepPointResult> sweep;
    double wall_clock_seconds = 0.0;

    bool operator==(const RunReport& o) const {
        return schema_version == o.schema_version && config_echo == o.config_echo && splits == o.splits &&
               aggregate.mean == o.aggregate.mean && aggregate.stddev == o.aggregate.stddev &&
               aggregate.count == o.aggregate.count && sweep == o.sweep;
    }
};

namespace detail {

using ordered_json = nlohmann::ordered_json;

inline ordered_json histogram_to_json(const HomophilyHistogram& h) {
    auto grid = [](const std::array<std::array<std::int64_t, 10>, 10>& g) {
        std::vector<std::vector<std::int64_t>> rows;
        for (const auto& row : g) rows.emplace_back(row.begin(), row.end());
        return rows;
    };
    return ordered_json{{"correct", grid(h.correct)},
                        {"incorrect", grid(h.incorrect)},
                        {"excluded_isolated", h.excluded_isolated}};
}

inline HomophilyHistogram histogram_from_json(const ordered_json& j) {
    HomophilyHistogram h;
    auto fill = [&](const ordered_json& rows, std::array<std::array<std::int64_t, 10>, 10>& g) {
        if (rows.size() != 10) throw std::runtime_error("report: malformed homophily histogram");
        for (std::size_t i = 0; i < 10; ++i) {
            if (rows[i].size() != 10) throw std::runtime_error("report: malformed homophily histogram");
            for (std::size_t c = 0; c < 10; ++c) g[i][c] = rows[i][c].get<std::int64_t>();
        }
    };
    fill(j.at("correct"), h.correct);
    fill(j.at("incorrect"), h.incorrect);
    h.excluded_isolated = j.at("excluded_isolated").get<std::int64_t>();
    return h;
}

inline ordered_json metrics_to_json(const MetricsReport& m) {
    return ordered_json{{"attack_auroc", m.attack_auroc},
                        {"attack_precision", m.attack_precision},
                        {"attack_recall", m.attack_recall},
                        {"target_train_acc", m.target_train_acc},
                        {"target_test_acc", m.target_test_acc},
                        {"label_loss", m.label_loss},
                        {"confidence_distortion", m.confidence_distortion},
                        {"homophily_joint", histogram_to_json(m.homophily_joint)}};
}

inline MetricsReport metrics_from_json(const ordered_json& j) {
    MetricsReport m;
    m.attack_auroc = j.at("attack_auroc").get<double>();
    m.attack_precision = j.at("attack_precision").get<double>();
    m.attack_recall = j.at("attack_recall").get<double>();
    m.target_train_acc = j.at("target_train_acc").get<double>();
    m.target_test_acc = j.at("target_test_acc").get<double>();
    m.label_loss = j.at("label_loss").get<double>();
    m.confidence_distortion = j.at("confidence_distortion").get<double>();
    m.homophily_joint = histogram_from_json(j.at("homophily_joint"));
    return m;
}

inline ordered_json aggregate_to_json(const MetricsAggregate& a) {
    return ordered_json{{"mean", metrics_to_json(a.mean)}, {"std", metrics_to_json(a.stddev)}, {"count", a.count}};
}

inline MetricsAggregate aggregate_from_json(const ordered_json& j) {
    MetricsAggregate a;
    a.mean = metrics_from_json(j.at("mean"));
    a.stddev = metrics_from_json(j.at("std"));
    a.count = j.at("count").get<int>();
    return a;
}

}  // namespace detail

inline detail::ordered_json report_to_json(const RunReport& report) {
    detail::ordered_json config = detail::ordered_json::object();
    for (const auto& [key, value] : report.config_echo) config[key] = value;
    detail::ordered_json splits = detail::ordered_json::array();
    for (const auto& m : report.splits) splits.push_back(detail::metrics_to_json(m));
    detail::ordered_json sweep = detail::ordered_json::array();
    for (const auto& point : report.sweep) {
        detail::ordered_json row{{"defense", defense_kind_name(point.defense.kind)},
                                 {"beta", point.defense.beta},
                                 {"psi", point.defense.psi},
                                 {"k", point.defense.k},
                                 {"auroc", point.agg.mean.attack_auroc},
                                 {"precision", point.agg.mean.attack_precision},
                                 {"recall", point.agg.mean.attack_recall},
                                 {"label_loss", point.agg.mean.label_loss},
                                 {"confidence_distortion", point.agg.mean.confidence_distortion}};
        row["normalize"] = point.defense.normalize;
        detail::ordered_json per_split = detail::ordered_json::array();
        for (const auto& m : point.per_split) per_split.push_back(detail::metrics_to_json(m));
        row["per_split"] = per_split;
        sweep.push_back(row);
    }
    return detail::ordered_json{{"schema_version", report.schema_version},
                                {"config", config},
                                {"splits", splits},
                                {"aggregate", detail::aggregate_to_json(report.aggregate)},
                                {"sweep", sweep},
                                {"wall_clock_seconds", report.wall_clock_seconds}};
}

inline RunReport report_from_json(const detail::ordered_json& j) {
    RunReport report;
    report.schema_version = j.at("schema_version").get<std::string>();
    for (const auto& [key, value] : j.at("config").items())
        report.config_echo.emplace_back(key, value.get<std::string>());
    for (const auto& m : j.at("splits")) report.splits.push_back(detail::metrics_from_json(m));
    report.aggregate = detail::aggregate_from_json(j.at("aggregate"));
    for (const auto& row : j.at("sweep")) {
        SweepPointResult point;
        point.defense.kind = defense_kind_from_name(row.at("defense").get<std::string>());
        point.defense.beta = row.at("beta").get<double>();
        point.defense.psi = row.at("psi").get<int>();
        point.defense.k = row.at("k").get<int>();
        point.defense.normalize = row.value("normalize", true);
        for (const auto& m : row.at("per_split")) point.per_split.push_back(detail::metrics_from_json(m));
        if (!point.per_split.empty()) point.agg = aggregate(point.per_split);
        report.sweep.push_back(std::move(point));
    }
    report.wall_clock_seconds = j.value("wall_clock_seconds", 0.0);
    return report;
}

namespace detail {
inline std::string csv_path_for(const std::string& json_path) {
    const auto slash = json_path.find_last_of('/');
    const auto dot = json_path.find_last_of('.');
    if (dot != std::string::npos && (slash == std::string::npos || dot > slash))
        return json_path.substr(0, dot) + ".csv";
    return json_path + ".csv";
}

inline void append_csv_row(std::string& csv, const DefenseConfig& d, const std::string& split_tag,
                           const MetricsReport& m) {
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%s,%.17g,%d,%d,%s,%.17g,%.17g,%.17g,%.17g,%.17g\n", defense_kind_name(d.kind),
                  d.beta, d.psi, d.k, split_tag.c_str(), m.attack_auroc, m.attack_precision, m.attack_recall,
                  m.label_loss, m.confidence_distortion);
    csv += buf;
}
}  // namespace detail

// Writes the JSON report and a flat CSV of the sweep table (one row per sweep
// point per split, plus mean and std rows per point) next to it.
inline void emit_report(const RunReport& report, const std::string& path) {
    {
        std::ofstream out(path);
        if (!out) throw std::runtime_error("emit_report: cannot open " + path);
        out << report_to_json(report).dump(2) << '\n';
        if (!out) throw std::runtime_error("emit_report: write failure on " + path);
    }
    std::string csv = "defense,beta,psi,k,split,auroc,precision,recall,label_loss,confidence_distortion\n";
    for (const auto& point : report.sweep) {
        for (std::size_t s = 0; s < point.per_split.size(); ++s)
            detail::append_csv_row(csv, point.defense, std::to_string(s), point.per_split[s]);
        detail::append_csv_row(csv, point.defense, "mean", point.agg.mean);
        detail::append_csv_row(csv, point.defense, "std", point.agg.stddev);
    }
    const std::string csv_path = detail::csv_path_for(path);
    std::ofstream out(csv_path);
    if (!out) throw std::runtime_error("emit_report: cannot open " + csv_path);
    out << csv;
    if (!out) throw std::runtime_error("emit_report: write failure on " + csv_path);
}

inline RunReport load_report(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_report: cannot open " + path);
    detail::ordered_json j;
    in >> j;
    return report_from_json(j);
}

struct DefenseComparison {
    std::string defense;
    double beta = 0.0;
    int psi = 1;
    int k = 0;
    double auroc = 0.0;
    double attack_drop = 0.0; // undefended AUROC minus this point's AUROC
    double label_loss = 0.0;
    double confidence_distortion = 0.0;
};

// Ranking of every evaluated defense point against the undefended baseline,
// sorted by label-loss budget and, within a budget, by attack drop. The
// primary point is reconstructed from the config echo; the baseline is the
// first undefended point among the sweep rows and the primary.
inline std::vector<DefenseComparison> compare_defenses(const RunReport& report) {
    double baseline_auroc = 0.0;
    bool baseline_found = false;
    std::vector<DefenseComparison> rows;

    auto add_row = [&](const DefenseConfig& d, const MetricsReport& mean) {
        DefenseComparison row;
        row.defense = defense_kind_name(d.kind);
        row.beta = d.beta;
        row.psi = d.psi;
        row.k = d.k;
        row.auroc = mean.attack_auroc;
        row.label_loss = mean.label_loss;
        row.confidence_distortion = mean.confidence_distortion;
        rows.push_back(row);
        if (d.kind == DefenseKind::none && !baseline_found) {
            baseline_found = true;
            baseline_auroc = mean.attack_auroc;
        }
    };

    for (const auto& point : report.sweep) add_row(point.defense, point.agg.mean);
    if (!report.splits.empty()) {
        DefenseConfig primary;
        for (const auto& [key, value] : report.config_echo) {
            if (key == "defense.kind") primary.kind = defense_kind_from_name(value);
            else if (key == "defense.beta") primary.beta = std::stod(value);
            else if (key == "defense.psi") primary.psi = std::stoi(value);
            else if (key == "defense.k") primary.k = std::stoi(value);
            else if (key == "defense.normalize") primary.normalize = value == "true";
        }
        add_row(primary, report.aggregate.mean);
    }
    if (!baseline_found) throw std::invalid_argument("compare_defenses: missing baseline (defense=none) row");
    if (rows.size() < 2) throw std::invalid_argument("compare_defenses: need at least two defense points");

    for (auto& row : rows) row.attack_drop = baseline_auroc - row.auroc;
    std::stable_sort(rows.begin(), rows.end(), [](const DefenseComparison& a, const DefenseComparison& b) {
        if (a.label_loss != b.label_loss) return a.label_loss < b.label_loss;
        return a.attack_drop > b.attack_drop;
    });
    return rows;
}

}  // namespace gnnaudit
