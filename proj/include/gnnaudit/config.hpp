#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "gnnaudit/attack.hpp"
#include "gnnaudit/dataset.hpp"
#include "gnnaudit/defense.hpp"
#include "gnnaudit/models.hpp"
#include "gnnaudit/trainer.hpp"

namespace gnnaudit {

// Flat key=value configuration document: one `section.key = value` pair per
// line, `#` comments, blank lines ignored. Unknown keys are errors so typos
// cannot silently fall back to defaults.
struct KeyValues {
    std::vector<std::pair<std::string, std::string>> items; // file order
    std::map<std::string, std::string> map;
    mutable std::set<std::string> consumed;

    bool has(const std::string& key) const { return map.count(key) != 0; }

    std::string get_string(const std::string& key, const std::string& fallback) const {
        consumed.insert(key);
        auto it = map.find(key);
        return it == map.end() ? fallback : it->second;
    }
    long get_int(const std::string& key, long fallback) const {
        consumed.insert(key);
        auto it = map.find(key);
        if (it == map.end()) return fallback;
        return detail::parse_int(it->second, key.c_str());
    }
    double get_double(const std::string& key, double fallback) const {
        consumed.insert(key);
        auto it = map.find(key);
        if (it == map.end()) return fallback;
        return detail::parse_real(it->second, key.c_str());
    }
    bool get_bool(const std::string& key, bool fallback) const {
        consumed.insert(key);
        auto it = map.find(key);
        if (it == map.end()) return fallback;
        if (it->second == "true" || it->second == "1") return true;
        if (it->second == "false" || it->second == "0") return false;
        throw std::invalid_argument("config: boolean expected for " + key);
    }
    std::vector<double> get_double_list(const std::string& key) const {
        consumed.insert(key);
        std::vector<double> out;
        auto it = map.find(key);
        if (it == map.end()) return out;
        std::stringstream ss(it->second);
        std::string tok;
        while (std::getline(ss, tok, ',')) {
            // trim
            const auto b = tok.find_first_not_of(" \t");
            const auto e = tok.find_last_not_of(" \t");
            if (b == std::string::npos) throw std::invalid_argument("config: empty list entry in " + key);
            out.push_back(detail::parse_real(tok.substr(b, e - b + 1), key.c_str()));
        }
        if (out.empty()) throw std::invalid_argument("config: list key must not be empty: " + key);
        return out;
    }
    std::vector<long> get_int_list(const std::string& key) const {
        std::vector<long> out;
        for (double v : get_double_list(key)) {
            const long i = static_cast<long>(v);
            if (static_cast<double>(i) != v) throw std::invalid_argument("config: integer list expected for " + key);
            out.push_back(i);
        }
        return out;
    }
    void check_all_consumed() const {
        for (const auto& [key, value] : map) {
            (void)value;
            if (!consumed.count(key)) throw std::invalid_argument("config: unknown key '" + key + "'");
        }
    }
};

inline KeyValues parse_key_values(std::istream& in) {
    KeyValues kv;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const auto first = line.find_first_not_of(" \t\r\n");
        if (first == std::string::npos) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config: line " + std::to_string(lineno) + " is not key = value");
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t\r\n");
            if (b == std::string::npos) return std::string();
            const auto e = s.find_last_not_of(" \t\r\n");
            return s.substr(b, e - b + 1);
        };
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) throw std::invalid_argument("config: empty key at line " + std::to_string(lineno));
        if (kv.map.count(key)) throw std::invalid_argument("config: duplicate key '" + key + "'");
        kv.items.emplace_back(key, value);
        kv.map[key] = value;
    }
    return kv;
}

inline KeyValues parse_key_values(const std::string& text) {
    std::istringstream in(text);
    return parse_key_values(in);
}

inline KeyValues load_key_values(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("config: cannot open " + path);
    return parse_key_values(in);
}

struct DatasetSpec {
    std::string kind = "sbm"; // sbm | path | cora_replica | citeseer_replica
    std::string path;
    std::int32_t declared_classes = -1; // for path datasets
    SbmParams sbm;
};

struct ExperimentConfig {
    DatasetSpec dataset;
    bool transfer = false;          // shadow model on a different dataset
    DatasetSpec shadow_dataset;     // used only when transfer

    Setting setting = Setting::tstf;
    ModelConfig target_model;
    ModelConfig shadow_model;
    ShadowSupervision supervision = ShadowSupervision::ground_truth;

    TrainConfig train;
    AttackTrainConfig attack;
    int topn = 0; // 0 = automatic: full posterior, or min(class counts) when they differ

    DefenseConfig defense;             // primary defense (what `splits` reports)
    std::vector<DefenseConfig> sweep;  // additional evaluated defense points

    SplitSizes sizes;
    bool sizes_set = false;
    SplitSizes shadow_sizes;
    bool shadow_sizes_set = false;

    int repetitions = 10;
    std::uint64_t master_seed = 1;
    int workers = 1;
};

namespace detail {

inline DatasetSpec parse_dataset_spec(const KeyValues& kv, const std::string& prefix) {
    DatasetSpec ds;
    ds.kind = kv.get_string(prefix + ".kind", ds.kind);
    if (ds.kind != "sbm" && ds.kind != "path" && ds.kind != "cora_replica" && ds.kind != "citeseer_replica")
        throw std::invalid_argument("config: unknown dataset kind '" + ds.kind + "'");
    ds.path = kv.get_string(prefix + ".path", "");
    if (ds.kind == "path" && ds.path.empty()) throw std::invalid_argument("config: " + prefix + ".path required");
    ds.declared_classes = static_cast<std::int32_t>(kv.get_int(prefix + ".num_classes", -1));
    ds.sbm.num_classes = static_cast<std::int32_t>(kv.get_int(prefix + ".sbm.num_classes", ds.sbm.num_classes));
    ds.sbm.nodes_per_class =
        static_cast<std::int32_t>(kv.get_int(prefix + ".sbm.nodes_per_class", ds.sbm.nodes_per_class));
    ds.sbm.intra_p = kv.get_double(prefix + ".sbm.intra_p", ds.sbm.intra_p);
    ds.sbm.inter_p = kv.get_double(prefix + ".sbm.inter_p", ds.sbm.inter_p);
    ds.sbm.feature_dim = static_cast<std::int32_t>(kv.get_int(prefix + ".sbm.feature_dim", ds.sbm.feature_dim));
    ds.sbm.class_mean_separation = kv.get_double(prefix + ".sbm.class_mean_separation", ds.sbm.class_mean_separation);
    ds.sbm.feature_noise_std = kv.get_double(prefix + ".sbm.feature_noise_std", ds.sbm.feature_noise_std);
    return ds;
}

inline int parse_hidden_dim(const KeyValues& kv) {
    const long hidden = kv.get_int("model.hidden_dim", 256);
    if (hidden != 256 && hidden != 128 && hidden != 64)
        throw std::invalid_argument("config: model.hidden_dim must be one of {256, 128, 64}");
    return static_cast<int>(hidden);
}

inline SplitSizes parse_split_sizes(const KeyValues& kv, const std::string& prefix, bool& any_set) {
    SplitSizes sizes;
    auto grab = [&](const char* name, int& slot) {
        const long v = kv.get_int(prefix + "." + name, -1);
        if (v >= 0) {
            slot = static_cast<int>(v);
            any_set = true;
        }
    };
    grab("target_train", sizes.target_train);
    grab("shadow_train", sizes.shadow_train);
    grab("shadow_out", sizes.shadow_out);
    grab("attack_eval", sizes.attack_eval);
    grab("target_out", sizes.target_out);
    return sizes;
}

}  // namespace detail

inline ExperimentConfig parse_experiment_config(const KeyValues& kv) {
    ExperimentConfig cfg;
    cfg.dataset = detail::parse_dataset_spec(kv, "dataset");
    if (kv.has("transfer.dataset.kind") || kv.has("transfer.dataset.path")) {
        cfg.transfer = true;
        cfg.shadow_dataset = detail::parse_dataset_spec(kv, "transfer.dataset");
    }

    cfg.setting = setting_from_name(kv.get_string("setting", "tstf"));
    const int hidden = detail::parse_hidden_dim(kv);
    const int heads = static_cast<int>(kv.get_int("model.num_heads", 4));
    const int s1 = static_cast<int>(kv.get_int("model.sample_size1", 25));
    const int s2 = static_cast<int>(kv.get_int("model.sample_size2", 10));
    cfg.target_model.kind = model_kind_from_name(kv.get_string("target.kind", "gcn"));
    cfg.shadow_model.kind = model_kind_from_name(kv.get_string("shadow.kind", "gcn"));
    for (ModelConfig* m : {&cfg.target_model, &cfg.shadow_model}) {
        m->hidden_dim = hidden;
        m->num_heads = heads;
        m->sample_sizes = {s1, s2};
    }
    cfg.supervision = shadow_supervision_from_name(kv.get_string("shadow.supervision", "ground_truth"));

    cfg.train.epochs = static_cast<int>(kv.get_int("train.epochs", cfg.train.epochs));
    cfg.train.lr = kv.get_double("train.lr", cfg.train.lr);
    cfg.train.mode = train_mode_from_name(kv.get_string("train.mode", "normal"));
    cfg.train.early_stop_train_loss = kv.get_double("train.early_stop_train_loss", cfg.train.early_stop_train_loss);
    cfg.train.eval_every = static_cast<int>(kv.get_int("train.eval_every", cfg.train.eval_every));
    cfg.train.batch_size = static_cast<int>(kv.get_int("train.batch_size", cfg.train.batch_size));
    cfg.train.log_path = kv.get_string("train.log_path", "");
    validate_train_config(cfg.train);

    cfg.attack.hidden1 = static_cast<int>(kv.get_int("attack.hidden1", cfg.attack.hidden1));
    cfg.attack.hidden2 = static_cast<int>(kv.get_int("attack.hidden2", cfg.attack.hidden2));
    cfg.attack.epochs = static_cast<int>(kv.get_int("attack.epochs", cfg.attack.epochs));
    cfg.attack.lr = kv.get_double("attack.lr", cfg.attack.lr);
    cfg.topn = static_cast<int>(kv.get_int("attack.topn", 0));
    if (cfg.topn < 0) throw std::invalid_argument("config: attack.topn must be >= 0");

    cfg.defense.kind = defense_kind_from_name(kv.get_string("defense.kind", "none"));
    cfg.defense.beta = kv.get_double("defense.beta", 0.0);
    cfg.defense.psi = static_cast<int>(kv.get_int("defense.psi", 1));
    cfg.defense.k = static_cast<int>(kv.get_int("defense.k", 0));
    cfg.defense.normalize = kv.get_bool("defense.normalize", true);
    if (cfg.defense.beta < 0) throw std::invalid_argument("config: defense.beta must be >= 0");

    // sweep lists expand into defense points, in declaration order per kind
    if (kv.has("sweep.vanpd.beta"))
        for (double beta : kv.get_double_list("sweep.vanpd.beta")) {
            DefenseConfig d;
            d.kind = DefenseKind::vanpd;
            d.beta = beta;
            d.normalize = cfg.defense.normalize;
            cfg.sweep.push_back(d);
        }
    if (kv.has("sweep.lbp.beta")) {
        std::vector<long> psis{2};
        if (kv.has("sweep.lbp.psi")) psis = kv.get_int_list("sweep.lbp.psi");
        for (double beta : kv.get_double_list("sweep.lbp.beta"))
            for (long psi : psis) {
                DefenseConfig d;
                d.kind = DefenseKind::lbp;
                d.beta = beta;
                d.psi = static_cast<int>(psi);
                d.normalize = cfg.defense.normalize;
                cfg.sweep.push_back(d);
            }
    } else if (kv.has("sweep.lbp.psi")) {
        throw std::invalid_argument("config: sweep.lbp.psi requires sweep.lbp.beta");
    }
    if (kv.has("sweep.nsd.k"))
        for (long k : kv.get_int_list("sweep.nsd.k")) {
            if (k < 0) throw std::invalid_argument("config: sweep.nsd.k entries must be >= 0");
            DefenseConfig d;
            d.kind = DefenseKind::nsd;
            d.k = static_cast<int>(k);
            cfg.sweep.push_back(d);
        }

    cfg.sizes = detail::parse_split_sizes(kv, "splits", cfg.sizes_set);
    cfg.shadow_sizes = detail::parse_split_sizes(kv, "splits.shadow", cfg.shadow_sizes_set);

    cfg.repetitions = static_cast<int>(kv.get_int("repetitions", cfg.repetitions));
    if (cfg.repetitions < 1) throw std::invalid_argument("config: repetitions must be >= 1");
    const long seed = kv.get_int("master_seed", 1);
    if (seed < 0) throw std::invalid_argument("config: master_seed must be >= 0");
    cfg.master_seed = static_cast<std::uint64_t>(seed);
    cfg.workers = static_cast<int>(kv.get_int("workers", 1));
    if (cfg.workers < 1) throw std::invalid_argument("config: workers must be >= 1");

    kv.check_all_consumed();
    return cfg;
}

inline ExperimentConfig load_experiment_config(const std::string& path) {
    return parse_experiment_config(load_key_values(path));
}

// Complete, deterministic key=value echo: parsing it back reproduces the run.
inline std::vector<std::pair<std::string, std::string>> canonical_config_echo(const ExperimentConfig& cfg) {
    std::vector<std::pair<std::string, std::string>> out;
    auto put = [&](const std::string& k, const std::string& v) { out.emplace_back(k, v); };
    auto put_int = [&](const std::string& k, long v) { put(k, std::to_string(v)); };
    auto put_real = [&](const std::string& k, double v) {
        std::ostringstream ss;
        ss.precision(17);
        ss << v;
        put(k, ss.str());
    };
    auto put_dataset = [&](const std::string& prefix, const DatasetSpec& ds) {
        put(prefix + ".kind", ds.kind);
        if (!ds.path.empty()) put(prefix + ".path", ds.path);
        if (ds.declared_classes >= 0) put_int(prefix + ".num_classes", ds.declared_classes);
        if (ds.kind == "sbm") {
            put_int(prefix + ".sbm.num_classes", ds.sbm.num_classes);
            put_int(prefix + ".sbm.nodes_per_class", ds.sbm.nodes_per_class);
            put_real(prefix + ".sbm.intra_p", ds.sbm.intra_p);
            put_real(prefix + ".sbm.inter_p", ds.sbm.inter_p);
            put_int(prefix + ".sbm.feature_dim", ds.sbm.feature_dim);
            put_real(prefix + ".sbm.class_mean_separation", ds.sbm.class_mean_separation);
            put_real(prefix + ".sbm.feature_noise_std", ds.sbm.feature_noise_std);
        }
    };
    put_dataset("dataset", cfg.dataset);
    if (cfg.transfer) put_dataset("transfer.dataset", cfg.shadow_dataset);
    put("setting", setting_name(cfg.setting));
    put("target.kind", model_kind_name(cfg.target_model.kind));
    put("shadow.kind", model_kind_name(cfg.shadow_model.kind));
    put("shadow.supervision", shadow_supervision_name(cfg.supervision));
    put_int("model.hidden_dim", cfg.target_model.hidden_dim);
    put_int("model.num_heads", cfg.target_model.num_heads);
    put_int("model.sample_size1", cfg.target_model.sample_sizes[0]);
    put_int("model.sample_size2", cfg.target_model.sample_sizes[1]);
    put_int("train.epochs", cfg.train.epochs);
    put_real("train.lr", cfg.train.lr);
    put("train.mode", train_mode_name(cfg.train.mode));
    put_real("train.early_stop_train_loss", cfg.train.early_stop_train_loss);
    put_int("train.eval_every", cfg.train.eval_every);
    put_int("train.batch_size", cfg.train.batch_size);
    if (!cfg.train.log_path.empty()) put("train.log_path", cfg.train.log_path);
    put_int("attack.hidden1", cfg.attack.hidden1);
    put_int("attack.hidden2", cfg.attack.hidden2);
    put_int("attack.epochs", cfg.attack.epochs);
    put_real("attack.lr", cfg.attack.lr);
    put_int("attack.topn", cfg.topn);
    put("defense.kind", defense_kind_name(cfg.defense.kind));
    put_real("defense.beta", cfg.defense.beta);
    put_int("defense.psi", cfg.defense.psi);
    put_int("defense.k", cfg.defense.k);
    put("defense.normalize", cfg.defense.normalize ? "true" : "false");
    if (cfg.sizes_set) {
        put_int("splits.target_train", cfg.sizes.target_train);
        put_int("splits.shadow_train", cfg.sizes.shadow_train);
        put_int("splits.shadow_out", cfg.sizes.shadow_out);
        put_int("splits.attack_eval", cfg.sizes.attack_eval);
        put_int("splits.target_out", cfg.sizes.target_out);
    }
    if (cfg.shadow_sizes_set) {
        put_int("splits.shadow.shadow_train", cfg.shadow_sizes.shadow_train);
        put_int("splits.shadow.shadow_out", cfg.shadow_sizes.shadow_out);
    }
    // sweep points echo per kind as ordered-unique lists; parsing the echo
    // rebuilds the same cross product the lists originally expanded to
    {
        auto append_unique = [](std::string& csv, const std::string& v) {
            std::stringstream existing(csv);
            std::string tok;
            while (std::getline(existing, tok, ','))
                if (tok == v) return;
            csv += (csv.empty() ? "" : ",") + v;
        };
        std::string vanpd_betas, lbp_betas, lbp_psis, nsd_ks;
        for (const DefenseConfig& d : cfg.sweep) {
            std::ostringstream num;
            num.precision(17);
            if (d.kind == DefenseKind::vanpd) {
                num << d.beta;
                append_unique(vanpd_betas, num.str());
            } else if (d.kind == DefenseKind::lbp) {
                num << d.beta;
                append_unique(lbp_betas, num.str());
                append_unique(lbp_psis, std::to_string(d.psi));
            } else if (d.kind == DefenseKind::nsd) {
                append_unique(nsd_ks, std::to_string(d.k));
            }
        }
        if (!vanpd_betas.empty()) put("sweep.vanpd.beta", vanpd_betas);
        if (!lbp_betas.empty()) put("sweep.lbp.beta", lbp_betas);
        if (!lbp_psis.empty()) put("sweep.lbp.psi", lbp_psis);
        if (!nsd_ks.empty()) put("sweep.nsd.k", nsd_ks);
    }
    put_int("repetitions", cfg.repetitions);
    put_int("master_seed", static_cast<long>(cfg.master_seed));
    // `workers` is deliberately not echoed: it is an execution resource knob
    // that never changes results, so reports from any worker count compare
    // equal (timings are likewise excluded from comparisons).
    return out;
}

}  // namespace gnnaudit
