#include <cstdio>
#include <exception>
#include <iostream>
#include <string>

#include "CLI11.hpp"

#include "gnnaudit/gnnaudit.hpp"

namespace {

void print_aggregate(const gnnaudit::RunReport& report) {
    const gnnaudit::MetricsReport& m = report.aggregate.mean;
    const gnnaudit::MetricsReport& s = report.aggregate.stddev;
    std::printf("splits: %d repetitions at the primary defense point\n", report.aggregate.count);
    std::printf("  attack auroc            %.4f (std %.4f)\n", m.attack_auroc, s.attack_auroc);
    std::printf("  attack precision        %.4f (std %.4f)\n", m.attack_precision, s.attack_precision);
    std::printf("  attack recall           %.4f (std %.4f)\n", m.attack_recall, s.attack_recall);
    std::printf("  target train accuracy   %.4f\n", m.target_train_acc);
    std::printf("  target test accuracy    %.4f\n", m.target_test_acc);
    std::printf("  label loss              %.4f\n", m.label_loss);
    std::printf("  confidence distortion   %.4f\n", m.confidence_distortion);
}

void print_comparison(const gnnaudit::RunReport& report) {
    std::vector<gnnaudit::DefenseComparison> rows;
    try {
        rows = gnnaudit::compare_defenses(report);
    } catch (const std::invalid_argument&) {
        return; // single-point run: nothing to rank
    }
    std::printf("\n%-8s %-10s %-4s %-4s %-8s %-8s %-11s %-10s\n", "defense", "beta", "psi", "k", "auroc", "drop",
                "label_loss", "conf_dist");
    for (const auto& r : rows)
        std::printf("%-8s %-10.4g %-4d %-4d %-8.4f %-8.4f %-11.4f %-10.4f\n", r.defense.c_str(), r.beta, r.psi, r.k,
                    r.auroc, r.attack_drop, r.label_loss, r.confidence_distortion);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"gnnaudit: membership-inference attacks and defenses for graph neural networks"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_path = "run.json";
    long long seed = -1;
    int workers = 0;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("config", config_path, "experiment config (key = value lines)")
            ->required()
            ->check(CLI::ExistingFile);
        cmd->add_option("--seed", seed, "override the config's master seed");
        cmd->add_option("--workers", workers, "override the config's worker count");
        cmd->add_option("--out", out_path, "report path (JSON; a CSV lands next to it)");
    };
    CLI::App* run_cmd = app.add_subcommand("run", "evaluate the primary defense point");
    add_common(run_cmd);
    CLI::App* sweep_cmd = app.add_subcommand("sweep", "evaluate the primary point plus every sweep point");
    add_common(sweep_cmd);

    std::string report_path;
    CLI::App* report_cmd = app.add_subcommand("report", "rank a stored run's defense points against the baseline");
    report_cmd->add_option("run_json", report_path, "report written by run/sweep")->required()->check(CLI::ExistingFile);

    std::string gen_kind = "sbm";
    std::string gen_dir;
    long long gen_seed = 1;
    int gen_classes = 2, gen_nodes = 200;
    double gen_intra = 0.05, gen_inter = 0.005;
    CLI::App* gen_cmd = app.add_subcommand("gen", "write a synthetic dataset (edges.txt/features.csv/labels.csv)");
    gen_cmd->add_option("kind", gen_kind, "sbm | cora_replica | citeseer_replica")
        ->check(CLI::IsMember({"sbm", "cora_replica", "citeseer_replica"}));
    gen_cmd->add_option("--out", gen_dir, "output directory")->required();
    gen_cmd->add_option("--seed", gen_seed, "generation seed");
    gen_cmd->add_option("--classes", gen_classes, "sbm: number of blocks");
    gen_cmd->add_option("--nodes-per-class", gen_nodes, "sbm: nodes per block");
    gen_cmd->add_option("--intra-p", gen_intra, "sbm: within-block edge probability");
    gen_cmd->add_option("--inter-p", gen_inter, "sbm: cross-block edge probability");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run_cmd->parsed() || sweep_cmd->parsed()) {
            gnnaudit::ExperimentConfig cfg = gnnaudit::load_experiment_config(config_path);
            if (seed >= 0) cfg.master_seed = static_cast<std::uint64_t>(seed);
            if (workers > 0) cfg.workers = workers;
            if (run_cmd->parsed()) cfg.sweep.clear();
            const gnnaudit::RunReport report = gnnaudit::run_experiment(cfg);
            gnnaudit::emit_report(report, out_path);
            print_aggregate(report);
            print_comparison(report);
            std::printf("\nwrote %s (%.1f s)\n", out_path.c_str(), report.wall_clock_seconds);
        } else if (report_cmd->parsed()) {
            const gnnaudit::RunReport report = gnnaudit::load_report(report_path);
            print_aggregate(report);
            print_comparison(report);
        } else if (gen_cmd->parsed()) {
            gnnaudit::Graph g;
            const auto useed = static_cast<std::uint64_t>(gen_seed < 0 ? 1 : gen_seed);
            if (gen_kind == "cora_replica") {
                g = gnnaudit::generate_citation_replica(gnnaudit::cora_replica_params(), useed);
            } else if (gen_kind == "citeseer_replica") {
                g = gnnaudit::generate_citation_replica(gnnaudit::citeseer_replica_params(), useed);
            } else {
                gnnaudit::SbmParams p;
                p.num_classes = gen_classes;
                p.nodes_per_class = gen_nodes;
                p.intra_p = gen_intra;
                p.inter_p = gen_inter;
                g = gnnaudit::generate_sbm(p, useed);
            }
            gnnaudit::save_dataset(g, gen_dir);
            std::printf("wrote %s: %d nodes, %lld edges, %d classes, %d features\n", gen_dir.c_str(), g.num_nodes,
                        static_cast<long long>(g.num_edges()), g.num_classes, g.feature_dim());
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
