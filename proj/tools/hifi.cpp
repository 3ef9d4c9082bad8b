// hifi: head selection pipeline driver.
//
// Exit codes: 0 success, 2 usage error, 3 data/format error, 4 numerical
// failure (non-convergence, degenerate spectrum).

#include <cstdint>
#include <exception>
#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "hifi/hifi.hpp"

namespace {

enum ExitCode : int { kOk = 0, kUsage = 2, kData = 3, kNumerical = 4 };

void add_pagerank_flags(CLI::App* cmd, hifi::PageRankOptions& pr) {
    cmd->add_option("--d,--damping", pr.damping, "PageRank damping factor in [0, 1)")
        ->capture_default_str()
        ->check(CLI::Range(0.0, 1.0));
    cmd->add_option("--epsilon", pr.epsilon, "L1 convergence bound")->capture_default_str()->check(CLI::PositiveNumber);
    cmd->add_option("--max-iter", pr.max_iter, "iteration cap")->capture_default_str()->check(CLI::PositiveNumber);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Attention-head selection by information richness, correlation and PageRank"};
    app.require_subcommand(1);

    std::size_t workers = 1;
    app.add_option("--workers", workers, "worker threads for synth/analyze (0 = all cores)")->capture_default_str();

    // synth
    std::string synth_config, synth_out;
    auto* synth = app.add_subcommand("synth", "generate a synthetic head-output corpus");
    synth->add_option("config", synth_config, "generator config JSON")->required();
    synth->add_option("--out", synth_out, "output directory")->required();

    // analyze
    std::string analyze_manifest, analyze_out;
    double xi = hifi::kDefaultXi;
    auto* analyze = app.add_subcommand("analyze", "per-layer information richness and correlation");
    analyze->add_option("manifest", analyze_manifest, "corpus manifest JSON")->required();
    analyze->add_option("--out", analyze_out, "output directory")->required();
    analyze->add_option("--xi", xi, "spectral mass threshold in (0, 1]")->capture_default_str();

    // select
    std::string select_dir, select_out, strategy = "layer_wise", variant = "full_hifi";
    bool untransposed = false;
    hifi::pipeline::SelectOptions sel;
    auto* select = app.add_subcommand("select", "PageRank per layer and fine-tuning mask");
    select->add_option("metrics", select_dir, "directory written by analyze")->required();
    select->add_option("--out", select_out, "output directory")->required();
    add_pagerank_flags(select, sel.pagerank);
    select->add_option("--k", sel.strategy.k, "heads per layer")->capture_default_str();
    select->add_option("--strategy", strategy, "layer_wise | mid_top")
        ->capture_default_str()
        ->check(CLI::IsMember({"layer_wise", "mid_top"}));
    select->add_option("--variant", variant, "full_hifi | without_corr | without_corr_inv | without_info | page_inv | random")
        ->capture_default_str()
        ->check(CLI::IsMember({"full_hifi", "without_corr", "without_corr_inv", "without_info", "page_inv", "random"}));
    select->add_option("--seed", sel.seed, "seed for the random variant")->capture_default_str();
    select->add_flag("--untransposed", untransposed, "iterate with M instead of Mᵀ (renormalized); for comparison only");

    // report
    std::string report_mask, report_out;
    std::uint64_t total_params = 0;
    auto* report = app.add_subcommand("report", "trainable-parameter ratio of a mask");
    report->add_option("mask", report_mask, "mask JSON written by select")->required();
    report->add_option("--total-params", total_params, "total parameter count of the model")
        ->required()
        ->check(CLI::PositiveNumber);
    report->add_option("--out", report_out, "also write report.json here");

    // stability
    std::string stab_a, stab_b, stab_out;
    hifi::pipeline::StabilityOptions stab;
    auto* stability = app.add_subcommand("stability", "compare two corpora run through the pipeline");
    stability->add_option("manifest_a", stab_a, "baseline manifest")->required();
    stability->add_option("manifest_b", stab_b, "comparison manifest")->required();
    stability->add_option("--out", stab_out, "output directory")->required();
    stability->add_option("--xi", stab.xi, "spectral mass threshold in (0, 1]")->capture_default_str();
    add_pagerank_flags(stability, stab.pagerank);
    stability->add_option("--k", stab.k, "heads per layer for the overlap statistic")->capture_default_str();
    stability->add_option("--label-a", stab.baseline_label, "baseline label")->capture_default_str();
    stability->add_option("--label-b", stab.label, "comparison label")->capture_default_str();
    stability->add_option("--setting", stab.setting, "varied setting, e.g. SS (sample size) or SL (sequence length)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kUsage;
    }

    try {
        if (*synth) {
            std::cout << hifi::pipeline::synth(synth_config, synth_out, workers).string() << '\n';
        } else if (*analyze) {
            const auto a = hifi::pipeline::analyze(analyze_manifest, analyze_out, xi, workers);
            std::cout << "analyzed " << a.layers.size() << " layers -> " << analyze_out << '\n';
        } else if (*select) {
            sel.strategy.kind = hifi::parse_strategy(strategy);
            sel.variant = hifi::parse_variant(variant);
            sel.pagerank.orientation = untransposed ? hifi::Orientation::untransposed : hifi::Orientation::transposed;
            const auto s = hifi::pipeline::select(select_dir, select_out, sel);
            std::cout << "selected " << s.mask.selected_heads() << " heads -> "
                      << (std::filesystem::path(select_out) / "mask.json").string() << '\n';
        } else if (*report) {
            const auto r = hifi::pipeline::report(report_mask, total_params);
            std::cout << hifi::pipeline::summary(r);
            if (!report_out.empty()) {
                hifi::pipeline::ensure_dir(report_out);
                hifi::pipeline::write_json(std::filesystem::path(report_out) / "report.json", hifi::pipeline::to_json(r));
            }
        } else if (*stability) {
            stab.workers = workers;
            const auto rep = hifi::pipeline::stability(stab_a, stab_b, stab_out, stab);
            std::cout << hifi::to_csv(rep);
        }
    } catch (const std::invalid_argument& e) {
        std::cerr << "hifi: usage error: " << e.what() << '\n';
        return kUsage;
    } catch (const hifi::NumericalError& e) {
        std::cerr << "hifi: numerical failure: " << e.what() << '\n';
        return kNumerical;
    } catch (const hifi::DataError& e) {
        std::cerr << "hifi: data error: " << e.what() << '\n';
        return kData;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "hifi: data error: " << e.what() << '\n';
        return kData;
    } catch (const std::exception& e) {
        std::cerr << "hifi: error: " << e.what() << '\n';
        return kData;
    }
    return kOk;
}
