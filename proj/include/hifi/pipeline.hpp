#pragma once

// File-to-file pipeline stages behind the command-line tool. Stages talk to
// each other only through the JSON documents written here:
//
//   synth      config.json         -> DIR/manifest.json, DIR/hot/*.hot
//   analyze    manifest.json       -> DIR/analysis.json, DIR/metrics_layer_<l>.json
//   select     analysis directory  -> DIR/pagerank_layer_<l>.json, DIR/mask.json
//   report     mask.json           -> summary on stdout, optional DIR/report.json
//   stability  two manifests       -> DIR/stability.json, DIR/stability.csv
//
// Outputs never embed absolute paths, so identical inputs give identical bytes.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "hifi/error.hpp"
#include "hifi/metrics.hpp"
#include "hifi/rankgraph.hpp"
#include "hifi/selector.hpp"
#include "hifi/stability.hpp"
#include "hifi/synthgen.hpp"
#include "hifi/tensor_store.hpp"

namespace hifi::pipeline {

inline nlohmann::json read_json(const fs::path& path) {
    std::ifstream f(path);
    if (!f) throw DataError("cannot open " + path.string());
    try {
        return nlohmann::json::parse(f);
    } catch (const nlohmann::json::exception& e) {
        throw DataError("malformed JSON in " + path.string() + ": " + e.what());
    }
}

inline void write_text(const fs::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError("cannot open for writing: " + path.string());
    f << text;
    if (!f) throw DataError("write failed: " + path.string());
}

inline void write_json(const fs::path& path, const nlohmann::json& j) { write_text(path, j.dump(2) + "\n"); }

inline void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) {
        throw DataError("cannot create output directory " + dir.string() + (ec ? ": " + ec.message() : std::string()));
    }
}

inline std::string layer_file(const char* stem, std::size_t layer) {
    return std::string(stem) + "_layer_" + std::to_string(layer) + ".json";
}

// --- synth -----------------------------------------------------------------

inline fs::path synth(const fs::path& config_path, const fs::path& out_dir, std::size_t workers = 1) {
    const auto config = synth::config_from_json(read_json(config_path));
    synth::generate_corpus(config, out_dir, workers);
    return out_dir / "manifest.json";
}

// --- analyze ---------------------------------------------------------------

struct Analysis {
    ModelGeometry geometry;
    std::vector<LayerMetrics> layers;
};

inline Analysis analyze(const fs::path& manifest_path, const fs::path& out_dir, double xi = kDefaultXi,
                        std::size_t workers = 1) {
    const auto manifest = load_manifest(manifest_path);
    ensure_dir(out_dir);
    Analysis a{manifest.geometry, {}};
    nlohmann::json files = nlohmann::json::array();
    for (std::size_t l = 0; l < manifest.geometry.num_layers; ++l) {
        a.layers.push_back(analyze_layer(manifest, l, xi, workers));
        const auto name = layer_file("metrics", l);
        write_json(out_dir / name, to_json(a.layers.back()));
        files.push_back(name);
    }
    write_json(out_dir / "analysis.json", {{"geometry", geometry_to_json(manifest.geometry)},
                                           {"xi", xi},
                                           {"n", manifest.num_samples()},
                                           {"layers", std::move(files)}});
    return a;
}

/// Loads analysis.json and every per-layer metrics file it lists.
inline Analysis load_analysis(const fs::path& dir) {
    const auto index = read_json(dir / "analysis.json");
    Analysis a;
    try {
        a.geometry = geometry_from_json(index.at("geometry"));
        const auto files = index.at("layers").get<std::vector<std::string>>();
        if (files.size() != a.geometry.num_layers) throw DataError("analysis: expected one metrics file per layer");
        for (std::size_t l = 0; l < files.size(); ++l) {
            auto lm = layer_metrics_from_json(read_json(dir / files[l]));
            if (lm.richness.layer != l) throw DataError("analysis: " + files[l] + " holds the wrong layer");
            if (lm.richness.values.size() != a.geometry.num_heads) throw DataError("analysis: " + files[l] + " has wrong H");
            a.layers.push_back(std::move(lm));
        }
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("analysis: malformed index: ") + e.what());
    }
    return a;
}

// --- select ----------------------------------------------------------------

struct SelectOptions {
    PageRankOptions pagerank;
    Strategy strategy;
    AblationVariant variant = AblationVariant::full_hifi;
    std::uint64_t seed = 0;
};

struct Selection {
    std::vector<PageRankResult> pagerank;
    SelectionMask mask;
};

inline Selection select(const fs::path& analysis_dir, const fs::path& out_dir, const SelectOptions& opt) {
    const auto analysis = load_analysis(analysis_dir);
    if (opt.strategy.k == 0 || opt.strategy.k > analysis.geometry.num_heads) {
        throw std::invalid_argument("k must be in [1, H]");
    }
    ensure_dir(out_dir);
    Selection sel;
    std::map<std::size_t, LayerSelectionInputs> inputs;
    for (const auto& lm : analysis.layers) {
        const std::size_t l = lm.richness.layer;
        auto pr = pagerank(build_graph(lm.richness, lm.correlation), opt.pagerank);
        write_json(out_dir / layer_file("pagerank", l), to_json(pr, l));
        inputs[l] = {lm.richness, lm.correlation, pr.p_star};
        sel.pagerank.push_back(std::move(pr));
    }
    sel.mask = build_variant_mask(inputs, analysis.geometry, opt.strategy, opt.variant, opt.seed);
    write_json(out_dir / "mask.json", to_json(sel.mask));
    return sel;
}

// --- report ----------------------------------------------------------------

struct Report {
    SelectionMask mask;
    std::uint64_t selected_heads = 0;
    std::uint64_t trainable_params = 0;
    std::uint64_t total_params = 0;
    double ratio = 0.0;
};

inline Report report(const fs::path& mask_path, std::uint64_t total_params) {
    Report r;
    r.mask = mask_from_json(read_json(mask_path));
    r.selected_heads = r.mask.selected_heads();
    r.trainable_params = r.selected_heads * head_parameters(r.mask.geometry);
    r.total_params = total_params;
    r.ratio = trainable_ratio(r.mask.geometry, r.mask, total_params);
    return r;
}

inline nlohmann::json to_json(const Report& r) {
    return {{"strategy", to_string(r.mask.strategy.kind)},
            {"variant", to_string(r.mask.variant)},
            {"k", r.mask.strategy.k},
            {"selected_heads", r.selected_heads},
            {"params_per_head", head_parameters(r.mask.geometry)},
            {"trainable_params", r.trainable_params},
            {"total_params", r.total_params},
            {"ratio", r.ratio}};
}

inline std::string summary(const Report& r) {
    std::ostringstream os;
    os << "strategy:         " << to_string(r.mask.strategy.kind) << " (k=" << r.mask.strategy.k
       << ", variant=" << to_string(r.mask.variant) << ")\n";
    os << "selected heads:   " << r.selected_heads << " of "
       << r.mask.geometry.num_layers * r.mask.geometry.num_heads << "\n";
    os << "trainable params: " << r.trainable_params << " (" << head_parameters(r.mask.geometry) << " per head)\n";
    os << "total params:     " << r.total_params << "\n";
    os.setf(std::ios::fixed);
    os.precision(6);
    os << "ratio:            " << r.ratio;
    os.precision(2);
    os << " (" << 100.0 * r.ratio << "%)\n";
    for (std::size_t l = 0; l < r.mask.delta.size(); ++l) {
        os << "  layer " << l << ":";
        for (auto h : r.mask.heads(l)) os << ' ' << h;
        os << '\n';
    }
    return os.str();
}

// --- stability -------------------------------------------------------------

struct StabilityOptions {
    double xi = kDefaultXi;
    PageRankOptions pagerank;
    std::size_t k = 3;
    std::string baseline_label = "A";
    std::string label = "B";
    std::string setting;
    std::size_t workers = 1;
};

inline StabilityReport stability(const fs::path& manifest_a, const fs::path& manifest_b, const fs::path& out_dir,
                                 const StabilityOptions& opt) {
    const auto ma = load_manifest(manifest_a);
    const auto mb = load_manifest(manifest_b);
    if (!(ma.geometry == mb.geometry)) throw DataError("stability: geometry mismatch between manifests");
    if (opt.k == 0 || opt.k > ma.geometry.num_heads) throw std::invalid_argument("k must be in [1, H]");
    ensure_dir(out_dir);
    const auto run_a = analyze_run(ma, opt.xi, opt.pagerank, opt.workers);
    const auto run_b = analyze_run(mb, opt.xi, opt.pagerank, opt.workers);
    StabilityReport rep{opt.baseline_label, {compare_runs(run_a, run_b, opt.k, opt.label, opt.setting)}};
    write_json(out_dir / "stability.json", to_json(rep));
    write_text(out_dir / "stability.csv", to_csv(rep));
    return rep;
}

}  // namespace hifi::pipeline
