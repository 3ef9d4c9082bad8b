#pragma once

// Per-layer head selection: top-k by PageRank, the ablation rules, the
// layer-wise and mid-top masking strategies, and trainable-parameter ratios.

#include <algorithm>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "hifi/error.hpp"
#include "hifi/geometry.hpp"
#include "hifi/metrics.hpp"
#include "hifi/random.hpp"
#include "hifi/tensor_store.hpp"

namespace hifi {

enum class StrategyKind { layer_wise, mid_top };

enum class AblationVariant { full_hifi, without_corr, without_corr_inv, without_info, page_inv, random };

struct Strategy {
    StrategyKind kind = StrategyKind::layer_wise;
    std::size_t k = 3;

    friend bool operator==(const Strategy&, const Strategy&) = default;
};

inline constexpr std::string_view to_string(StrategyKind s) {
    return s == StrategyKind::layer_wise ? "layer_wise" : "mid_top";
}

inline StrategyKind parse_strategy(std::string_view s) {
    if (s == "layer_wise") return StrategyKind::layer_wise;
    if (s == "mid_top") return StrategyKind::mid_top;
    throw std::invalid_argument("unknown strategy: " + std::string(s));
}

inline constexpr std::string_view to_string(AblationVariant v) {
    switch (v) {
        case AblationVariant::full_hifi: return "full_hifi";
        case AblationVariant::without_corr: return "without_corr";
        case AblationVariant::without_corr_inv: return "without_corr_inv";
        case AblationVariant::without_info: return "without_info";
        case AblationVariant::page_inv: return "page_inv";
        case AblationVariant::random: return "random";
    }
    return "?";
}

inline AblationVariant parse_variant(std::string_view s) {
    for (auto v : {AblationVariant::full_hifi, AblationVariant::without_corr, AblationVariant::without_corr_inv,
                   AblationVariant::without_info, AblationVariant::page_inv, AblationVariant::random}) {
        if (to_string(v) == s) return v;
    }
    throw std::invalid_argument("unknown variant: " + std::string(s));
}

/// First layer that receives heads under a strategy: 0 for layer-wise,
/// floor(L/2) for mid-top (the upper half of the stack).
inline std::size_t first_active_layer(const ModelGeometry& g, StrategyKind s) {
    return s == StrategyKind::layer_wise ? 0 : g.num_layers / 2;
}

namespace detail {

inline void check_k(std::size_t k, std::size_t h) {
    if (k == 0) throw std::invalid_argument("k must be >= 1");
    if (k > h) throw std::invalid_argument("k = " + std::to_string(k) + " exceeds H = " + std::to_string(h));
}

/// k indices ordered by score (descending if `largest`), ties to the lower
/// index; returned in ascending index order.
inline std::vector<std::size_t> extreme_k(std::span<const double> scores, std::size_t k, bool largest) {
    check_k(k, scores.size());
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return largest ? scores[a] > scores[b] : scores[a] < scores[b];
    });
    order.resize(k);
    std::sort(order.begin(), order.end());
    return order;
}

inline constexpr std::uint64_t kRandomSelectTag = 0x52414E44534C4354ull;  // "RANDSLCT"

}  // namespace detail

/// Indices of the k largest values; ties go to the lower head index.
inline std::vector<std::size_t> select_topk(std::span<const double> p_star, std::size_t k) {
    return detail::extreme_k(p_star, k, true);
}

inline std::vector<std::size_t> select_bottomk(std::span<const double> scores, std::size_t k) {
    return detail::extreme_k(scores, k, false);
}

/// Total correlation mass of each head: the off-diagonal row sum of R.
inline std::vector<double> correlation_mass(const CorrelationMatrix& r) {
    std::vector<double> mass(r.size(), 0.0);
    for (std::size_t i = 0; i < r.size(); ++i)
        for (std::size_t j = 0; j < r.size(); ++j)
            if (j != i) mass[i] += r(i, j);
    return mass;
}

/// k distinct heads drawn by a partial Fisher-Yates shuffle on the substream
/// (seed, layer).
inline std::vector<std::size_t> random_select(std::size_t h, std::size_t k, std::uint64_t seed, std::size_t layer) {
    detail::check_k(k, h);
    rng::CounterRng gen(seed, rng::stream_id(detail::kRandomSelectTag, layer));
    std::vector<std::size_t> pool(h);
    std::iota(pool.begin(), pool.end(), std::size_t{0});
    for (std::size_t i = 0; i < k; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(gen.below(h - i));
        std::swap(pool[i], pool[j]);
    }
    pool.resize(k);
    std::sort(pool.begin(), pool.end());
    return pool;
}

/// Heads chosen for one layer under an ablation variant.
inline std::vector<std::size_t> ablation_select(AblationVariant variant, const RichnessScores& richness,
                                                const CorrelationMatrix& r, std::span<const double> p_star,
                                                std::size_t k, std::uint64_t seed = 0) {
    const std::size_t h = richness.values.size();
    if (r.size() != h || p_star.size() != h) {
        throw std::invalid_argument("ablation_select: inputs disagree on H");
    }
    switch (variant) {
        case AblationVariant::full_hifi: return select_topk(p_star, k);
        case AblationVariant::without_corr: return select_topk(richness.values, k);
        case AblationVariant::without_corr_inv: return select_bottomk(richness.values, k);
        case AblationVariant::without_info: return select_topk(correlation_mass(r), k);
        case AblationVariant::page_inv: return select_bottomk(p_star, k);
        case AblationVariant::random: return random_select(h, k, seed, richness.layer);
    }
    throw std::invalid_argument("ablation_select: unknown variant");
}

// ---------------------------------------------------------------------------
// Masks

struct SelectionMask {
    ModelGeometry geometry;
    std::vector<std::vector<bool>> delta;  // [layer][head], true = fine-tune
    Strategy strategy;
    AblationVariant variant = AblationVariant::full_hifi;
    std::optional<std::uint64_t> seed;  // set for the random variant

    std::size_t selected_heads() const noexcept {
        std::size_t n = 0;
        for (const auto& row : delta) n += static_cast<std::size_t>(std::count(row.begin(), row.end(), true));
        return n;
    }

    std::vector<std::size_t> heads(std::size_t layer) const {
        std::vector<std::size_t> out;
        for (std::size_t h = 0; h < delta.at(layer).size(); ++h)
            if (delta[layer][h]) out.push_back(h);
        return out;
    }

    friend bool operator==(const SelectionMask&, const SelectionMask&) = default;
};

namespace detail {

template <class PickFn>
SelectionMask assemble_mask(const ModelGeometry& g, const Strategy& s, PickFn&& pick) {
    validate(g);
    check_k(s.k, g.num_heads);
    SelectionMask mask{g, std::vector<std::vector<bool>>(g.num_layers, std::vector<bool>(g.num_heads, false)), s,
                       AblationVariant::full_hifi, std::nullopt};
    for (std::size_t l = first_active_layer(g, s.kind); l < g.num_layers; ++l) {
        for (std::size_t h : pick(l)) mask.delta[l][h] = true;
    }
    return mask;
}

}  // namespace detail

/// Top-k mask from per-layer PageRank vectors. Mid-top only needs vectors for
/// layers floor(L/2)..L-1.
inline SelectionMask build_mask(const std::map<std::size_t, std::vector<double>>& p_stars, const ModelGeometry& g,
                                const Strategy& s) {
    return detail::assemble_mask(g, s, [&](std::size_t l) {
        const auto it = p_stars.find(l);
        if (it == p_stars.end()) throw DataError("build_mask: missing PageRank vector for layer " + std::to_string(l));
        if (it->second.size() != g.num_heads) throw DataError("build_mask: PageRank vector length != H");
        return select_topk(it->second, s.k);
    });
}

/// Everything one layer contributes to a selection.
struct LayerSelectionInputs {
    RichnessScores richness;
    CorrelationMatrix correlation;
    std::vector<double> p_star;
};

inline SelectionMask build_variant_mask(const std::map<std::size_t, LayerSelectionInputs>& layers,
                                        const ModelGeometry& g, const Strategy& s, AblationVariant variant,
                                        std::uint64_t seed = 0) {
    auto mask = detail::assemble_mask(g, s, [&](std::size_t l) {
        const auto it = layers.find(l);
        if (it == layers.end()) throw DataError("build_mask: missing inputs for layer " + std::to_string(l));
        const auto& in = it->second;
        if (in.p_star.size() != g.num_heads) throw DataError("build_mask: PageRank vector length != H");
        return ablation_select(variant, in.richness, in.correlation, in.p_star, s.k, seed);
    });
    mask.variant = variant;
    if (variant == AblationVariant::random) mask.seed = seed;
    return mask;
}

/// Parameters in W_Q, W_K, W_V of one head (biases excluded).
inline std::uint64_t head_parameters(const ModelGeometry& g) {
    return 3ull * g.hidden_dim * g.head_dim;
}

/// Fraction of `total_params` that the mask leaves trainable.
inline double trainable_ratio(const ModelGeometry& g, const SelectionMask& mask, std::uint64_t total_params) {
    if (total_params == 0) throw std::invalid_argument("trainable_ratio: total_params must be > 0");
    const auto trainable = static_cast<std::uint64_t>(mask.selected_heads()) * head_parameters(g);
    return static_cast<double>(trainable) / static_cast<double>(total_params);
}

// ---------------------------------------------------------------------------
// JSON: {"strategy", "k", "variant", ["seed"], "geometry", "delta", "selected"}

inline nlohmann::json to_json(const SelectionMask& m) {
    nlohmann::json delta = nlohmann::json::array();
    nlohmann::json selected = nlohmann::json::array();
    for (std::size_t l = 0; l < m.delta.size(); ++l) {
        delta.push_back(m.delta[l]);
        selected.push_back({{"layer", l}, {"heads", m.heads(l)}});
    }
    nlohmann::json j = {{"strategy", to_string(m.strategy.kind)},
                        {"k", m.strategy.k},
                        {"variant", to_string(m.variant)},
                        {"geometry", geometry_to_json(m.geometry)},
                        {"delta", std::move(delta)},
                        {"selected", std::move(selected)}};
    if (m.seed) j["seed"] = *m.seed;
    return j;
}

inline SelectionMask mask_from_json(const nlohmann::json& j) {
    try {
        SelectionMask m;
        m.geometry = geometry_from_json(j.at("geometry"));
        m.strategy = {parse_strategy(j.at("strategy").get<std::string>()), j.at("k").get<std::size_t>()};
        m.variant = j.contains("variant") ? parse_variant(j.at("variant").get<std::string>())
                                          : AblationVariant::full_hifi;
        if (j.contains("seed")) m.seed = j.at("seed").get<std::uint64_t>();
        m.delta = j.at("delta").get<std::vector<std::vector<bool>>>();
        if (m.delta.size() != m.geometry.num_layers) throw DataError("mask: delta must have L rows");
        for (const auto& row : m.delta)
            if (row.size() != m.geometry.num_heads) throw DataError("mask: delta rows must have H entries");
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("mask: malformed JSON: ") + e.what());
    } catch (const std::invalid_argument& e) {
        throw DataError(std::string("mask: ") + e.what());
    }
}

}  // namespace hifi
