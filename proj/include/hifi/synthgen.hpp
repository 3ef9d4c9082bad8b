#pragma once

// Synthetic head-output corpora from a single-layer multi-head attention
// forward pass, so the pipeline can run without an external model.
//
// Every byte of a corpus is a function of (seed, config). Draws come from
// Philox substreams (see random.hpp):
//
//   embeddings of sample i      stream(kTagEmbed, i)              S, then S x D normals
//   W_Q / W_K of a group        stream(kTagQuery|kTagKey, l, g)   D x D' normals / sqrt(D)
//   value factor A of a group   stream(kTagValue, l, g)           D x r_g normals / sqrt(D)
//   value noise of head h       stream(kTagNoise, l, h)           D x D' normals / sqrt(D)
//   direction frames            stream(kTagFrame, l, g)
//
// A head's value projection is W_V = A[:, :r_h] · B[:r_h, :] + noise_h · G_h,
// where the rows of B are orthonormal directions in R^{D'} shared by the
// head's correlation group (heads without a group form their own). Heads of
// one group also share W_Q and W_K, so with zero noise and equal rank caps
// they produce identical outputs.
//
// When the groups' combined rank fits (sum of r_g <= D' - 1), each group gets
// its own block of one orthonormal basis of the zero-mean subspace of R^{D'};
// sequence-averaged outputs of different groups are then exactly
// uncorrelated at zero noise. Otherwise each group draws an independent
// frame of R^{D'}.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "hifi/error.hpp"
#include "hifi/geometry.hpp"
#include "hifi/parallel.hpp"
#include "hifi/random.hpp"
#include "hifi/tensor_store.hpp"

namespace hifi::synth {

struct HeadProfile {
    std::size_t rank_cap = 1;    // r_h, 1..D'
    double noise = 0.0;          // ε_h >= 0
    std::optional<std::uint32_t> group;
};

struct GeneratorConfig {
    std::uint64_t seed = 0;
    ModelGeometry geometry;
    std::size_t n = 1;
    std::size_t seq_len_min = 1;
    std::size_t seq_len_max = 1;
    double embedding_scale = 1.0;
    std::vector<HeadProfile> head_profile;  // one per head
};

inline constexpr std::uint64_t kTagEmbed = 0x454D4245ull;
inline constexpr std::uint64_t kTagQuery = 0x51554552ull;
inline constexpr std::uint64_t kTagKey = 0x4B455953ull;
inline constexpr std::uint64_t kTagValue = 0x56414C55ull;
inline constexpr std::uint64_t kTagNoise = 0x4E4F4953ull;
inline constexpr std::uint64_t kTagFrame = 0x4652414Dull;
inline constexpr std::uint64_t kTagBasis = 0x42415349ull;

inline void validate(const GeneratorConfig& c) {
    hifi::validate(c.geometry);
    if (c.n == 0) throw DataError("synth config: n must be >= 1");
    if (c.seq_len_min < 1 || c.seq_len_min > c.seq_len_max || c.seq_len_max > c.geometry.max_seq_len) {
        throw DataError("synth config: need 1 <= seq_len min <= max <= max_seq_len");
    }
    if (!(c.embedding_scale > 0.0) || !std::isfinite(c.embedding_scale)) {
        throw DataError("synth config: embedding_scale must be positive");
    }
    if (c.head_profile.size() != c.geometry.num_heads) throw DataError("synth config: head_profile must have H entries");
    for (const auto& p : c.head_profile) {
        if (p.rank_cap < 1 || p.rank_cap > c.geometry.head_dim) {
            throw DataError("synth config: rank_cap must be in [1, D']");
        }
        if (!(p.noise >= 0.0) || !std::isfinite(p.noise)) throw DataError("synth config: noise must be >= 0");
    }
}

// ---------------------------------------------------------------------------
// Forward pass

struct HeadWeights {
    Matrix query;  // D x D'
    Matrix key;    // D x D'
    Matrix value;  // D x D'
};

namespace detail {

inline Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) throw std::invalid_argument("matmul: shape mismatch");
    Matrix c(a.rows(), b.cols(), 0.0);
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            for (std::size_t j = 0; j < b.cols(); ++j) c(i, j) += aik * b(k, j);
        }
    return c;
}

inline Matrix gaussian(rng::CounterRng& gen, std::size_t rows, std::size_t cols, double scale) {
    Matrix m(rows, cols);
    for (double& v : m.values()) v = scale * gen.normal();
    return m;
}

/// Modified Gram-Schmidt with one reorthogonalization pass, over the rows of
/// `candidates` after the `fixed` rows; returns the new orthonormal rows.
inline std::vector<std::vector<double>> orthonormalize(std::vector<std::vector<double>> fixed,
                                                       const std::vector<std::vector<double>>& candidates,
                                                       std::size_t wanted) {
    std::vector<std::vector<double>> out;
    for (const auto& cand : candidates) {
        if (out.size() == wanted) break;
        std::vector<double> v = cand;
        for (int pass = 0; pass < 2; ++pass) {
            for (const auto* basis : {&fixed, &out}) {
                for (const auto& u : *basis) {
                    double dot = 0.0;
                    for (std::size_t d = 0; d < v.size(); ++d) dot += u[d] * v[d];
                    for (std::size_t d = 0; d < v.size(); ++d) v[d] -= dot * u[d];
                }
            }
        }
        double norm = 0.0;
        for (double x : v) norm += x * x;
        norm = std::sqrt(norm);
        if (norm < 1e-8) continue;
        for (double& x : v) x /= norm;
        out.push_back(std::move(v));
    }
    if (out.size() != wanted) throw NumericalError("synth: could not build an orthonormal frame");
    return out;
}

inline std::vector<std::vector<double>> random_rows(rng::CounterRng& gen, std::size_t count, std::size_t dim) {
    std::vector<std::vector<double>> rows(count, std::vector<double>(dim));
    for (auto& r : rows)
        for (double& v : r) v = gen.normal();
    return rows;
}

}  // namespace detail

/// Row-wise softmax(Q Kᵀ / sqrt(D')), computed with max-subtraction.
inline Matrix attention_weights(const Matrix& q, const Matrix& k) {
    if (q.cols() != k.cols() || q.rows() != k.rows()) throw std::invalid_argument("attention: Q/K shape mismatch");
    const std::size_t s = q.rows();
    const double scale = 1.0 / std::sqrt(static_cast<double>(q.cols()));
    Matrix p(s, s);
    for (std::size_t i = 0; i < s; ++i) {
        double top = -INFINITY;
        for (std::size_t j = 0; j < s; ++j) {
            double dot = 0.0;
            for (std::size_t d = 0; d < q.cols(); ++d) dot += q(i, d) * k(j, d);
            p(i, j) = dot * scale;
            top = std::max(top, p(i, j));
        }
        double total = 0.0;
        for (std::size_t j = 0; j < s; ++j) {
            p(i, j) = std::exp(p(i, j) - top);
            total += p(i, j);
        }
        for (std::size_t j = 0; j < s; ++j) p(i, j) /= total;
    }
    return p;
}

/// Per-head outputs softmax(Q Kᵀ / sqrt(D')) V for embeddings X (S x D).
inline std::vector<HeadOutput> toy_attention_forward(const Matrix& embeddings, const std::vector<HeadWeights>& heads,
                                                     std::size_t layer = 0, const std::string& sample_id = {}) {
    std::vector<HeadOutput> outs;
    outs.reserve(heads.size());
    for (std::size_t h = 0; h < heads.size(); ++h) {
        const auto& w = heads[h];
        if (w.query.rows() != embeddings.cols() || w.key.rows() != embeddings.cols() ||
            w.value.rows() != embeddings.cols() || w.query.cols() != w.key.cols() ||
            w.value.cols() != w.query.cols()) {
            throw std::invalid_argument("toy_attention_forward: weight shapes inconsistent with embeddings");
        }
        const Matrix p = attention_weights(detail::matmul(embeddings, w.query), detail::matmul(embeddings, w.key));
        outs.push_back({layer, h, sample_id, detail::matmul(p, detail::matmul(embeddings, w.value))});
    }
    return outs;
}

// ---------------------------------------------------------------------------
// Weights and embeddings

namespace detail {

inline std::uint64_t group_key(const GeneratorConfig& c, std::size_t head) {
    const auto& p = c.head_profile[head];
    return p.group ? ((1ull << 32) | *p.group) : ((2ull << 32) | head);
}

}  // namespace detail

/// All head weights of one layer.
inline std::vector<HeadWeights> layer_weights(const GeneratorConfig& c, std::size_t layer) {
    const std::size_t d = c.geometry.hidden_dim;
    const std::size_t dp = c.geometry.head_dim;
    const std::size_t h = c.geometry.num_heads;
    const double w_scale = 1.0 / std::sqrt(static_cast<double>(d));

    // Groups in order of first appearance, with their rank budget.
    std::vector<std::uint64_t> groups;
    std::map<std::uint64_t, std::size_t> rank;
    for (std::size_t i = 0; i < h; ++i) {
        const auto g = detail::group_key(c, i);
        if (!rank.count(g)) groups.push_back(g);
        rank[g] = std::max(rank[g], c.head_profile[i].rank_cap);
    }
    std::size_t total_rank = 0;
    for (auto g : groups) total_rank += rank[g];

    std::map<std::uint64_t, std::vector<std::vector<double>>> frames;
    if (total_rank + 1 <= dp) {
        rng::CounterRng gen(c.seed, rng::stream_id(kTagBasis, layer));
        const std::vector<double> ones(dp, 1.0 / std::sqrt(static_cast<double>(dp)));
        auto basis = detail::orthonormalize({ones}, detail::random_rows(gen, 4 * dp, dp), total_rank);
        std::size_t next = 0;
        for (auto g : groups) {
            frames[g].assign(basis.begin() + static_cast<std::ptrdiff_t>(next),
                             basis.begin() + static_cast<std::ptrdiff_t>(next + rank[g]));
            next += rank[g];
        }
    } else {
        for (auto g : groups) {
            rng::CounterRng gen(c.seed, rng::stream_id(kTagFrame, layer, g));
            frames[g] = detail::orthonormalize({}, detail::random_rows(gen, 4 * dp, dp), rank[g]);
        }
    }

    struct GroupWeights {
        Matrix query, key, factor;
    };
    std::map<std::uint64_t, GroupWeights> shared;
    for (auto g : groups) {
        rng::CounterRng gq(c.seed, rng::stream_id(kTagQuery, layer, g));
        rng::CounterRng gk(c.seed, rng::stream_id(kTagKey, layer, g));
        rng::CounterRng ga(c.seed, rng::stream_id(kTagValue, layer, g));
        shared[g] = {detail::gaussian(gq, d, dp, w_scale), detail::gaussian(gk, d, dp, w_scale),
                     detail::gaussian(ga, d, rank[g], w_scale)};
    }

    std::vector<HeadWeights> out;
    out.reserve(h);
    for (std::size_t i = 0; i < h; ++i) {
        const auto g = detail::group_key(c, i);
        const auto& sw = shared[g];
        const auto& frame = frames[g];
        const std::size_t r = c.head_profile[i].rank_cap;

        Matrix value(d, dp, 0.0);
        for (std::size_t row = 0; row < d; ++row)
            for (std::size_t t = 0; t < r; ++t) {
                const double a = sw.factor(row, t);
                for (std::size_t col = 0; col < dp; ++col) value(row, col) += a * frame[t][col];
            }
        if (c.head_profile[i].noise > 0.0) {
            rng::CounterRng gn(c.seed, rng::stream_id(kTagNoise, layer, i));
            const double eps = c.head_profile[i].noise * w_scale;
            for (double& v : value.values()) v += eps * gn.normal();
        }
        out.push_back({sw.query, sw.key, std::move(value)});
    }
    return out;
}

/// Embeddings of sample i: S drawn uniformly from the configured range, then
/// S x D normals times embedding_scale.
inline Matrix sample_embeddings(const GeneratorConfig& c, std::size_t sample) {
    rng::CounterRng gen(c.seed, rng::stream_id(kTagEmbed, sample));
    const std::size_t s = c.seq_len_min + static_cast<std::size_t>(gen.below(c.seq_len_max - c.seq_len_min + 1));
    return detail::gaussian(gen, s, c.geometry.hidden_dim, c.embedding_scale);
}

inline std::string sample_name(std::size_t i) {
    std::string digits = std::to_string(i);
    if (digits.size() < 6) digits.insert(0, 6 - digits.size(), '0');
    return "s" + digits;
}

// ---------------------------------------------------------------------------
// Config JSON

inline nlohmann::json to_json(const GeneratorConfig& c) {
    nlohmann::json profile = nlohmann::json::array();
    for (const auto& p : c.head_profile) {
        nlohmann::json e = {{"rank_cap", p.rank_cap}, {"noise", p.noise}};
        if (p.group) e["group"] = *p.group;
        profile.push_back(std::move(e));
    }
    return {{"seed", c.seed},
            {"geometry", geometry_to_json(c.geometry)},
            {"n", c.n},
            {"seq_len_range", {c.seq_len_min, c.seq_len_max}},
            {"embedding_scale", c.embedding_scale},
            {"head_profile", std::move(profile)}};
}

/// Parses a generator config. `head_profile` may be omitted, in which case
/// every head gets rank cap D', zero noise and no group.
inline GeneratorConfig config_from_json(const nlohmann::json& j) {
    try {
        GeneratorConfig c;
        c.seed = j.at("seed").get<std::uint64_t>();
        c.geometry = geometry_from_json(j.at("geometry"));
        c.n = j.at("n").get<std::size_t>();
        const auto range = j.at("seq_len_range").get<std::vector<std::size_t>>();
        if (range.size() != 2) throw DataError("synth config: seq_len_range must be [min, max]");
        c.seq_len_min = range[0];
        c.seq_len_max = range[1];
        c.embedding_scale = j.value("embedding_scale", 1.0);
        if (j.contains("head_profile")) {
            for (const auto& e : j.at("head_profile")) {
                HeadProfile p;
                p.rank_cap = e.at("rank_cap").get<std::size_t>();
                p.noise = e.value("noise", 0.0);
                if (e.contains("group") && !e.at("group").is_null()) p.group = e.at("group").get<std::uint32_t>();
                c.head_profile.push_back(p);
            }
        } else {
            c.head_profile.assign(c.geometry.num_heads, HeadProfile{c.geometry.head_dim, 0.0, std::nullopt});
        }
        validate(c);
        return c;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("synth config: malformed JSON: ") + e.what());
    }
}

// ---------------------------------------------------------------------------
// Corpus generation

/// Writes L·H·n HOT files under `out_dir`/hot and `out_dir`/manifest.json.
/// Entry paths are relative to the manifest so a corpus can be moved.
inline Manifest generate_corpus(const GeneratorConfig& c, const fs::path& out_dir, std::size_t workers = 1) {
    validate(c);
    const fs::path hot_dir = out_dir / "hot";
    std::error_code ec;
    fs::create_directories(hot_dir, ec);
    if (ec || !fs::is_directory(hot_dir)) {
        throw DataError("synth: cannot create output directory " + hot_dir.string() +
                        (ec ? ": " + ec.message() : std::string()));
    }

    const auto& g = c.geometry;
    std::vector<std::vector<HeadWeights>> weights;
    weights.reserve(g.num_layers);
    for (std::size_t l = 0; l < g.num_layers; ++l) weights.push_back(layer_weights(c, l));

    Manifest m;
    m.geometry = g;
    m.base_dir = out_dir;
    for (std::size_t i = 0; i < c.n; ++i) m.samples.push_back(sample_name(i));
    m.paths.assign(g.num_layers,
                   std::vector<std::vector<fs::path>>(g.num_heads, std::vector<fs::path>(c.n)));
    for (std::size_t l = 0; l < g.num_layers; ++l)
        for (std::size_t h = 0; h < g.num_heads; ++h)
            for (std::size_t i = 0; i < c.n; ++i)
                m.paths[l][h][i] = fs::path("hot") / ("L" + std::to_string(l) + "_H" + std::to_string(h) + "_" +
                                                      m.samples[i] + ".hot");

    parallel_for(c.n, workers, [&](std::size_t i) {
        const Matrix x = sample_embeddings(c, i);
        for (std::size_t l = 0; l < g.num_layers; ++l) {
            for (auto& out : toy_attention_forward(x, weights[l], l, m.samples[i])) {
                write_head_output(m.resolve(l, out.head, i), out);
            }
        }
    });

    m.metadata = {{"generator", "hifi synthgen"},
                  {"rng", "philox4x32-10, AS241 inverse-CDF normals"},
                  {"capture_point",
                   "per-head attention output softmax(QK^T/sqrt(D'))V before the output projection; "
                   "single layer, no dropout, no layer norm, no padding rows"},
                  {"config", to_json(c)}};
    write_manifest(out_dir / "manifest.json", m);
    return m;
}

}  // namespace hifi::synth
