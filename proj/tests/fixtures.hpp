#pragma once

#include <cstdint>
#include <vector>

#include "hifi/synthgen.hpp"

namespace hifi::testkit {

inline synth::GeneratorConfig make_config(std::uint64_t seed, std::size_t layers, std::size_t heads,
                                          std::size_t head_dim, std::size_t n, std::size_t seq_min,
                                          std::size_t seq_max, std::vector<synth::HeadProfile> profile) {
    synth::GeneratorConfig c;
    c.seed = seed;
    c.geometry = {layers, heads, heads * head_dim, head_dim, 64};
    c.n = n;
    c.seq_len_min = seq_min;
    c.seq_len_max = seq_max;
    c.embedding_scale = 2.0;
    c.head_profile = std::move(profile);
    return c;
}

/// L=2, H=4, D'=8, n=50 with noisy heads of differing rank: every output is
/// full rank and reasonably conditioned, and S ranges on both sides of D'.
inline synth::GeneratorConfig metric_config(std::uint64_t seed = 7, std::size_t n = 50) {
    return make_config(seed, 2, 4, 8, n, 4, 24,
                       {{2, 0.3, std::nullopt}, {4, 0.3, 0u}, {6, 0.2, 0u}, {8, 0.5, std::nullopt}});
}

/// H=8 heads with rank caps 1..8 and light noise; the n=300 vs n=1000
/// and sequence-length stability analogs run on this family.
inline synth::GeneratorConfig stability_config(std::size_t n, std::size_t seq_min = 16, std::size_t seq_max = 64,
                                               std::uint64_t seed = 2024) {
    std::vector<synth::HeadProfile> profile;
    for (std::size_t h = 0; h < 8; ++h) profile.push_back({h + 1, 0.05, std::nullopt});
    return make_config(seed, 2, 8, 8, n, seq_min, seq_max, profile);
}

}  // namespace hifi::testkit
