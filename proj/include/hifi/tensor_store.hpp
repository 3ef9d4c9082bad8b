#pragma once

// Head Output Tensor (HOT) files and the JSON corpus manifest.
//
// HOT layout, little-endian throughout:
//
//   offset  size  field
//   0       8     magic "HOTv0001"
//   8       4     u32 layer
//   12      4     u32 head
//   16      4     u32 S (rows)
//   20      4     u32 D' (cols)
//   24      8     u64 payload byte length, always 4 * S * D'
//   32      ...   S * D' IEEE-754 f32 values, row-major
//
// The sample id is not stored in the file; the manifest maps
// (layer, head, sample_id) to a path.

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "hifi/error.hpp"
#include "hifi/geometry.hpp"

namespace hifi {

namespace fs = std::filesystem;

inline constexpr std::string_view kHotMagic = "HOTv0001";
inline constexpr std::size_t kHotHeaderBytes = 32;

namespace detail {

inline void put_u32(std::vector<unsigned char>& buf, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

inline void put_u64(std::vector<unsigned char>& buf, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

inline std::uint32_t get_u32(const unsigned char* p) {
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | p[i];
    return v;
}

inline std::uint64_t get_u64(const unsigned char* p) {
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
    return v;
}

inline std::uint32_t checked_u32(std::size_t v, const char* what) {
    if (v > std::numeric_limits<std::uint32_t>::max()) {
        throw std::invalid_argument(std::string("HOT: ") + what + " exceeds u32 range");
    }
    return static_cast<std::uint32_t>(v);
}

}  // namespace detail

/// Serializes a head output to its HOT byte image. Values are narrowed to f32;
/// anything that is not finite after narrowing is rejected.
inline std::vector<unsigned char> encode_head_output(const HeadOutput& out) {
    const std::size_t s = out.data.rows();
    const std::size_t dp = out.data.cols();
    if (s == 0 || dp == 0) throw DataError("HOT: empty matrix");

    std::vector<unsigned char> buf;
    buf.reserve(kHotHeaderBytes + 4 * s * dp);
    buf.insert(buf.end(), kHotMagic.begin(), kHotMagic.end());
    detail::put_u32(buf, detail::checked_u32(out.layer, "layer"));
    detail::put_u32(buf, detail::checked_u32(out.head, "head"));
    detail::put_u32(buf, detail::checked_u32(s, "S"));
    detail::put_u32(buf, detail::checked_u32(dp, "D'"));
    detail::put_u64(buf, static_cast<std::uint64_t>(4) * s * dp);
    for (double v : out.data.values()) {
        const auto f = static_cast<float>(v);
        if (!std::isfinite(v) || !std::isfinite(f)) throw DataError("HOT: non-finite data");
        detail::put_u32(buf, std::bit_cast<std::uint32_t>(f));
    }
    return buf;
}

/// Parses a HOT byte image. `sample_id` is attached to the result verbatim.
inline HeadOutput decode_head_output(std::span<const unsigned char> bytes,
                                     std::string sample_id = {}) {
    if (bytes.size() < kHotMagic.size() ||
        std::memcmp(bytes.data(), kHotMagic.data(), kHotMagic.size()) != 0) {
        throw DataError("HOT: bad magic");
    }
    if (bytes.size() < kHotHeaderBytes) throw DataError("HOT: truncated header");

    const unsigned char* p = bytes.data();
    HeadOutput out;
    out.layer = detail::get_u32(p + 8);
    out.head = detail::get_u32(p + 12);
    const std::uint64_t s = detail::get_u32(p + 16);
    const std::uint64_t dp = detail::get_u32(p + 20);
    const std::uint64_t payload = detail::get_u64(p + 24);
    out.sample_id = std::move(sample_id);

    if (s == 0 || dp == 0) throw DataError("HOT: dimension fields must be positive");
    if (payload != 4 * s * dp) {
        throw DataError("HOT: dimension fields inconsistent with payload length");
    }
    const std::size_t available = bytes.size() - kHotHeaderBytes;
    if (available < payload) throw DataError("HOT: truncated payload");
    if (available > payload) {
        throw DataError("HOT: dimension fields inconsistent with payload length (trailing bytes)");
    }

    std::vector<double> values(s * dp);
    const unsigned char* q = p + kHotHeaderBytes;
    for (std::size_t i = 0; i < values.size(); ++i, q += 4) {
        const float f = std::bit_cast<float>(detail::get_u32(q));
        if (!std::isfinite(f)) throw DataError("HOT: non-finite data");
        values[i] = f;
    }
    out.data = Matrix(s, dp, std::move(values));
    return out;
}

inline void write_head_output(const fs::path& path, const HeadOutput& out) {
    const auto bytes = encode_head_output(out);
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError("HOT: cannot open for writing: " + path.string());
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw DataError("HOT: write failed: " + path.string());
}

inline HeadOutput read_head_output(const fs::path& path, std::string sample_id = {}) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("HOT: cannot open: " + path.string());
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)),
                                     std::istreambuf_iterator<char>());
    return decode_head_output(bytes, std::move(sample_id));
}

// ---------------------------------------------------------------------------
// Manifest

struct Manifest {
    ModelGeometry geometry;
    std::vector<std::string> samples;
    /// paths[layer][head][sample index], absolute or relative to `base_dir`.
    std::vector<std::vector<std::vector<fs::path>>> paths;
    nlohmann::json metadata = nlohmann::json::object();
    fs::path base_dir;

    std::size_t num_samples() const noexcept { return samples.size(); }
    std::size_t num_entries() const noexcept {
        return geometry.num_layers * geometry.num_heads * samples.size();
    }

    fs::path resolve(std::size_t layer, std::size_t head, std::size_t sample) const {
        const fs::path& p = paths.at(layer).at(head).at(sample);
        return p.is_absolute() ? p : base_dir / p;
    }
};

inline nlohmann::json geometry_to_json(const ModelGeometry& g) {
    return {{"L", g.num_layers},
            {"H", g.num_heads},
            {"D", g.hidden_dim},
            {"D_prime", g.head_dim},
            {"max_seq_len", g.max_seq_len}};
}

inline ModelGeometry geometry_from_json(const nlohmann::json& j) {
    auto field = [&](const char* key) -> std::size_t {
        if (!j.contains(key)) throw DataError(std::string("geometry: missing field ") + key);
        const auto& v = j.at(key);
        if (!v.is_number_integer() || v.get<long long>() < 1) {
            throw DataError(std::string("geometry: field ") + key + " must be a positive integer");
        }
        return v.get<std::size_t>();
    };
    ModelGeometry g{field("L"), field("H"), field("D"), field("D_prime"), field("max_seq_len")};
    validate(g);
    return g;
}

/// Validates and loads a manifest JSON document. Relative entry paths are
/// resolved against the manifest's own directory.
inline Manifest parse_manifest(const nlohmann::json& doc, const fs::path& base_dir,
                               bool check_paths = true) {
    try {
        Manifest m;
        m.base_dir = base_dir;
        m.geometry = geometry_from_json(doc.at("geometry"));
        m.samples = doc.at("samples").get<std::vector<std::string>>();
        if (m.samples.empty()) throw DataError("manifest: no samples");
        if (doc.contains("metadata")) m.metadata = doc.at("metadata");

        std::map<std::string, std::size_t> sample_index;
        for (std::size_t i = 0; i < m.samples.size(); ++i) {
            if (!sample_index.emplace(m.samples[i], i).second) {
                throw DataError("manifest: duplicate sample id " + m.samples[i]);
            }
        }

        const auto& g = m.geometry;
        m.paths.assign(g.num_layers,
                       std::vector<std::vector<fs::path>>(
                           g.num_heads, std::vector<fs::path>(m.samples.size())));
        std::set<std::tuple<std::size_t, std::size_t, std::size_t>> seen;
        for (const auto& e : doc.at("entries")) {
            const auto layer = e.at("layer").get<std::size_t>();
            const auto head = e.at("head").get<std::size_t>();
            const auto sid = e.at("sample_id").get<std::string>();
            if (layer >= g.num_layers || head >= g.num_heads) {
                throw DataError("manifest: entry index out of range for " + sid);
            }
            const auto it = sample_index.find(sid);
            if (it == sample_index.end()) throw DataError("manifest: unknown sample id " + sid);
            if (!seen.emplace(layer, head, it->second).second) {
                throw DataError("manifest: duplicate entry for " + sid);
            }
            m.paths[layer][head][it->second] = e.at("path").get<std::string>();
        }
        if (seen.size() != m.num_entries()) {
            throw DataError("manifest: incomplete corpus (" + std::to_string(seen.size()) + " of " +
                            std::to_string(m.num_entries()) + " entries)");
        }
        if (check_paths) {
            for (std::size_t l = 0; l < g.num_layers; ++l)
                for (std::size_t h = 0; h < g.num_heads; ++h)
                    for (std::size_t i = 0; i < m.samples.size(); ++i)
                        if (!fs::exists(m.resolve(l, h, i))) {
                            throw DataError("manifest: dangling path " + m.resolve(l, h, i).string());
                        }
        }
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("manifest: malformed JSON: ") + e.what());
    }
}

inline Manifest load_manifest(const fs::path& path) {
    std::ifstream f(path);
    if (!f) throw DataError("manifest: cannot open " + path.string());
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(f);
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("manifest: malformed JSON: ") + e.what());
    }
    return parse_manifest(doc, path.parent_path());
}

/// Entries are emitted layer-major, then head, then manifest sample order.
inline nlohmann::json manifest_to_json(const Manifest& m) {
    nlohmann::json entries = nlohmann::json::array();
    for (std::size_t l = 0; l < m.geometry.num_layers; ++l)
        for (std::size_t h = 0; h < m.geometry.num_heads; ++h)
            for (std::size_t i = 0; i < m.samples.size(); ++i)
                entries.push_back({{"layer", l},
                                   {"head", h},
                                   {"sample_id", m.samples[i]},
                                   {"path", m.paths[l][h][i].generic_string()}});
    return {{"geometry", geometry_to_json(m.geometry)},
            {"samples", m.samples},
            {"entries", std::move(entries)},
            {"metadata", m.metadata}};
}

inline void write_manifest(const fs::path& path, const Manifest& m) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw DataError("manifest: cannot open for writing: " + path.string());
    f << manifest_to_json(m).dump(2) << '\n';
    if (!f) throw DataError("manifest: write failed: " + path.string());
}

// ---------------------------------------------------------------------------
// Sample enumeration

/// Reads one corpus entry and checks it against the manifest key and geometry.
inline HeadOutput load_entry(const Manifest& m, std::size_t layer, std::size_t head,
                             std::size_t sample) {
    const std::string& sid = m.samples.at(sample);
    const std::string ctx = "layer " + std::to_string(layer) + " head " + std::to_string(head) +
                            " sample " + sid + ": ";
    HeadOutput out;
    try {
        out = read_head_output(m.resolve(layer, head, sample), sid);
    } catch (const DataError& e) {
        throw DataError(ctx + e.what());
    }
    if (out.layer != layer || out.head != head) {
        throw DataError(ctx + "file header names a different (layer, head)");
    }
    if (out.head_dim() != m.geometry.head_dim) throw DataError(ctx + "D' does not match geometry");
    if (out.seq_len() > m.geometry.max_seq_len) throw DataError(ctx + "S exceeds max_seq_len");
    return out;
}

/// Lazy, ordered stream of one (layer, head)'s outputs in manifest sample order.
class SampleStream {
public:
    class iterator {
    public:
        using iterator_category = std::input_iterator_tag;
        using value_type = HeadOutput;
        using difference_type = std::ptrdiff_t;
        using reference = const HeadOutput&;
        using pointer = const HeadOutput*;

        iterator() = default;
        iterator(const SampleStream* s, std::size_t i) : stream_(s), index_(i) {}

        reference operator*() const {
            if (!cached_) cached_ = load_entry(*stream_->manifest_, stream_->layer_, stream_->head_, index_);
            return *cached_;
        }
        pointer operator->() const { return &**this; }
        iterator& operator++() {
            ++index_;
            cached_.reset();
            return *this;
        }
        void operator++(int) { ++*this; }
        friend bool operator==(const iterator& a, const iterator& b) { return a.index_ == b.index_; }

    private:
        const SampleStream* stream_ = nullptr;
        std::size_t index_ = 0;
        mutable std::optional<HeadOutput> cached_;
    };

    SampleStream(const Manifest& m, std::size_t layer, std::size_t head)
        : manifest_(&m), layer_(layer), head_(head) {}

    iterator begin() const { return {this, 0}; }
    iterator end() const { return {this, manifest_->num_samples()}; }
    std::size_t size() const noexcept { return manifest_->num_samples(); }

private:
    const Manifest* manifest_;
    std::size_t layer_;
    std::size_t head_;
};

inline SampleStream iter_samples(const Manifest& m, std::size_t layer, std::size_t head) {
    if (layer >= m.geometry.num_layers) throw std::invalid_argument("iter_samples: layer out of range");
    if (head >= m.geometry.num_heads) throw std::invalid_argument("iter_samples: head out of range");
    return {m, layer, head};
}

}  // namespace hifi
