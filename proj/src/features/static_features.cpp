#include "malfuse/features/static_features.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "malfuse/errors.hpp"
#include "malfuse/hash.hpp"

namespace mf::pe {

namespace {

constexpr std::size_t kHeaderLayout = 64;

double log_size(std::uint64_t v) { return std::log1p(static_cast<double>(v)); }

// Year buckets for the COFF timestamp: <2000, 2000-04, 2005-09, 2010-14,
// 2015-17, 2018-19, 2020-21, >=2022. A zero timestamp sets no bucket.
int year_bucket(std::uint32_t timestamp) {
    if (timestamp == 0) return -1;
    const int year = 1970 + static_cast<int>(timestamp / 31556952u);
    constexpr std::array<int, 7> edges{2000, 2005, 2010, 2015, 2018, 2020, 2022};
    int b = 0;
    while (b < 7 && year >= edges[static_cast<std::size_t>(b)]) ++b;
    return b;
}

double section_flag_entry(const PeSummary& pe) {
    for (const auto& s : pe.sections) {
        if (pe.entry_point >= s.virtual_address &&
            pe.entry_point < std::uint64_t{s.virtual_address} + std::max(s.virtual_size, s.raw_size))
            return (s.characteristics & 0x20000000u) ? 1.0 : 0.5;
    }
    return 0.0;
}

}  // namespace

std::string StaticSchema::describe() const {
    return std::string(kStaticSchemaVersion) + ":byte_histogram=" + std::to_string(byte_histogram) +
           ",byte_entropy=" + std::to_string(byte_entropy) + ",header=" + std::to_string(header) +
           ",imports=" + std::to_string(imports) + ",sections=" + std::to_string(sections);
}

std::vector<double> byte_histogram(std::span<const std::uint8_t> bytes) {
    std::vector<double> out(256, 0.0);
    if (bytes.empty()) return out;
    std::array<std::uint64_t, 256> counts{};
    for (auto b : bytes) ++counts[b];
    const auto n = static_cast<double>(bytes.size());
    for (std::size_t i = 0; i < 256; ++i) out[i] = static_cast<double>(counts[i]) / n;
    return out;
}

std::vector<double> byte_entropy_histogram(std::span<const std::uint8_t> bytes, std::size_t window,
                                           std::size_t stride) {
    std::vector<double> out(256, 0.0);
    if (bytes.empty()) return out;
    if (window == 0 || stride == 0) throw ConfigurationError("byte_entropy_histogram: window and stride must be >= 1");

    std::array<std::uint64_t, 256> acc{};
    auto add_window = [&](std::span<const std::uint8_t> w) {
        std::array<std::uint64_t, 16> nibbles{};
        for (auto b : w) ++nibbles[b >> 4];
        double h = 0.0;
        const auto n = static_cast<double>(w.size());
        for (auto c : nibbles) {
            if (c == 0) continue;
            const double p = static_cast<double>(c) / n;
            h -= p * std::log2(p);
        }
        // Nibble entropy is at most 4 bits; doubling maps it onto the 0..8
        // bits-per-byte scale, and half-bit steps give 16 rows.
        const int row = std::min(15, static_cast<int>(h * 2.0 * 2.0));
        for (std::size_t k = 0; k < 16; ++k) acc[static_cast<std::size_t>(row) * 16 + k] += nibbles[k];
    };

    if (bytes.size() < window) {
        add_window(bytes);
    } else {
        for (std::size_t start = 0; start + window <= bytes.size(); start += stride)
            add_window(bytes.subspan(start, window));
    }
    std::uint64_t total = 0;
    for (auto c : acc) total += c;
    for (std::size_t i = 0; i < 256; ++i) out[i] = static_cast<double>(acc[i]) / static_cast<double>(total);
    return out;
}

std::vector<double> header_block(const PeSummary& pe, std::size_t dim) {
    std::vector<double> f(kHeaderLayout, 0.0);
    if (pe.parse_ok) {
        f[0] = 1.0;
        f[1] = pe.pe32_plus ? 1.0 : 0.0;
        f[2] = pe.machine == 0x014c ? 1.0 : 0.0;
        f[3] = pe.machine == 0x8664 ? 1.0 : 0.0;
        f[4] = (pe.machine != 0x014c && pe.machine != 0x8664) ? 1.0 : 0.0;
        f[5] = log_size(pe.file_size);
        f[6] = log_size(pe.size_of_code);
        f[7] = log_size(pe.size_of_initialized_data);
        f[8] = log_size(pe.size_of_uninitialized_data);
        f[9] = log_size(pe.size_of_image);
        f[10] = log_size(pe.size_of_headers);
        f[11] = log_size(pe.overlay_size);
        f[12] = log_size(pe.section_count);
        f[13] = section_flag_entry(pe);
        f[14] = pe.checksum != 0 ? 1.0 : 0.0;
        f[15] = log_size(pe.stack_reserve);
        f[16] = log_size(pe.heap_reserve);
        f[17] = pe.linker_major / 16.0;
        f[18] = pe.os_major / 16.0;
        f[19] = pe.subsystem_major / 16.0;
        if (const int b = year_bucket(pe.timestamp); b >= 0) f[20 + static_cast<std::size_t>(b)] = 1.0;
        f[28] = pe.subsystem == 2 ? 1.0 : 0.0;
        f[29] = pe.subsystem == 3 ? 1.0 : 0.0;
        f[30] = (pe.subsystem != 2 && pe.subsystem != 3) ? 1.0 : 0.0;
        for (std::size_t bit = 0; bit < 16; ++bit) f[31 + bit] = (pe.coff_characteristics >> bit) & 1u;
        for (std::size_t bit = 0; bit < 8; ++bit) f[47 + bit] = (pe.dll_characteristics >> (bit + 5)) & 1u;
        f[55] = log_size(pe.imports.size());
        f[56] = log_size(pe.import_dll_count);
        f[57] = pe.data_directory_count / 16.0;
        auto dir_present = [&](std::size_t d) {
            return d < pe.data_directory_sizes.size() && pe.data_directory_sizes[d] != 0 ? 1.0 : 0.0;
        };
        f[58] = dir_present(1);
        f[59] = dir_present(2);
        f[60] = dir_present(4);
        f[61] = dir_present(9);
        double sum = 0.0, mx = 0.0;
        for (const auto& s : pe.sections) {
            sum += s.entropy;
            mx = std::max(mx, s.entropy);
        }
        if (!pe.sections.empty()) f[62] = sum / static_cast<double>(pe.sections.size()) / 8.0;
        f[63] = mx / 8.0;
    }
    f.resize(dim, 0.0);
    return f;
}

void hash_into(std::vector<double>& bins, std::string_view token, double weight) {
    if (bins.empty()) return;
    const std::uint64_t h = fnv1a64(token);
    bins[h % bins.size()] += (h >> 63) ? weight : -weight;
}

std::vector<double> import_block(const PeSummary& pe, std::size_t bins) {
    std::vector<double> out(bins, 0.0);
    if (!pe.parse_ok) return out;
    for (const auto& name : pe.imports) hash_into(out, name);
    return out;
}

std::vector<double> section_block(const PeSummary& pe, std::size_t bins) {
    std::vector<double> out(bins, 0.0);
    if (!pe.parse_ok || bins == 0) return out;
    // Four equal sub-blocks: raw size, entropy, virtual size and flag tokens,
    // each hashed by section name. Leftover bins stay zero.
    const std::size_t sub = bins / 4;
    std::array<std::vector<double>, 4> parts;
    for (auto& p : parts) p.assign(sub, 0.0);
    constexpr std::array<std::pair<std::uint32_t, const char*>, 5> flags{{{0x00000020u, "code"},
                                                                          {0x00000040u, "idata"},
                                                                          {0x20000000u, "exec"},
                                                                          {0x40000000u, "read"},
                                                                          {0x80000000u, "write"}}};
    for (const auto& s : pe.sections) {
        hash_into(parts[0], s.name, log_size(s.raw_size));
        hash_into(parts[1], s.name, s.entropy);
        hash_into(parts[2], s.name, log_size(s.virtual_size));
        for (const auto& [mask, label] : flags)
            if (s.characteristics & mask) hash_into(parts[3], s.name + ":" + label);
    }
    for (std::size_t p = 0; p < 4; ++p) std::copy(parts[p].begin(), parts[p].end(), out.begin() + p * sub);
    return out;
}

StaticFeatureVector featurize_static(std::span<const std::uint8_t> bytes, const StaticSchema& schema) {
    if (schema.byte_histogram != 256 || schema.byte_entropy != 256)
        throw ConfigurationError("static schema: byte blocks are fixed at 256 bins");
    const PeSummary pe = parse_pe(bytes);
    StaticFeatureVector v;
    v.values.reserve(schema.dim());
    auto append = [&](const std::vector<double>& block) { v.values.insert(v.values.end(), block.begin(), block.end()); };
    append(byte_histogram(bytes));
    append(byte_entropy_histogram(bytes));
    append(header_block(pe, schema.header));
    append(import_block(pe, schema.imports));
    append(section_block(pe, schema.sections));
    return v;
}

}  // namespace mf::pe
