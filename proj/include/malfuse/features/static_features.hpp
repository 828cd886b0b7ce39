#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "malfuse/features/pe.hpp"

namespace mf::pe {

inline constexpr const char* kStaticSchemaVersion = "mf-static-v1";

/// Block sizes of the static feature vector, in concatenation order.
struct StaticSchema {
    std::size_t byte_histogram = 256;
    std::size_t byte_entropy = 256;
    std::size_t header = 64;
    std::size_t imports = 128;
    std::size_t sections = 64;

    std::size_t dim() const { return byte_histogram + byte_entropy + header + imports + sections; }
    std::string describe() const;
};

struct StaticFeatureVector {
    std::vector<double> values;
    std::string schema_version = kStaticSchemaVersion;
};

/// bin b = count(byte == b) / total; all zero for empty input.
std::vector<double> byte_histogram(std::span<const std::uint8_t> bytes);

/// Joint 16x16 histogram of (window entropy bin, high nibble) over sliding
/// windows, flattened row-major by entropy bin and normalized to sum 1.
/// Input shorter than the window is treated as one window.
std::vector<double> byte_entropy_histogram(std::span<const std::uint8_t> bytes, std::size_t window = 2048,
                                           std::size_t stride = 1024);

/// Header block, hashed imports and hashed section profile for a parsed
/// image; zero blocks when parse_ok is false.
std::vector<double> header_block(const PeSummary& pe, std::size_t dim = 64);
std::vector<double> import_block(const PeSummary& pe, std::size_t bins = 128);
std::vector<double> section_block(const PeSummary& pe, std::size_t bins = 64);

/// Signed feature hashing: FNV-1a 64 of the token picks bin h % bins and
/// sign (+1 if the top bit is set, else -1).
void hash_into(std::vector<double>& bins, std::string_view token, double weight = 1.0);

StaticFeatureVector featurize_static(std::span<const std::uint8_t> bytes, const StaticSchema& schema = {});

}  // namespace mf::pe
