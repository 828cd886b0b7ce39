#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace mf::corpus {

enum class Split : std::uint8_t { train = 0, valid = 1, test = 2 };

std::string_view to_string(Split s);
Split split_from_string(std::string_view s);

inline constexpr const char* kBenignFamily = "clean";

struct SampleRecord {
    std::string sample_id;
    std::string filepath;                     // raw path; empty when unknown
    std::optional<std::string> report_path;  // emulation report (JSON)
    std::optional<std::string> pe_path;      // raw PE bytes
    std::optional<std::string> static_path;  // precomputed static vector (MFSV)
    int label = 0;
    std::optional<std::string> family;
    std::optional<Split> split;

    bool operator==(const SampleRecord&) const = default;
};

/// Tab-separated, one record per line, '#' comments, this header first:
inline constexpr const char* kManifestHeader = "sample_id\tlabel\tfamily\tsplit\tfilepath\treport\tpe\tstatic";

/// Checks one record: non-empty id, label 0/1, label 1 iff family is not
/// "clean" (when a family is given), a PE or static vector present.
/// Throws InputError naming the sample.
void validate_record(const SampleRecord& r);

/// Parses manifest text. Empty optional fields are written as "-".
/// Malformed lines raise InputError("<source>:<line>: ..."); duplicate ids
/// and invalid records are rejected the same way.
std::vector<SampleRecord> parse_manifest(std::string_view text, std::string_view source = "manifest");
std::vector<SampleRecord> load_manifest(const std::filesystem::path& path);
std::string format_manifest(const std::vector<SampleRecord>& records);

/// Per-split counts and shares, e.g. "train 80 (80.0%)". Unassigned rows
/// are listed as "unsplit".
std::string split_summary(const std::vector<SampleRecord>& records);

/// Assigns train/valid/test within each family (label when no family) so
/// proportions are preserved per stratum. Records that already carry a
/// split keep it unless overwrite is set.
void stratified_split(std::vector<SampleRecord>& records, double train_fraction, double valid_fraction,
                      std::uint64_t seed, bool overwrite = false);

/// Precomputed static vectors: "MFSV" | u16 version | str schema | u32 dim | f32 x dim.
std::vector<std::uint8_t> encode_static_vector(const std::vector<double>& values, std::string_view schema);
std::vector<double> decode_static_vector(const std::vector<std::uint8_t>& bytes, std::string_view expected_schema,
                                         std::size_t expected_dim);

}  // namespace mf::corpus
