#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "malfuse/features/token_sequence.hpp"

namespace mf::api {

enum class EmulationStatus { success, error };

/// API trace extracted from one emulation report. A report is successful
/// exactly when it recorded at least one call.
struct EmulationReport {
    std::string sample_id;
    EmulationStatus status = EmulationStatus::error;
    std::optional<std::string> error_kind;
    std::vector<std::string> api_calls;
    std::optional<std::string> family;

    bool operator==(const EmulationReport&) const = default;
};

/// Lowercases and drops any module prefix: "KERNEL32.CreateFileW" -> "createfilew".
std::string normalize_api_name(std::string_view name);

/// Accepted document subset:
///   { "sample_id": str?, "family": str?,
///     "entry_points": [ { "apis": [ { "api_name": str, ... }, ... ],
///                         "error": { "type": str }?, ... }, ... ], ... }
/// Unknown fields are ignored. Calls from several entry points are
/// concatenated in document order.
EmulationReport parse_report(std::string_view document);
std::string serialize_report(const EmulationReport& report);

/// API name -> token id; 0 pads, 1 marks names outside the vocabulary.
class ApiVocab {
public:
    static constexpr std::size_t kDefaultCapacity = 600;

    std::int32_t id(std::string_view name) const;
    bool contains(std::string_view name) const { return ids_.find(std::string(name)) != ids_.end(); }
    std::size_t size() const { return capacity_ + 2; }
    std::size_t capacity() const { return capacity_; }
    const std::vector<std::string>& names() const { return names_; }

    std::string to_text() const;
    static ApiVocab from_text(std::string_view text);

    bool operator==(const ApiVocab& o) const { return capacity_ == o.capacity_ && names_ == o.names_; }

private:
    friend ApiVocab build_api_vocab(std::span<const EmulationReport>, std::size_t);

    std::size_t capacity_ = 0;
    std::vector<std::string> names_;
    std::unordered_map<std::string, std::int32_t> ids_;
};

/// Top-v names by total occurrence count over successful reports, ties in
/// lexicographic order.
ApiVocab build_api_vocab(std::span<const EmulationReport> reports, std::size_t v = ApiVocab::kDefaultCapacity);

/// Percentage of call occurrences whose name is in the vocabulary.
double vocab_coverage(const ApiVocab& vocab, std::span<const EmulationReport> reports);

/// Label-encodes the first n calls and pads the rest. Error reports are
/// rejected; callers route them as a missing modality.
TokenSequence encode_apiseq(const EmulationReport& report, const ApiVocab& vocab, std::size_t n = 150);

struct FamilyStats {
    std::string family;
    std::size_t success = 0;
    std::size_t error = 0;
    double error_ratio = 0.0;
};

struct EmulationStats {
    std::vector<FamilyStats> families;  // sorted by family name, non-empty buckets only
    FamilyStats total;
    std::size_t distinct_apis = 0;

    /// `family,success,error,error_ratio` with a trailing `total` row.
    std::string to_csv() const;
};

/// Reports lacking a family label are counted under "unknown".
EmulationStats emulation_stats(std::span<const EmulationReport> reports);

}  // namespace mf::api
