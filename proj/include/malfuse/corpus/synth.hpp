#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "malfuse/corpus/manifest.hpp"

namespace mf::corpus {

/// Parameters of the synthetic corpus.
///
/// Every sample carries one path fragment A_i and one API trigram B_j from
/// a pool of `pair_pool` pairs, with i and j uniform. Cross-modality
/// malicious samples (fraction rho of the malicious class) have i == j;
/// every other sample has i != j. Each pattern is therefore equally common
/// in both classes while the matched pair occurs only in malicious samples.
///
/// The remaining malicious samples carry single-modality signals: a
/// malicious path fragment, a malicious API trigram or a high-entropy
/// block. A strength is the share of these samples expressing that
/// modality's signal. Assignment uses one uniform draw laid out over
/// consecutive segments, so strengths summing to at most 1 give disjoint
/// signal sets and strengths of 1 give every signal to every sample.
struct SynthSpec {
    std::size_t train = 4000;
    std::size_t valid = 1000;
    std::size_t test = 1000;
    double malicious_fraction = 0.5;
    std::uint64_t seed = 0;
    double path_strength = 0.3;
    double api_strength = 0.4;  // highest, since emulation failures hide part of it
    double static_strength = 0.3;
    double rho = 0.5;
    std::size_t pair_pool = 4;
    std::size_t signal_patterns = 4;
    std::size_t api_names = 800;
    bool emulation_errors = true;  // per-family emulation failure rates

    /// Throws GenerationError when the spec cannot be realized.
    void validate() const;
    nlohmann::json to_json() const;
    static SynthSpec from_json(const nlohmann::json& j);
};

inline constexpr std::size_t kNoPlacement = std::numeric_limits<std::size_t>::max();

/// Ground truth for one generated sample.
struct SampleTruth {
    bool cross = false;             // matched pair planted
    std::size_t path_pair = 0;      // index i of A_i
    std::size_t api_pair = 0;       // index j of B_j
    std::uint8_t signals = 0;       // bit 0 path, bit 1 api, bit 2 static
    std::size_t signal_pattern = 0; // which malicious fragment/trigram
    bool emulation_error = false;
    std::size_t path_pair_offset = kNoPlacement;    // byte offset of A_i in the raw path
    std::size_t path_signal_offset = kNoPlacement;  // byte offset of the malicious fragment
    std::size_t api_pair_position = kNoPlacement;   // call index of B_j's first call
    std::size_t api_signal_position = kNoPlacement; // call index of the malicious trigram
    std::size_t static_signal_offset = kNoPlacement;

    bool has_signal(unsigned bit) const { return signals & (1u << bit); }
};

/// Pattern tables used by the generator.
struct PatternTables {
    std::vector<std::string> path_pairs;                  // A_i directory names
    std::vector<std::array<std::string, 3>> api_pairs;    // B_j, normalized names
    std::vector<std::string> path_signals;
    std::vector<std::array<std::string, 3>> api_signals;
    std::vector<std::string> api_vocabulary;              // background names by rank, normalized
};

struct SynthCorpus {
    SynthSpec spec;
    PatternTables patterns;
    std::vector<SampleRecord> records;  // paths relative to the corpus directory
    std::vector<SampleTruth> truth;
    std::vector<std::string> reports;   // JSON documents
    std::vector<std::vector<std::uint8_t>> pe_bytes;
};

/// Deterministic in spec (including the seed).
SynthCorpus generate_synthetic_corpus(const SynthSpec& spec);

/// Writes manifest.tsv, reports/<id>.json, pe/<id>.bin, truth.tsv and
/// synth.json under dir.
void write_corpus(const SynthCorpus& corpus, const std::filesystem::path& dir);

std::string format_truth(const SynthCorpus& corpus);

/// Families and their emulation failure rates (benign family first).
const std::vector<std::pair<std::string, double>>& family_error_rates();

}  // namespace mf::corpus
