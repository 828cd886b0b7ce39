#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "malfuse/corpus/manifest.hpp"
#include "malfuse/eval/experiment.hpp"
#include "malfuse/features/apiseq.hpp"
#include "malfuse/features/path.hpp"
#include "malfuse/features/static_features.hpp"

namespace mf::corpus {

struct FeaturizerConfig {
    std::size_t path_vocab = path::ByteVocab::kDefaultCapacity;
    std::size_t path_len = 100;
    std::size_t api_vocab = api::ApiVocab::kDefaultCapacity;
    std::size_t api_len = 150;
    pe::StaticSchema schema;
    std::string env_overrides;  // extra `variable=replacement` lines

    nlohmann::json to_json() const;
    static FeaturizerConfig from_json(const nlohmann::json& j);
};

/// Everything needed to encode new samples the same way as the training data.
struct FeaturizerState {
    FeaturizerConfig config;
    path::EnvMap env = path::EnvMap::defaults();
    path::ByteVocab byte_vocab;
    api::ApiVocab api_vocab;

    /// Per module tag ("fp", "api", "emb"): FNV-1a over the config slice
    /// and the vocabulary that shape its encoding.
    std::map<std::string, std::string> hashes() const;

    void save(const std::filesystem::path& dir) const;
    static FeaturizerState load(const std::filesystem::path& dir);
};

struct Diagnostic {
    std::string sample_id;
    std::string modality;
    std::string message;
};

/// Encoded rows of a manifest, in manifest order.
struct EncodedDataset {
    std::vector<std::string> ids;
    std::vector<double> labels;
    std::vector<std::string> families;
    std::vector<std::optional<Split>> splits;
    models::FusionBatch batch;
    std::map<std::string, std::string> featurizer_hashes;

    std::size_t rows() const { return ids.size(); }
    /// Rows of one split, or every row when split is empty.
    eval::SplitData split(std::optional<Split> which) const;

    /// "MFDS" | u16 version | str JSON header | per present modality f32 rows x cols.
    std::vector<std::uint8_t> encode() const;
    static EncodedDataset decode(const std::vector<std::uint8_t>& bytes);
};

struct FeaturizeResult {
    EncodedDataset dataset;
    FeaturizerState state;
    std::vector<Diagnostic> errors;           // unreadable or malformed inputs, in manifest order
    std::vector<api::EmulationReport> reports;  // parsed reports, in manifest order
};

/// Reads and encodes every record (paths relative to base_dir). Without a
/// given state, vocabularies are built from the training split (all rows
/// when no record is marked train). Per-sample work runs on `jobs`
/// threads; results do not depend on the thread count. Failed emulations
/// and empty paths make that modality absent; unreadable or malformed
/// files are reported in `errors` and leave it absent as well.
FeaturizeResult featurize_corpus(const std::vector<SampleRecord>& records, const std::filesystem::path& base_dir,
                                 const FeaturizerConfig& config, std::size_t jobs = 1,
                                 const FeaturizerState* state = nullptr);

/// `vocab_size,coverage` rows for each size (coverage in percent).
std::string coverage_csv(const std::vector<api::EmulationReport>& reports, const std::vector<std::size_t>& sizes);

}  // namespace mf::corpus
