#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "malfuse/features/token_sequence.hpp"

namespace mf::path {

/// Lowercase Windows path with drive letters, UNC prefixes, user names
/// and known environment variables replaced by placeholders.
struct NormalizedPath {
    std::string text;

    bool operator==(const NormalizedPath&) const = default;
};

/// Environment variable -> canonical path. Keys are stored lowercase
/// without the surrounding '%'.
class EnvMap {
public:
    EnvMap() = default;

    /// The built-in table of standard Windows variables.
    static EnvMap defaults();

    /// Parses `variable=replacement` lines (`#` starts a comment). Entries
    /// override those already present in `base`.
    static EnvMap parse(std::string_view text, const EnvMap& base = defaults());

    void set(std::string_view variable, std::string_view replacement);
    const std::string* find(std::string_view variable) const;
    std::size_t size() const { return entries_.size(); }
    std::string to_text() const;

private:
    std::map<std::string, std::string, std::less<>> entries_;
};

NormalizedPath normalize_path(std::string_view raw, const EnvMap& env = EnvMap::defaults());

/// Byte -> token id table over UTF-8 bytes. Id 0 pads, id 1 is the rare
/// bucket, the `capacity` most frequent bytes take ids 2..capacity+1.
class ByteVocab {
public:
    static constexpr std::size_t kDefaultCapacity = 150;

    ByteVocab();

    std::int32_t id(std::uint8_t byte) const { return table_[byte]; }
    /// Declared embedding rows: capacity + 2.
    std::size_t size() const { return capacity_ + 2; }
    std::size_t capacity() const { return capacity_; }
    /// Bytes that received their own id, in id order.
    const std::vector<std::uint8_t>& bytes() const { return ordered_; }

    std::string to_text() const;
    static ByteVocab from_text(std::string_view text);

    bool operator==(const ByteVocab& o) const { return capacity_ == o.capacity_ && table_ == o.table_; }

private:
    friend ByteVocab build_byte_vocab(std::span<const NormalizedPath>, std::size_t);

    std::size_t capacity_ = 0;
    std::array<std::int32_t, 256> table_{};
    std::vector<std::uint8_t> ordered_;
};

/// Most frequent `size` bytes in descending count, ties by ascending byte.
ByteVocab build_byte_vocab(std::span<const NormalizedPath> corpus, std::size_t size = ByteVocab::kDefaultCapacity);

/// Maps bytes through the vocab, truncating to or right-padding up to n.
TokenSequence encode_path(const NormalizedPath& p, const ByteVocab& vocab, std::size_t n = 100);

}  // namespace mf::path
