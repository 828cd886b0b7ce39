#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace mf::models {

/// Early-fusion modules in their fixed concatenation order.
enum class Modality : std::uint8_t { filepath = 0, apiseq = 1, ember = 2 };

inline constexpr std::array<Modality, 3> kModalityOrder{Modality::filepath, Modality::apiseq, Modality::ember};
inline constexpr std::size_t kRepresentationDim = 128;

/// Short tags: "fp", "api", "emb".
std::string_view to_string(Modality m);
Modality modality_from_string(std::string_view s);

/// A set of modalities; iteration and signatures always follow kModalityOrder.
class ModalitySet {
public:
    constexpr ModalitySet() = default;
    constexpr ModalitySet(std::initializer_list<Modality> ms) {
        for (auto m : ms) add(m);
    }

    static constexpr ModalitySet all() { return {Modality::filepath, Modality::apiseq, Modality::ember}; }
    static constexpr ModalitySet from_bits(std::uint8_t bits) {
        ModalitySet s;
        s.bits_ = bits & 0x7;
        return s;
    }
    /// Parses a signature such as "fp+api"; order in the text is irrelevant.
    static ModalitySet parse(std::string_view signature);

    constexpr void add(Modality m) { bits_ |= static_cast<std::uint8_t>(1u << static_cast<unsigned>(m)); }
    constexpr bool contains(Modality m) const { return bits_ & (1u << static_cast<unsigned>(m)); }
    constexpr bool empty() const { return bits_ == 0; }
    constexpr std::uint8_t bits() const { return bits_; }
    std::size_t size() const;
    std::vector<Modality> members() const;
    /// Fusion width: 128 per enabled module.
    std::size_t fusion_dim() const { return size() * kRepresentationDim; }
    /// Canonical "fp+api+emb"-style text; "none" when empty.
    std::string signature() const;

    constexpr ModalitySet operator&(ModalitySet o) const { return from_bits(bits_ & o.bits_); }
    constexpr bool operator==(const ModalitySet&) const = default;

private:
    std::uint8_t bits_ = 0;
};

/// The seven non-empty subsets: fp, api, emb, fp+api, fp+emb, api+emb, fp+api+emb.
const std::vector<ModalitySet>& all_subsets();

}  // namespace mf::models
