#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace mf {

inline constexpr std::int32_t kPadId = 0;
inline constexpr std::int32_t kRareId = 1;

/// Fixed-length token encoding; ids past true_length are padding.
struct TokenSequence {
    std::vector<std::int32_t> ids;
    std::size_t true_length = 0;

    bool operator==(const TokenSequence&) const = default;
};

}  // namespace mf
