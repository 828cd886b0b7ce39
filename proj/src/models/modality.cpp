#include "malfuse/models/modality.hpp"

#include <bit>

#include "malfuse/errors.hpp"

namespace mf::models {

std::string_view to_string(Modality m) {
    switch (m) {
        case Modality::filepath: return "fp";
        case Modality::apiseq: return "api";
        case Modality::ember: return "emb";
    }
    return "?";
}

Modality modality_from_string(std::string_view s) {
    if (s == "fp") return Modality::filepath;
    if (s == "api") return Modality::apiseq;
    if (s == "emb") return Modality::ember;
    throw ConfigurationError("unknown module '" + std::string(s) + "' (expected fp, api or emb)");
}

ModalitySet ModalitySet::parse(std::string_view signature) {
    ModalitySet s;
    if (signature == "none") return s;
    std::size_t pos = 0;
    while (pos <= signature.size()) {
        auto end = signature.find_first_of("+,", pos);
        if (end == std::string_view::npos) end = signature.size();
        const auto tok = signature.substr(pos, end - pos);
        const Modality m = modality_from_string(tok);
        if (s.contains(m)) throw ConfigurationError("module '" + std::string(tok) + "' listed twice");
        s.add(m);
        pos = end + 1;
    }
    return s;
}

std::size_t ModalitySet::size() const { return static_cast<std::size_t>(std::popcount(bits_)); }

std::vector<Modality> ModalitySet::members() const {
    std::vector<Modality> out;
    for (auto m : kModalityOrder)
        if (contains(m)) out.push_back(m);
    return out;
}

std::string ModalitySet::signature() const {
    if (empty()) return "none";
    std::string out;
    for (auto m : members()) {
        if (!out.empty()) out += '+';
        out += to_string(m);
    }
    return out;
}

const std::vector<ModalitySet>& all_subsets() {
    using M = Modality;
    static const std::vector<ModalitySet> subsets{
        {M::filepath}, {M::apiseq}, {M::ember}, {M::filepath, M::apiseq}, {M::filepath, M::ember},
        {M::apiseq, M::ember}, ModalitySet::all()};
    return subsets;
}

}  // namespace mf::models
