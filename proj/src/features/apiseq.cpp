#include "malfuse/features/apiseq.hpp"

#include <algorithm>
#include <cstdio>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "malfuse/errors.hpp"

namespace mf::api {

using nlohmann::json;

std::string normalize_api_name(std::string_view name) {
    if (const auto dot = name.rfind('.'); dot != std::string_view::npos) name = name.substr(dot + 1);
    std::string out(name);
    for (auto& c : out)
        if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    return out;
}

EmulationReport parse_report(std::string_view document) {
    json doc;
    try {
        doc = json::parse(document.begin(), document.end());
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("malformed report: ") + e.what(), e.byte);
    } catch (const json::exception& e) {
        // e.g. numbers out of double range
        throw ParseError(std::string("malformed report: ") + e.what(), 0);
    }
    if (!doc.is_object()) throw SchemaError("report: top level must be an object");

    EmulationReport r;
    if (auto it = doc.find("sample_id"); it != doc.end()) {
        if (!it->is_string()) throw SchemaError("report: 'sample_id' must be a string");
        r.sample_id = it->get<std::string>();
    }
    if (auto it = doc.find("family"); it != doc.end() && !it->is_null()) {
        if (!it->is_string()) throw SchemaError("report: 'family' must be a string");
        r.family = it->get<std::string>();
    }
    const auto eps = doc.find("entry_points");
    if (eps == doc.end() || !eps->is_array()) throw SchemaError("report: missing 'entry_points' array");

    for (std::size_t e = 0; e < eps->size(); ++e) {
        const json& ep = (*eps)[e];
        if (!ep.is_object()) throw SchemaError("report: entry point " + std::to_string(e) + " is not an object");
        const auto apis = ep.find("apis");
        if (apis == ep.end() || !apis->is_array())
            throw SchemaError("report: entry point " + std::to_string(e) + " lacks an 'apis' array");
        for (std::size_t k = 0; k < apis->size(); ++k) {
            const json& call = (*apis)[k];
            const auto name = call.is_object() ? call.find("api_name") : call.end();
            if (!call.is_object() || name == call.end() || !name->is_string()) {
                throw SchemaError("report: entry point " + std::to_string(e) + " call " + std::to_string(k) +
                                  " lacks a string 'api_name'");
            }
            r.api_calls.push_back(normalize_api_name(name->get<std::string>()));
        }
        if (auto err = ep.find("error"); err != ep.end() && err->is_object() && !r.error_kind) {
            if (auto type = err->find("type"); type != err->end() && type->is_string())
                r.error_kind = type->get<std::string>();
        }
    }
    r.status = r.api_calls.empty() ? EmulationStatus::error : EmulationStatus::success;
    return r;
}

std::string serialize_report(const EmulationReport& report) {
    json apis = json::array();
    for (const auto& name : report.api_calls) apis.push_back({{"api_name", name}});
    json ep = {{"ep_type", "module_entry"}, {"apis", std::move(apis)}};
    if (report.error_kind) ep["error"] = {{"type", *report.error_kind}};
    json doc = {{"sample_id", report.sample_id}, {"entry_points", json::array({std::move(ep)})}};
    if (report.family) doc["family"] = *report.family;
    return doc.dump();
}

// ----------------------------------------------------------------- ApiVocab

std::int32_t ApiVocab::id(std::string_view name) const {
    const auto it = ids_.find(std::string(name));
    return it == ids_.end() ? kRareId : it->second;
}

ApiVocab build_api_vocab(std::span<const EmulationReport> reports, std::size_t v) {
    if (v == 0) throw InputError("build_api_vocab: vocabulary size must be >= 1");
    std::map<std::string, std::size_t> counts;
    bool any_success = false;
    for (const auto& r : reports) {
        if (r.status != EmulationStatus::success) continue;
        any_success = true;
        for (const auto& c : r.api_calls) ++counts[c];
    }
    if (!any_success) throw InputError("build_api_vocab: corpus has no successful reports");

    std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
    // counts is name-ordered, so a stable sort on count keeps the lexicographic tie-break.
    std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    if (ranked.size() > v) ranked.resize(v);

    ApiVocab vocab;
    vocab.capacity_ = v;
    for (std::size_t i = 0; i < ranked.size(); ++i) {
        vocab.names_.push_back(ranked[i].first);
        vocab.ids_[ranked[i].first] = static_cast<std::int32_t>(i + 2);
    }
    return vocab;
}

std::string ApiVocab::to_text() const {
    std::string out = "mf-api-vocab\t1\tsize=" + std::to_string(capacity_) + "\tpad=0\trare=1\n";
    for (std::size_t i = 0; i < names_.size(); ++i) out += names_[i] + "\t" + std::to_string(i + 2) + "\n";
    return out;
}

ApiVocab ApiVocab::from_text(std::string_view text) {
    std::istringstream in{std::string(text)};
    std::string header;
    std::getline(in, header);
    std::size_t cap = 0;
    if (!header.starts_with("mf-api-vocab\t1\t") || std::sscanf(header.c_str(), "mf-api-vocab\t1\tsize=%zu", &cap) != 1)
        throw CompatibilityError("api vocab: unrecognized header '" + header + "'");
    ApiVocab v;
    v.capacity_ = cap;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos || tab == 0) throw CompatibilityError("api vocab: malformed entry '" + line + "'");
        const std::string name = line.substr(0, tab);
        const std::size_t expected = v.names_.size() + 2;
        if (line.substr(tab + 1) != std::to_string(expected) || expected > cap + 1 || v.ids_.contains(name))
            throw CompatibilityError("api vocab: malformed entry '" + line + "'");
        v.names_.push_back(name);
        v.ids_[name] = static_cast<std::int32_t>(expected);
    }
    return v;
}

double vocab_coverage(const ApiVocab& vocab, std::span<const EmulationReport> reports) {
    if (reports.empty()) throw InputError("vocab_coverage: empty corpus");
    std::size_t total = 0, covered = 0;
    for (const auto& r : reports) {
        for (const auto& c : r.api_calls) {
            ++total;
            if (vocab.contains(c)) ++covered;
        }
    }
    if (total == 0) return 100.0;
    return 100.0 * static_cast<double>(covered) / static_cast<double>(total);
}

TokenSequence encode_apiseq(const EmulationReport& report, const ApiVocab& vocab, std::size_t n) {
    if (report.status != EmulationStatus::success)
        throw InputError("encode_apiseq: report '" + report.sample_id + "' is an emulation error");
    if (n == 0) throw InputError("encode_apiseq: sequence length must be >= 1");
    TokenSequence seq;
    seq.true_length = report.api_calls.size();
    seq.ids.assign(n, kPadId);
    const std::size_t keep = std::min(n, report.api_calls.size());
    for (std::size_t i = 0; i < keep; ++i) seq.ids[i] = vocab.id(report.api_calls[i]);
    return seq;
}

// -------------------------------------------------------------------- stats

EmulationStats emulation_stats(std::span<const EmulationReport> reports) {
    std::map<std::string, FamilyStats> buckets;
    std::set<std::string> distinct;
    EmulationStats out;
    out.total.family = "total";
    for (const auto& r : reports) {
        const std::string fam = r.family.value_or("unknown");
        auto& b = buckets[fam];
        b.family = fam;
        if (r.status == EmulationStatus::success) {
            ++b.success;
            ++out.total.success;
        } else {
            ++b.error;
            ++out.total.error;
        }
        distinct.insert(r.api_calls.begin(), r.api_calls.end());
    }
    auto ratio = [](FamilyStats& s) {
        const std::size_t n = s.success + s.error;
        s.error_ratio = n ? static_cast<double>(s.error) / static_cast<double>(n) : 0.0;
    };
    for (auto& [name, b] : buckets) {
        ratio(b);
        out.families.push_back(b);
    }
    ratio(out.total);
    out.distinct_apis = distinct.size();
    return out;
}

std::string EmulationStats::to_csv() const {
    std::string out = "family,success,error,error_ratio\n";
    char buf[256];
    auto row = [&](const FamilyStats& s) {
        std::snprintf(buf, sizeof buf, "%s,%zu,%zu,%.6f\n", s.family.c_str(), s.success, s.error, s.error_ratio);
        out += buf;
    };
    for (const auto& f : families) row(f);
    row(total);
    return out;
}

}  // namespace mf::api
