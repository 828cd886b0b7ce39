#include "malfuse/corpus/manifest.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>

#include "malfuse/binary_io.hpp"
#include "malfuse/errors.hpp"
#include "malfuse/nn/tensor.hpp"

namespace mf::corpus {

std::string_view to_string(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::valid: return "valid";
        case Split::test: return "test";
    }
    return "?";
}

Split split_from_string(std::string_view s) {
    if (s == "train") return Split::train;
    if (s == "valid") return Split::valid;
    if (s == "test") return Split::test;
    throw InputError("unknown split '" + std::string(s) + "'");
}

void validate_record(const SampleRecord& r) {
    if (r.sample_id.empty()) throw InputError("record without sample_id");
    const std::string who = "sample '" + r.sample_id + "': ";
    if (r.label != 0 && r.label != 1) throw InputError(who + "label must be 0 or 1");
    if (r.family) {
        if (r.family->empty()) throw InputError(who + "empty family");
        const bool benign = *r.family == kBenignFamily;
        if (benign == (r.label == 1))
            throw InputError(who + "label " + std::to_string(r.label) + " contradicts family '" + *r.family + "'");
    }
    if (!r.pe_path && !r.static_path) throw InputError(who + "needs a PE file or a precomputed static vector");
}

namespace {

std::vector<std::string_view> split_tabs(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto tab = line.find('\t', start);
        out.push_back(line.substr(start, tab == std::string_view::npos ? std::string_view::npos : tab - start));
        if (tab == std::string_view::npos) break;
        start = tab + 1;
    }
    return out;
}

std::optional<std::string> opt(std::string_view field) {
    if (field.empty() || field == "-") return std::nullopt;
    return std::string(field);
}

}  // namespace

std::vector<SampleRecord> parse_manifest(std::string_view text, std::string_view source) {
    std::vector<SampleRecord> out;
    std::set<std::string> seen;
    bool header = false;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        auto nl = text.find('\n', pos);
        if (nl == std::string_view::npos) nl = text.size();
        std::string_view line = text.substr(pos, nl - pos);
        pos = nl + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line.empty() || line.front() == '#') {
            if (nl == text.size()) break;
            continue;
        }
        const std::string where = std::string(source) + ":" + std::to_string(line_no) + ": ";
        if (!header) {
            if (line != kManifestHeader) throw InputError(where + "expected header '" + kManifestHeader + "'");
            header = true;
            continue;
        }
        const auto f = split_tabs(line);
        if (f.size() != 8) throw InputError(where + "expected 8 tab-separated fields, got " + std::to_string(f.size()));
        SampleRecord r;
        r.sample_id = std::string(f[0]);
        if (f[1] == "0" || f[1] == "1") {
            r.label = f[1] == "1";
        } else {
            throw InputError(where + "label must be 0 or 1, got '" + std::string(f[1]) + "'");
        }
        r.family = opt(f[2]);
        try {
            if (auto s = opt(f[3])) r.split = split_from_string(*s);
        } catch (const InputError& e) {
            throw InputError(where + e.what());
        }
        r.filepath = f[4] == "-" ? std::string() : std::string(f[4]);
        r.report_path = opt(f[5]);
        r.pe_path = opt(f[6]);
        r.static_path = opt(f[7]);
        try {
            validate_record(r);
        } catch (const InputError& e) {
            throw InputError(where + e.what());
        }
        if (!seen.insert(r.sample_id).second) throw InputError(where + "duplicate sample_id '" + r.sample_id + "'");
        out.push_back(std::move(r));
        if (nl == text.size()) break;
    }
    if (!header) throw InputError(std::string(source) + ": missing header line");
    return out;
}

std::vector<SampleRecord> load_manifest(const std::filesystem::path& path) {
    return parse_manifest(read_file_text(path), path.string());
}

std::string format_manifest(const std::vector<SampleRecord>& records) {
    std::string out = std::string(kManifestHeader) + "\n";
    auto field = [](const std::optional<std::string>& v) { return v ? *v : std::string("-"); };
    for (const auto& r : records) {
        out += r.sample_id + "\t" + std::to_string(r.label) + "\t" + field(r.family) + "\t" +
               (r.split ? std::string(to_string(*r.split)) : "-") + "\t" + (r.filepath.empty() ? "-" : r.filepath) +
               "\t" + field(r.report_path) + "\t" + field(r.pe_path) + "\t" + field(r.static_path) + "\n";
    }
    return out;
}

std::string split_summary(const std::vector<SampleRecord>& records) {
    std::map<std::string, std::size_t> counts;
    for (const auto& r : records) ++counts[r.split ? std::string(to_string(*r.split)) : "unsplit"];
    std::string out;
    for (const char* name : {"train", "valid", "test", "unsplit"}) {
        const auto it = counts.find(name);
        if (it == counts.end()) continue;
        char buf[96];
        std::snprintf(buf, sizeof buf, "%s %zu (%.1f%%)", name, it->second,
                      100.0 * static_cast<double>(it->second) / static_cast<double>(records.size()));
        if (!out.empty()) out += ", ";
        out += buf;
    }
    return out;
}

void stratified_split(std::vector<SampleRecord>& records, double train_fraction, double valid_fraction,
                      std::uint64_t seed, bool overwrite) {
    if (!(train_fraction >= 0 && valid_fraction >= 0 && train_fraction + valid_fraction <= 1.0 + 1e-12))
        throw ConfigurationError("split fractions must be non-negative and sum to at most 1");
    std::map<std::string, std::vector<std::size_t>> strata;
    for (std::size_t i = 0; i < records.size(); ++i) {
        if (records[i].split && !overwrite) continue;
        const auto& r = records[i];
        strata[r.family ? *r.family : (r.label ? "#malicious" : "#benign")].push_back(i);
    }
    nn::Rng rng(seed);
    for (auto& [name, idx] : strata) {
        for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[rng.below(i)]);
        const auto n = static_cast<double>(idx.size());
        const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * n));
        const auto n_valid = std::min(idx.size() - n_train, static_cast<std::size_t>(std::llround(valid_fraction * n)));
        for (std::size_t k = 0; k < idx.size(); ++k) {
            records[idx[k]].split = k < n_train ? Split::train : (k < n_train + n_valid ? Split::valid : Split::test);
        }
    }
}

std::vector<std::uint8_t> encode_static_vector(const std::vector<double>& values, std::string_view schema) {
    ByteWriter w;
    w.bytes("MFSV");
    w.u16(1);
    w.str(schema);
    w.u32(static_cast<std::uint32_t>(values.size()));
    for (double v : values) w.f32(static_cast<float>(v));
    return w.data();
}

std::vector<double> decode_static_vector(const std::vector<std::uint8_t>& bytes, std::string_view expected_schema,
                                         std::size_t expected_dim) {
    ByteReader r(bytes);
    if (r.bytes(4) != "MFSV") throw SchemaError("static vector: bad magic");
    if (r.u16() != 1) throw SchemaError("static vector: unsupported version");
    const std::string schema = r.str();
    if (!expected_schema.empty() && schema != expected_schema)
        throw SchemaError("static vector: schema '" + schema + "' differs from expected '" + std::string(expected_schema) + "'");
    const std::size_t dim = r.u32();
    if (dim != expected_dim)
        throw SchemaError("static vector: dimension " + std::to_string(dim) + ", expected " + std::to_string(expected_dim));
    std::vector<double> v(dim);
    for (auto& x : v) {
        x = r.f32();
        if (!std::isfinite(x)) throw SchemaError("static vector: non-finite value");
    }
    if (!r.at_end()) throw SchemaError("static vector: trailing bytes");
    return v;
}

}  // namespace mf::corpus
