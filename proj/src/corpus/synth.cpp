#include "malfuse/corpus/synth.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "malfuse/binary_io.hpp"
#include "malfuse/errors.hpp"
#include "malfuse/nn/tensor.hpp"

namespace mf::corpus {

using nlohmann::json;

namespace {

const std::vector<std::string> kPairFragments{"cachesync", "webhelper", "updsvc",   "telemetry",
                                              "syncagent", "crashpad",  "mediacore", "netbridge"};
const std::vector<std::string> kSignalFragments{"~x9q3", "$rcvr7", "0xdd1f", "wupd8k", "svch0st", "kb88z"};
const std::vector<std::string> kUsers{"alice", "bob", "jdoe", "admin", "m.smith", "kwong", "user01", "dev", "lab", "ops"};
const std::vector<std::string> kBases{
    "C:\\Users\\{u}\\AppData\\Local\\Temp", "C:\\Users\\{u}\\AppData\\Roaming", "C:\\Users\\{u}\\Downloads",
    "C:\\Users\\{u}\\Desktop",              "C:\\Program Files",                "C:\\Program Files (x86)",
    "C:\\ProgramData",                      "C:\\Windows\\Temp",                "%TEMP%",
    "D:\\Tools",                            "E:\\Setup"};
const std::vector<std::string> kVendors{"", "Contoso", "Fabrikam", "Northwind", "Litware", "Adatum", "Tailspin", "Proseware", "Wingtip"};
const std::vector<std::string> kStems{"setup", "update", "install", "launcher", "helper", "agent",
                                      "client", "service", "viewer", "tool", "sync", "report"};
const std::vector<std::string> kWords{"the", "data", "file", "version", "copyright", "microsoft", "windows", "error",
                                      "config", "user", "system", "value", "string", "default", "path", "module",
                                      "license", "resource", "manifest", "assembly", "runtime", "library"};
const std::vector<std::string> kErrorKinds{"unsupported_api", "invalid_read", "unhandled_exception", "timeout"};

const std::vector<std::string> kVerbs{"Create", "Open", "Read", "Write", "Close", "Query", "Set",
                                      "Get",    "Delete", "Enum", "Load", "Map",   "Flush", "Wait"};
const std::vector<std::string> kNouns{"File",  "Key",     "Value",   "Process", "Thread",    "Section", "Mutex",
                                      "Event", "Pipe",    "Module",  "Library", "Handle",    "Token",   "Service",
                                      "Window", "Heap",   "Object",  "Directory", "Timer",   "Semaphore"};
const std::vector<std::string> kSuffixes{"", "A", "W", "Ex", "ExW"};
const std::vector<std::string> kDlls{"kernel32", "ntdll", "advapi32", "user32"};

struct ApiName {
    std::string qualified;   // as written in reports
    std::string normalized;  // lowercase, no module
};

std::string lower(std::string s) {
    for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

// Fixed catalogue in a fixed pseudo-random rank order, independent of the seed.
std::vector<ApiName> api_catalogue(std::size_t n) {
    std::vector<ApiName> all;
    for (std::size_t v = 0; v < kVerbs.size(); ++v)
        for (std::size_t o = 0; o < kNouns.size(); ++o)
            for (const auto& s : kSuffixes) {
                const std::string name = kVerbs[v] + kNouns[o] + s;
                all.push_back({kDlls[o % kDlls.size()] + "." + name, lower(name)});
            }
    nn::Rng rng(0x5eedULL);
    for (std::size_t i = all.size(); i > 1; --i) std::swap(all[i - 1], all[rng.below(i)]);
    all.resize(n);
    return all;
}

std::size_t sample_cdf(const std::vector<double>& cdf, nn::Rng& rng) {
    const double u = rng.uniform() * cdf.back();
    return static_cast<std::size_t>(std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
}

template <class T>
const T& pick(const std::vector<T>& v, nn::Rng& rng) {
    return v[rng.below(v.size())];
}

struct Plan {
    Split split;
    int label = 0;
    std::string family;
    SampleTruth truth;
};

std::vector<std::uint8_t> make_static_bytes(nn::Rng& rng, const std::vector<double>& code_cdf, SampleTruth& truth) {
    const std::size_t size = 5120 + rng.below(4096);
    std::vector<std::uint8_t> out;
    out.reserve(size);
    out.push_back('M');
    out.push_back('Z');
    while (out.size() < 64) out.push_back(static_cast<std::uint8_t>(rng.below(4)));
    while (out.size() < size) {
        const auto kind = rng.below(3);
        if (kind == 0) {
            out.insert(out.end(), 256 + rng.below(768), 0);
        } else if (kind == 1) {
            const std::size_t len = 512 + rng.below(2560);
            std::string text;
            while (text.size() < len) text += pick(kWords, rng) + (rng.bernoulli(0.1) ? "\n" : " ");
            out.insert(out.end(), text.begin(), text.end());
        } else {
            const std::size_t len = 512 + rng.below(3584);
            for (std::size_t i = 0; i < len; ++i)
                out.push_back(static_cast<std::uint8_t>((sample_cdf(code_cdf, rng) * 37 + 11) % 256));
        }
    }
    out.resize(size);
    if (truth.has_signal(2)) {
        constexpr std::size_t kBlock = 4096;
        const std::size_t offset = 64 + rng.below(size - kBlock - 64);
        for (std::size_t i = 0; i < kBlock; ++i) out[offset + i] = static_cast<std::uint8_t>(rng.below(256));
        truth.static_signal_offset = offset;
    }
    return out;
}

std::string make_path(nn::Rng& rng, const PatternTables& p, SampleTruth& truth) {
    std::string base = pick(kBases, rng);
    if (const auto at = base.find("{u}"); at != std::string::npos) base.replace(at, 3, pick(kUsers, rng));
    std::string path = base + "\\";
    const std::string& vendor = pick(kVendors, rng);
    if (!vendor.empty()) path += vendor + "\\";
    truth.path_pair_offset = path.size();
    path += p.path_pairs[truth.path_pair] + "\\";
    if (truth.has_signal(0)) {
        truth.path_signal_offset = path.size();
        path += p.path_signals[truth.signal_pattern] + "\\";
    }
    path += pick(kStems, rng);
    if (rng.bernoulli(0.4)) path += std::to_string(rng.below(100));
    path += ".exe";
    return path;
}

// Pair trigrams use frequent calls from rank 10 on, so each name alone says
// nothing. Signal trigrams use mid-frequency calls further down the ranking.
std::size_t signal_rank(const SynthSpec& s) { return std::max(10 + 3 * s.pair_pool, s.api_names * 3 / 8); }

}  // namespace

// ------------------------------------------------------------------ spec

void SynthSpec::validate() const {
    auto unit = [](double v) { return v >= 0.0 && v <= 1.0; };
    if (!unit(rho)) throw GenerationError("rho must be in [0,1]");
    if (!unit(path_strength) || !unit(api_strength) || !unit(static_strength))
        throw GenerationError("signal strengths must be in [0,1]");
    if (!(malicious_fraction > 0.0 && malicious_fraction < 1.0))
        throw GenerationError("malicious fraction must be in (0,1)");
    for (auto [name, n] : {std::pair{"train", train}, {"valid", valid}, {"test", test}}) {
        const auto mal = static_cast<std::size_t>(std::llround(malicious_fraction * static_cast<double>(n)));
        if (mal < 1 || n - mal < 1)
            throw GenerationError(std::string(name) + " split needs at least one sample per class");
    }
    if (pair_pool < 2)
        throw GenerationError("pair pool of " + std::to_string(pair_pool) +
                              " cannot keep matched pairs exclusive (need at least 2)");
    if (pair_pool > kPairFragments.size())
        throw GenerationError("pair pool larger than the " + std::to_string(kPairFragments.size()) + " available fragments");
    if (signal_patterns < 1 || signal_patterns > kSignalFragments.size())
        throw GenerationError("signal patterns must be in [1, " + std::to_string(kSignalFragments.size()) + "]");
    const std::size_t needed = signal_rank(*this) + 3 * signal_patterns;
    const std::size_t available = kVerbs.size() * kNouns.size() * kSuffixes.size();
    if (api_names < needed || api_names > available)
        throw GenerationError("api_names must be in [" + std::to_string(needed) + ", " + std::to_string(available) + "]");
}

json SynthSpec::to_json() const {
    return {{"train", train},
            {"valid", valid},
            {"test", test},
            {"malicious_fraction", malicious_fraction},
            {"seed", seed},
            {"path_strength", path_strength},
            {"api_strength", api_strength},
            {"static_strength", static_strength},
            {"rho", rho},
            {"pair_pool", pair_pool},
            {"signal_patterns", signal_patterns},
            {"api_names", api_names},
            {"emulation_errors", emulation_errors}};
}

SynthSpec SynthSpec::from_json(const json& j) {
    SynthSpec s;
    static const std::vector<std::string> known{"train", "valid", "test", "malicious_fraction", "seed",
                                                "path_strength", "api_strength", "static_strength", "rho",
                                                "pair_pool", "signal_patterns", "api_names", "emulation_errors"};
    for (const auto& [k, v] : j.items())
        if (std::find(known.begin(), known.end(), k) == known.end())
            throw ConfigurationError("synth spec: unknown key '" + k + "'");
    s.train = j.value("train", s.train);
    s.valid = j.value("valid", s.valid);
    s.test = j.value("test", s.test);
    s.malicious_fraction = j.value("malicious_fraction", s.malicious_fraction);
    s.seed = j.value("seed", s.seed);
    s.path_strength = j.value("path_strength", s.path_strength);
    s.api_strength = j.value("api_strength", s.api_strength);
    s.static_strength = j.value("static_strength", s.static_strength);
    s.rho = j.value("rho", s.rho);
    s.pair_pool = j.value("pair_pool", s.pair_pool);
    s.signal_patterns = j.value("signal_patterns", s.signal_patterns);
    s.api_names = j.value("api_names", s.api_names);
    s.emulation_errors = j.value("emulation_errors", s.emulation_errors);
    return s;
}

const std::vector<std::pair<std::string, double>>& family_error_rates() {
    static const std::vector<std::pair<std::string, double>> rates{
        {"clean", 0.08},     {"backdoor", 0.12}, {"coinminer", 0.10}, {"dropper", 0.25},
        {"keylogger", 0.15}, {"ransomware", 0.20}, {"rat", 0.18},     {"trojan", 0.22}};
    return rates;
}

// ------------------------------------------------------------- generator

SynthCorpus generate_synthetic_corpus(const SynthSpec& spec) {
    spec.validate();
    SynthCorpus c;
    c.spec = spec;
    nn::Rng rng(spec.seed);

    const auto catalogue = api_catalogue(spec.api_names);
    auto& p = c.patterns;
    for (const auto& a : catalogue) p.api_vocabulary.push_back(a.normalized);
    p.path_pairs.assign(kPairFragments.begin(), kPairFragments.begin() + static_cast<std::ptrdiff_t>(spec.pair_pool));
    p.path_signals.assign(kSignalFragments.begin(),
                          kSignalFragments.begin() + static_cast<std::ptrdiff_t>(spec.signal_patterns));
    std::size_t rank = 10;
    std::vector<std::array<std::size_t, 3>> pair_ids, signal_ids;
    for (std::size_t k = 0; k < spec.pair_pool; ++k, rank += 3) pair_ids.push_back({rank, rank + 1, rank + 2});
    rank = signal_rank(spec);
    for (std::size_t k = 0; k < spec.signal_patterns; ++k, rank += 3) signal_ids.push_back({rank, rank + 1, rank + 2});
    for (const auto& t : pair_ids) p.api_pairs.push_back({catalogue[t[0]].normalized, catalogue[t[1]].normalized, catalogue[t[2]].normalized});
    for (const auto& t : signal_ids) p.api_signals.push_back({catalogue[t[0]].normalized, catalogue[t[1]].normalized, catalogue[t[2]].normalized});

    std::vector<double> zipf_cdf, code_cdf;
    double acc = 0.0;
    for (std::size_t r = 0; r < catalogue.size(); ++r) zipf_cdf.push_back(acc += 1.0 / std::pow(static_cast<double>(r + 1), 1.1));
    acc = 0.0;
    for (std::size_t r = 0; r < 48; ++r) code_cdf.push_back(acc += 1.0 / static_cast<double>(r + 1));

    const auto& rates = family_error_rates();
    std::vector<std::string> malicious_families;
    for (std::size_t f = 1; f < rates.size(); ++f) malicious_families.push_back(rates[f].first);

    // Sample plans, stratified per split.
    std::vector<Plan> plans;
    for (auto [split, n] : {std::pair{Split::train, spec.train}, {Split::valid, spec.valid}, {Split::test, spec.test}}) {
        const auto n_mal = static_cast<std::size_t>(std::llround(spec.malicious_fraction * static_cast<double>(n)));
        const auto n_cross = static_cast<std::size_t>(std::llround(spec.rho * static_cast<double>(n_mal)));
        std::vector<Plan> part;
        for (std::size_t k = 0; k < n; ++k) {
            Plan pl;
            pl.split = split;
            pl.label = k < n_mal ? 1 : 0;
            pl.family = pl.label ? malicious_families[k % malicious_families.size()] : kBenignFamily;
            pl.truth.cross = k < n_cross;
            part.push_back(std::move(pl));
        }
        for (std::size_t i = part.size(); i > 1; --i) std::swap(part[i - 1], part[rng.below(i)]);
        for (auto& pl : part) plans.push_back(std::move(pl));
    }

    const std::array<double, 3> strength{spec.path_strength, spec.api_strength, spec.static_strength};
    std::size_t serial = 0;
    for (auto& pl : plans) {
        SampleTruth& t = pl.truth;
        const std::size_t K = spec.pair_pool;
        t.path_pair = rng.below(K);
        t.api_pair = t.cross ? t.path_pair : (t.path_pair + 1 + rng.below(K - 1)) % K;
        if (pl.label == 1 && !t.cross) {
            const double u = rng.uniform();
            double offset = 0.0;
            for (unsigned m = 0; m < 3; ++m) {
                const double d = std::fmod(u - offset + 4.0, 1.0);
                if (strength[m] >= 1.0 || d < strength[m]) t.signals |= static_cast<std::uint8_t>(1u << m);
                offset += strength[m];
            }
            t.signal_pattern = rng.below(spec.signal_patterns);
        }
        double err_rate = 0.0;
        for (const auto& [fam, r] : rates)
            if (fam == pl.family) err_rate = r;
        t.emulation_error = spec.emulation_errors && rng.bernoulli(err_rate);

        char id[32];
        std::snprintf(id, sizeof id, "s%06zu", ++serial);
        SampleRecord rec;
        rec.sample_id = id;
        rec.label = pl.label;
        rec.family = pl.family;
        rec.split = pl.split;
        rec.filepath = make_path(rng, p, t);
        rec.report_path = std::string("reports/") + id + ".json";
        rec.pe_path = std::string("pe/") + id + ".bin";

        // Emulation report.
        json doc = {{"sample_id", rec.sample_id}, {"family", pl.family}, {"emulator", "synthetic"}};
        if (t.emulation_error) {
            doc["entry_points"] = json::array({{{"ep_type", "module_entry"}, {"apis", json::array()},
                                                {"error", {{"type", pick(kErrorKinds, rng)}}}}});
        } else {
            const std::size_t len = 120 + rng.below(181);
            std::vector<std::size_t> calls(len);
            for (auto& k : calls) k = sample_cdf(zipf_cdf, rng);
            std::vector<std::pair<std::size_t, const std::array<std::size_t, 3>*>> planted;
            t.api_pair_position = rng.below(118);
            planted.push_back({t.api_pair_position, &pair_ids[t.api_pair]});
            if (t.has_signal(1)) {
                std::size_t pos;
                do {
                    pos = rng.below(118);
                } while (pos + 3 > t.api_pair_position && pos < t.api_pair_position + 3);
                t.api_signal_position = pos;
                planted.push_back({pos, &signal_ids[t.signal_pattern]});
            }
            std::vector<bool> fixed(len, false);
            for (const auto& [pos, tri] : planted)
                for (std::size_t q = 0; q < 3; ++q) {
                    calls[pos + q] = (*tri)[q];
                    fixed[pos + q] = true;
                }
            // Remove accidental copies of any pattern trigram.
            auto is_pattern = [&](std::size_t k) {
                for (const auto* set : {&pair_ids, &signal_ids})
                    for (const auto& tri : *set)
                        if (calls[k] == tri[0] && calls[k + 1] == tri[1] && calls[k + 2] == tri[2]) return true;
                return false;
            };
            for (bool changed = true; changed;) {
                changed = false;
                for (std::size_t k = 0; k + 2 < len; ++k) {
                    bool planted_here = false;
                    for (const auto& pr : planted) planted_here = planted_here || pr.first == k;
                    if (planted_here || !is_pattern(k)) continue;
                    for (std::size_t q = 0; q < 3; ++q)
                        if (!fixed[k + q]) {
                            calls[k + q] = sample_cdf(zipf_cdf, rng);
                            break;
                        }
                    changed = true;
                }
            }
            json entry_points = json::array();
            const std::size_t cut = (len > 160 && rng.bernoulli(0.3)) ? 130 + rng.below(len - 150) : len;
            for (auto [lo, hi] : {std::pair{std::size_t{0}, cut}, {cut, len}}) {
                if (lo == hi) continue;
                json apis = json::array();
                for (std::size_t k = lo; k < hi; ++k) apis.push_back({{"api_name", catalogue[calls[k]].qualified}});
                entry_points.push_back({{"ep_type", lo == 0 ? "module_entry" : "thread"}, {"apis", apis}});
            }
            doc["entry_points"] = entry_points;
        }
        c.reports.push_back(doc.dump());
        c.pe_bytes.push_back(make_static_bytes(rng, code_cdf, t));
        c.records.push_back(std::move(rec));
        c.truth.push_back(t);
    }
    return c;
}

std::string format_truth(const SynthCorpus& c) {
    std::string out =
        "sample_id\tlabel\tfamily\tsplit\tcross\tpath_pair\tapi_pair\tsignals\tsignal_pattern\temulation_error\t"
        "path_pair_offset\tpath_signal_offset\tapi_pair_position\tapi_signal_position\tstatic_signal_offset\n";
    auto pos = [](std::size_t v) { return v == kNoPlacement ? std::string("-") : std::to_string(v); };
    for (std::size_t i = 0; i < c.records.size(); ++i) {
        const auto& r = c.records[i];
        const auto& t = c.truth[i];
        std::string sig;
        if (t.has_signal(0)) sig += "fp,";
        if (t.has_signal(1)) sig += "api,";
        if (t.has_signal(2)) sig += "emb,";
        if (sig.empty()) sig = "-";
        else sig.pop_back();
        out += r.sample_id + "\t" + std::to_string(r.label) + "\t" + *r.family + "\t" + std::string(to_string(*r.split)) +
               "\t" + (t.cross ? "1" : "0") + "\t" + std::to_string(t.path_pair) + "\t" + std::to_string(t.api_pair) +
               "\t" + sig + "\t" + std::to_string(t.signal_pattern) + "\t" + (t.emulation_error ? "1" : "0") + "\t" +
               pos(t.path_pair_offset) + "\t" + pos(t.path_signal_offset) + "\t" + pos(t.api_pair_position) + "\t" +
               pos(t.api_signal_position) + "\t" + pos(t.static_signal_offset) + "\n";
    }
    return out;
}

void write_corpus(const SynthCorpus& c, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir / "reports");
    std::filesystem::create_directories(dir / "pe");
    for (std::size_t i = 0; i < c.records.size(); ++i) {
        write_file_text(dir / *c.records[i].report_path, c.reports[i] + "\n");
        write_file_bytes(dir / *c.records[i].pe_path, c.pe_bytes[i]);
    }
    write_file_text(dir / "manifest.tsv", format_manifest(c.records));
    write_file_text(dir / "truth.tsv", format_truth(c));
    json meta = {{"spec", c.spec.to_json()},
                 {"path_pairs", c.patterns.path_pairs},
                 {"path_signals", c.patterns.path_signals},
                 {"api_pairs", c.patterns.api_pairs},
                 {"api_signals", c.patterns.api_signals}};
    write_file_text(dir / "synth.json", meta.dump(2) + "\n");
}

}  // namespace mf::corpus
