#include "malfuse/features/path.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include "malfuse/errors.hpp"

namespace mf::path {

namespace {

char ascii_lower(char c) { return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c; }

std::string canonical_case(std::string_view s) {
    std::string out(s);
    for (auto& c : out) {
        c = ascii_lower(c);
        if (c == '/') c = '\\';
    }
    return out;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

// Profile directories that are not personal user names.
bool is_system_profile(std::string_view name) {
    return name == "public" || name == "default" || name == "default user" || name == "all users" ||
           name == "[user]";
}

std::string expand_variables(const std::string& s, const EnvMap& env) {
    std::string out;
    out.reserve(s.size());
    std::size_t i = 0;
    while (i < s.size()) {
        if (s[i] == '%') {
            const auto close = s.find('%', i + 1);
            if (close != std::string::npos) {
                if (const auto* repl = env.find(std::string_view(s).substr(i + 1, close - i - 1))) {
                    out += *repl;
                    i = close + 1;
                    continue;
                }
            }
        }
        out += s[i++];
    }
    return out;
}

std::string replace_user_names(std::string s) {
    for (std::string_view marker : {std::string_view("\\users\\"), std::string_view("\\documents and settings\\")}) {
        std::size_t pos = 0;
        while ((pos = s.find(marker, pos)) != std::string::npos) {
            const std::size_t start = pos + marker.size();
            std::size_t end = s.find('\\', start);
            if (end == std::string::npos) end = s.size();
            const std::string_view name = std::string_view(s).substr(start, end - start);
            if (!name.empty() && !is_system_profile(name)) s.replace(start, end - start, "[user]");
            pos = start;
        }
    }
    return s;
}

}  // namespace

// ------------------------------------------------------------------- EnvMap

EnvMap EnvMap::defaults() {
    EnvMap m;
    const std::pair<const char*, const char*> table[] = {
        {"windir", "[drive]\\windows"},
        {"systemroot", "[drive]\\windows"},
        {"systemdrive", "[drive]"},
        {"homedrive", "[drive]"},
        {"homepath", "\\users\\[user]"},
        {"userprofile", "[drive]\\users\\[user]"},
        {"username", "[user]"},
        {"temp", "[drive]\\users\\[user]\\appdata\\local\\temp"},
        {"tmp", "[drive]\\users\\[user]\\appdata\\local\\temp"},
        {"appdata", "[drive]\\users\\[user]\\appdata\\roaming"},
        {"localappdata", "[drive]\\users\\[user]\\appdata\\local"},
        {"onedrive", "[drive]\\users\\[user]\\onedrive"},
        {"public", "[drive]\\users\\public"},
        {"allusersprofile", "[drive]\\programdata"},
        {"programdata", "[drive]\\programdata"},
        {"programfiles", "[drive]\\program files"},
        {"programfiles(x86)", "[drive]\\program files (x86)"},
        {"programw6432", "[drive]\\program files"},
        {"commonprogramfiles", "[drive]\\program files\\common files"},
        {"commonprogramfiles(x86)", "[drive]\\program files (x86)\\common files"},
        {"commonprogramw6432", "[drive]\\program files\\common files"},
        {"comspec", "[drive]\\windows\\system32\\cmd.exe"},
        {"driverdata", "[drive]\\windows\\system32\\drivers\\driverdata"},
        {"system", "[drive]\\windows\\system32"},
        {"system32", "[drive]\\windows\\system32"},
        {"syswow64", "[drive]\\windows\\syswow64"},
        {"startup", "[drive]\\users\\[user]\\appdata\\roaming\\microsoft\\windows\\start menu\\programs\\startup"},
        {"userdesktop", "[drive]\\users\\[user]\\desktop"},
        {"downloads", "[drive]\\users\\[user]\\downloads"},
        {"psmodulepath", "[drive]\\windows\\system32\\windowspowershell\\v1.0\\modules"},
    };
    for (const auto& [k, v] : table) m.set(k, v);
    return m;
}

EnvMap EnvMap::parse(std::string_view text, const EnvMap& base) {
    EnvMap m = base;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        auto nl = text.find('\n', pos);
        if (nl == std::string_view::npos) nl = text.size();
        std::string_view line = text.substr(pos, nl - pos);
        pos = nl + 1;
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string_view::npos || eq == 0) {
            throw InputError("env map line " + std::to_string(line_no) + ": expected variable=replacement");
        }
        m.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return m;
}

void EnvMap::set(std::string_view variable, std::string_view replacement) {
    std::string key = canonical_case(variable);
    if (key.size() >= 2 && key.front() == '%' && key.back() == '%') key = key.substr(1, key.size() - 2);
    entries_[key] = canonical_case(replacement);
}

const std::string* EnvMap::find(std::string_view variable) const {
    const auto it = entries_.find(canonical_case(variable));
    return it == entries_.end() ? nullptr : &it->second;
}

std::string EnvMap::to_text() const {
    std::string out;
    for (const auto& [k, v] : entries_) out += k + "=" + v + "\n";
    return out;
}

// ---------------------------------------------------------- normalize_path

NormalizedPath normalize_path(std::string_view raw, const EnvMap& env) {
    if (raw.empty()) throw InputError("normalize_path: empty path");
    std::string s = canonical_case(raw);

    // Win32 device-namespace prefixes.
    if (s.starts_with("\\\\?\\unc\\")) {
        s = "\\\\" + s.substr(8);
    } else if (s.starts_with("\\\\?\\") || s.starts_with("\\??\\")) {
        s = s.substr(4);
    }

    s = expand_variables(s, env);

    if (s.size() >= 2 && s[0] >= 'a' && s[0] <= 'z' && s[1] == ':' && (s.size() == 2 || s[2] == '\\')) {
        s = "[drive]" + s.substr(2);
    } else if (s.starts_with("\\\\")) {
        s = "[net]\\" + s.substr(2);
    }

    return {replace_user_names(std::move(s))};
}

// ---------------------------------------------------------------- ByteVocab

ByteVocab::ByteVocab() { table_.fill(kRareId); }

ByteVocab build_byte_vocab(std::span<const NormalizedPath> corpus, std::size_t size) {
    if (corpus.empty()) throw InputError("build_byte_vocab: empty corpus");
    if (size == 0) throw InputError("build_byte_vocab: vocabulary size must be >= 1");
    std::array<std::uint64_t, 256> counts{};
    for (const auto& p : corpus)
        for (unsigned char c : p.text) ++counts[c];

    std::vector<std::uint8_t> order;
    for (int b = 0; b < 256; ++b)
        if (counts[static_cast<std::size_t>(b)] > 0) order.push_back(static_cast<std::uint8_t>(b));
    std::stable_sort(order.begin(), order.end(), [&](std::uint8_t a, std::uint8_t b) { return counts[a] > counts[b]; });
    if (order.size() > size) order.resize(size);

    ByteVocab v;
    v.capacity_ = size;
    v.ordered_ = order;
    for (std::size_t i = 0; i < order.size(); ++i) v.table_[order[i]] = static_cast<std::int32_t>(i + 2);
    return v;
}

std::string ByteVocab::to_text() const {
    std::string out = "mf-byte-vocab\t1\tsize=" + std::to_string(capacity_) + "\tpad=0\trare=1\n";
    char buf[32];
    for (std::size_t i = 0; i < ordered_.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%02x\t%zu\n", ordered_[i], i + 2);
        out += buf;
    }
    return out;
}

ByteVocab ByteVocab::from_text(std::string_view text) {
    std::istringstream in{std::string(text)};
    std::string header;
    std::getline(in, header);
    std::size_t cap = 0;
    if (!header.starts_with("mf-byte-vocab\t1\t") || std::sscanf(header.c_str(), "mf-byte-vocab\t1\tsize=%zu", &cap) != 1)
        throw CompatibilityError("byte vocab: unrecognized header '" + header + "'");
    ByteVocab v;
    v.capacity_ = cap;
    std::string line;
    std::size_t expected = 2;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        unsigned byte = 0;
        std::size_t id = 0;
        if (std::sscanf(line.c_str(), "%x\t%zu", &byte, &id) != 2 || byte > 255 || id != expected || id > cap + 1)
            throw CompatibilityError("byte vocab: malformed entry '" + line + "'");
        v.table_[byte] = static_cast<std::int32_t>(id);
        v.ordered_.push_back(static_cast<std::uint8_t>(byte));
        ++expected;
    }
    return v;
}

TokenSequence encode_path(const NormalizedPath& p, const ByteVocab& vocab, std::size_t n) {
    if (n == 0) throw InputError("encode_path: sequence length must be >= 1");
    TokenSequence seq;
    seq.true_length = p.text.size();
    seq.ids.assign(n, kPadId);
    const std::size_t keep = std::min(n, p.text.size());
    for (std::size_t i = 0; i < keep; ++i) seq.ids[i] = vocab.id(static_cast<std::uint8_t>(p.text[i]));
    return seq;
}

}  // namespace mf::path
