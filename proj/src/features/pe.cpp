#include "malfuse/features/pe.hpp"

#include <array>
#include <cmath>
#include <optional>

namespace mf::pe {

namespace {

constexpr std::size_t kMaxSections = 96;
constexpr std::size_t kMaxImportDlls = 1024;
constexpr std::size_t kMaxImportsPerDll = 4096;
constexpr std::size_t kMaxNameLength = 256;

/// Bounds-checked little-endian view; every accessor reports failure
/// instead of reading past the end.
class View {
public:
    explicit View(std::span<const std::uint8_t> b) : b_(b) {}

    std::size_t size() const { return b_.size(); }

    std::optional<std::uint64_t> le(std::size_t off, int n) const {
        if (off > b_.size() || b_.size() - off < static_cast<std::size_t>(n)) return std::nullopt;
        std::uint64_t v = 0;
        for (int i = 0; i < n; ++i) v |= std::uint64_t{b_[off + static_cast<std::size_t>(i)]} << (8 * i);
        return v;
    }
    std::optional<std::uint16_t> u16(std::size_t off) const {
        auto v = le(off, 2);
        return v ? std::optional<std::uint16_t>(static_cast<std::uint16_t>(*v)) : std::nullopt;
    }
    std::optional<std::uint32_t> u32(std::size_t off) const {
        auto v = le(off, 4);
        return v ? std::optional<std::uint32_t>(static_cast<std::uint32_t>(*v)) : std::nullopt;
    }
    std::optional<std::uint64_t> u64(std::size_t off) const { return le(off, 8); }

    std::optional<std::string> cstr(std::size_t off, std::size_t max_len) const {
        std::string s;
        for (std::size_t i = 0; i < max_len; ++i) {
            if (off + i >= b_.size()) return std::nullopt;
            const auto c = static_cast<char>(b_[off + i]);
            if (c == '\0') return s;
            s += c;
        }
        return s;
    }

    std::span<const std::uint8_t> slice(std::size_t off, std::size_t len) const {
        if (off >= b_.size()) return {};
        return b_.subspan(off, std::min(len, b_.size() - off));
    }

private:
    std::span<const std::uint8_t> b_;
};

std::string lower(std::string s) {
    for (auto& c : s)
        if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    return s;
}

std::optional<std::size_t> rva_to_offset(const std::vector<SectionInfo>& sections, std::uint32_t rva) {
    for (const auto& s : sections) {
        const std::uint64_t span = std::max(s.virtual_size, s.raw_size);
        if (rva >= s.virtual_address && rva < std::uint64_t{s.virtual_address} + span) {
            const std::uint64_t delta = rva - s.virtual_address;
            if (delta >= s.raw_size) return std::nullopt;
            return static_cast<std::size_t>(s.raw_offset + delta);
        }
    }
    return std::nullopt;
}

// Best effort: stops at the first unreadable structure and keeps what was
// collected so far.
void parse_imports(const View& v, PeSummary& pe, std::uint32_t import_rva) {
    auto desc_off = rva_to_offset(pe.sections, import_rva);
    if (!desc_off) return;
    for (std::size_t d = 0; d < kMaxImportDlls; ++d) {
        const std::size_t off = *desc_off + d * 20;
        const auto original_thunk = v.u32(off);
        const auto name_rva = v.u32(off + 12);
        const auto first_thunk = v.u32(off + 16);
        if (!original_thunk || !name_rva || !first_thunk) return;
        if (*original_thunk == 0 && *name_rva == 0 && *first_thunk == 0) return;
        const auto name_off = rva_to_offset(pe.sections, *name_rva);
        if (!name_off) return;
        const auto dll = v.cstr(*name_off, kMaxNameLength);
        if (!dll) return;
        ++pe.import_dll_count;
        const std::string dll_name = lower(*dll);

        const std::uint32_t thunk_rva = *original_thunk ? *original_thunk : *first_thunk;
        const auto thunk_off = rva_to_offset(pe.sections, thunk_rva);
        if (!thunk_off) continue;
        const std::size_t width = pe.pe32_plus ? 8 : 4;
        const std::uint64_t ordinal_flag = pe.pe32_plus ? (1ULL << 63) : (1ULL << 31);
        for (std::size_t k = 0; k < kMaxImportsPerDll; ++k) {
            const auto thunk = v.le(*thunk_off + k * width, static_cast<int>(width));
            if (!thunk || *thunk == 0) break;
            if (*thunk & ordinal_flag) {
                pe.imports.push_back(dll_name + ":#" + std::to_string(*thunk & 0xffff));
                continue;
            }
            const auto hint_off = rva_to_offset(pe.sections, static_cast<std::uint32_t>(*thunk & 0x7fffffff));
            if (!hint_off) break;
            const auto fn = v.cstr(*hint_off + 2, kMaxNameLength);
            if (!fn) break;
            pe.imports.push_back(dll_name + ":" + lower(*fn));
        }
    }
}

}  // namespace

double shannon_entropy(std::span<const std::uint8_t> bytes) {
    if (bytes.empty()) return 0.0;
    std::array<std::size_t, 256> counts{};
    for (auto b : bytes) ++counts[b];
    double h = 0.0;
    const auto n = static_cast<double>(bytes.size());
    for (auto c : counts) {
        if (c == 0) continue;
        const double p = static_cast<double>(c) / n;
        h -= p * std::log2(p);
    }
    return h;
}

PeSummary parse_pe(std::span<const std::uint8_t> bytes) {
    const View v(bytes);
    PeSummary pe;
    const PeSummary failed;

    if (bytes.size() < 64 || bytes[0] != 'M' || bytes[1] != 'Z') return failed;
    const auto lfanew = v.u32(0x3c);
    if (!lfanew || *lfanew > bytes.size()) return failed;
    const auto sig = v.u32(*lfanew);
    if (!sig || *sig != 0x00004550) return failed;

    const std::size_t coff = *lfanew + 4;
    const auto machine = v.u16(coff);
    const auto nsections = v.u16(coff + 2);
    const auto timestamp = v.u32(coff + 4);
    const auto opt_size = v.u16(coff + 16);
    const auto characteristics = v.u16(coff + 18);
    if (!machine || !nsections || !timestamp || !opt_size || !characteristics) return failed;
    if (*nsections > kMaxSections) return failed;
    pe.machine = *machine;
    pe.section_count = *nsections;
    pe.timestamp = *timestamp;
    pe.coff_characteristics = *characteristics;

    const std::size_t opt = coff + 20;
    const auto magic = v.u16(opt);
    if (!magic || (*magic != 0x10b && *magic != 0x20b)) return failed;
    pe.pe32_plus = *magic == 0x20b;
    // Fixed part of the optional header: 96 bytes (PE32) or 112 (PE32+).
    const std::size_t fixed = pe.pe32_plus ? 112 : 96;
    if (*opt_size < fixed || !v.le(opt, static_cast<int>(fixed)).has_value() || opt + fixed > bytes.size())
        return failed;

    pe.linker_major = bytes[opt + 2];
    pe.size_of_code = *v.u32(opt + 4);
    pe.size_of_initialized_data = *v.u32(opt + 8);
    pe.size_of_uninitialized_data = *v.u32(opt + 12);
    pe.entry_point = *v.u32(opt + 16);
    pe.os_major = *v.u16(opt + 40);
    pe.subsystem_major = *v.u16(opt + 48);
    pe.size_of_image = *v.u32(opt + 56);
    pe.size_of_headers = *v.u32(opt + 60);
    pe.checksum = *v.u32(opt + 64);
    pe.subsystem = *v.u16(opt + 68);
    pe.dll_characteristics = *v.u16(opt + 70);
    if (pe.pe32_plus) {
        pe.stack_reserve = *v.u64(opt + 72);
        pe.heap_reserve = *v.u64(opt + 88);
    } else {
        pe.stack_reserve = *v.u32(opt + 72);
        pe.heap_reserve = *v.u32(opt + 80);
    }
    const std::uint32_t ndirs = *v.u32(opt + fixed - 4);
    const std::size_t dirs_fit = (*opt_size - fixed) / 8;
    pe.data_directory_count = static_cast<std::uint32_t>(std::min<std::size_t>({ndirs, dirs_fit, 16}));
    std::uint32_t import_rva = 0;
    for (std::uint32_t d = 0; d < pe.data_directory_count; ++d) {
        const auto rva = v.u32(opt + fixed + d * 8);
        const auto size = v.u32(opt + fixed + d * 8 + 4);
        if (!rva || !size) return failed;
        pe.data_directory_sizes.push_back(*size);
        if (d == 1) import_rva = *rva;
    }

    const std::size_t table = opt + *opt_size;
    std::uint64_t raw_end = 0;
    for (std::size_t s = 0; s < pe.section_count; ++s) {
        const std::size_t off = table + s * 40;
        if (!v.le(off, 8) || !v.u32(off + 36)) return failed;
        SectionInfo info;
        const auto name_bytes = v.slice(off, 8);
        for (auto c : name_bytes) {
            if (c == 0) break;
            info.name += static_cast<char>(c);
        }
        info.name = lower(info.name);
        info.virtual_size = *v.u32(off + 8);
        info.virtual_address = *v.u32(off + 12);
        info.raw_size = *v.u32(off + 16);
        info.raw_offset = *v.u32(off + 20);
        info.characteristics = *v.u32(off + 36);
        info.entropy = shannon_entropy(v.slice(info.raw_offset, info.raw_size));
        raw_end = std::max<std::uint64_t>(raw_end, std::uint64_t{info.raw_offset} + info.raw_size);
        pe.sections.push_back(std::move(info));
    }

    pe.file_size = bytes.size();
    pe.overlay_size = raw_end < bytes.size() ? bytes.size() - raw_end : 0;
    pe.parse_ok = true;
    if (import_rva != 0) parse_imports(v, pe, import_rva);
    return pe;
}

}  // namespace mf::pe
