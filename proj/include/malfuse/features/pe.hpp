#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace mf::pe {

struct SectionInfo {
    std::string name;
    std::uint32_t virtual_size = 0;
    std::uint32_t virtual_address = 0;
    std::uint32_t raw_size = 0;
    std::uint32_t raw_offset = 0;
    std::uint32_t characteristics = 0;
    double entropy = 0.0;  // bits per byte over the raw data present in the file
};

/// Header and section facts pulled from a PE image. When parse_ok is
/// false every other field keeps its zero value.
struct PeSummary {
    bool parse_ok = false;
    bool pe32_plus = false;
    std::uint16_t machine = 0;
    std::uint32_t timestamp = 0;
    std::uint16_t section_count = 0;
    std::uint16_t coff_characteristics = 0;
    std::uint32_t entry_point = 0;
    std::uint32_t size_of_code = 0;
    std::uint32_t size_of_initialized_data = 0;
    std::uint32_t size_of_uninitialized_data = 0;
    std::uint32_t size_of_image = 0;
    std::uint32_t size_of_headers = 0;
    std::uint32_t checksum = 0;
    std::uint16_t subsystem = 0;
    std::uint16_t dll_characteristics = 0;
    std::uint8_t linker_major = 0;
    std::uint16_t os_major = 0;
    std::uint16_t subsystem_major = 0;
    std::uint64_t stack_reserve = 0;
    std::uint64_t heap_reserve = 0;
    std::uint32_t data_directory_count = 0;
    std::vector<std::uint32_t> data_directory_sizes;  // size field of each directory
    std::uint64_t file_size = 0;
    std::uint64_t overlay_size = 0;
    std::vector<SectionInfo> sections;
    std::vector<std::string> imports;  // lowercase "dll:function" or "dll:#ordinal"
    std::size_t import_dll_count = 0;
};

/// Never throws on malformed input; malformed images yield parse_ok=false.
PeSummary parse_pe(std::span<const std::uint8_t> bytes);

double shannon_entropy(std::span<const std::uint8_t> bytes);

}  // namespace mf::pe
