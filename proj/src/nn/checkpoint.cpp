#include "malfuse/nn/checkpoint.hpp"

#include <cstring>

#include "malfuse/binary_io.hpp"
#include "malfuse/errors.hpp"

namespace mf::nn {

std::vector<std::uint8_t> encode_checkpoint(const CheckpointData& data) {
    nlohmann::json manifest = data.manifest;
    nlohmann::json blocks = nlohmann::json::array();
    for (const auto& b : data.blocks)
        blocks.push_back({{"name", b.name}, {"rows", b.value.rows()}, {"cols", b.value.cols()}});
    manifest["blocks"] = std::move(blocks);
    const std::string text = manifest.dump();

    ByteWriter w;
    w.bytes(std::string_view(kCheckpointMagic, 4));
    w.u16(kCheckpointVersion);
    w.str(text);
    for (const auto& b : data.blocks) {
        for (Eigen::Index i = 0; i < b.value.size(); ++i) w.f32(static_cast<float>(b.value.data()[i]));
    }
    return w.data();
}

CheckpointData decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
    ByteReader r(bytes);
    if (bytes.size() < 4 || std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0)
        throw CompatibilityError("not a checkpoint: magic bytes differ from MFCK");
    r.bytes(4);
    const std::uint16_t version = r.u16();
    if (version != kCheckpointVersion) {
        throw CompatibilityError("checkpoint format version " + std::to_string(version) + " unsupported (expected " +
                                 std::to_string(kCheckpointVersion) + ")");
    }
    CheckpointData out;
    try {
        out.manifest = nlohmann::json::parse(r.str());
    } catch (const nlohmann::json::exception& e) {
        throw CompatibilityError(std::string("checkpoint manifest unreadable: ") + e.what());
    }
    if (!out.manifest.contains("blocks") || !out.manifest["blocks"].is_array())
        throw CompatibilityError("checkpoint manifest lacks a block table");
    for (const auto& desc : out.manifest["blocks"]) {
        TensorBlock b;
        b.name = desc.at("name").get<std::string>();
        const auto rows = desc.at("rows").get<Eigen::Index>();
        const auto cols = desc.at("cols").get<Eigen::Index>();
        if (rows < 0 || cols < 0) throw CompatibilityError("checkpoint block '" + b.name + "' has negative shape");
        b.value.resize(rows, cols);
        for (Eigen::Index i = 0; i < b.value.size(); ++i) b.value.data()[i] = static_cast<double>(r.f32());
        out.blocks.push_back(std::move(b));
    }
    if (!r.at_end()) throw CompatibilityError("checkpoint has trailing bytes after the last block");
    out.manifest.erase("blocks");
    return out;
}

void save_checkpoint_file(const std::filesystem::path& path, const CheckpointData& data) {
    write_file_bytes(path, encode_checkpoint(data));
}

CheckpointData load_checkpoint_file(const std::filesystem::path& path) {
    return decode_checkpoint(read_file_bytes(path));
}

}  // namespace mf::nn
