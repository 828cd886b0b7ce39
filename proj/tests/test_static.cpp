#include <cmath>
#include <map>
#include <vector>

#include "doctest.h"
#include "pe_fixture.hpp"
#include "malfuse/errors.hpp"
#include "malfuse/features/static_features.hpp"
#include "malfuse/nn/tensor.hpp"

using namespace mf;
using namespace mf::pe;

namespace {

std::vector<std::uint8_t> random_bytes(std::size_t n, std::uint64_t seed) {
    nn::Rng rng(seed);
    std::vector<std::uint8_t> out(n);
    for (auto& b : out) b = static_cast<std::uint8_t>(rng.below(256));
    return out;
}

// Independent oracle: per-window Shannon entropy of the high nibbles in
// bits, quantized to quarter-bit rows, accumulated per nibble value.
std::vector<double> entropy_histogram_oracle(const std::vector<std::uint8_t>& x, std::size_t window,
                                             std::size_t stride) {
    std::vector<double> grid(256, 0.0);
    if (x.empty()) return grid;
    std::vector<std::pair<std::size_t, std::size_t>> windows;
    if (x.size() < window) {
        windows.emplace_back(0, x.size());
    } else {
        for (std::size_t s = 0; s + window <= x.size(); s += stride) windows.emplace_back(s, window);
    }
    double total = 0.0;
    for (const auto& [start, len] : windows) {
        std::map<int, int> nib;
        for (std::size_t i = start; i < start + len; ++i) nib[x[i] / 16]++;
        double h = 0.0;
        for (const auto& [k, c] : nib) {
            const double p = static_cast<double>(c) / static_cast<double>(len);
            h += -p * std::log2(p);
        }
        int row = static_cast<int>(std::floor(h * 4.0));
        if (row > 15) row = 15;
        for (const auto& [k, c] : nib) {
            grid[static_cast<std::size_t>(row * 16 + k)] += c;
            total += c;
        }
    }
    for (auto& g : grid) g /= total;
    return grid;
}

std::uint64_t fnv_oracle(const std::string& s) {
    std::uint64_t h = 14695981039346656037ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

double block_abs_sum(const std::vector<double>& v, std::size_t from, std::size_t len) {
    double s = 0.0;
    for (std::size_t i = from; i < from + len; ++i) s += std::abs(v[i]);
    return s;
}

}  // namespace

TEST_CASE("byte histogram") {
    auto h = byte_histogram(std::vector<std::uint8_t>{0, 0});
    CHECK(h[0] == 1.0);
    CHECK(block_abs_sum(h, 1, 255) == 0.0);
    CHECK(block_abs_sum(byte_histogram({}), 0, 256) == 0.0);
    h = byte_histogram(std::vector<std::uint8_t>{0, 1, 2, 3});
    for (int b = 0; b < 4; ++b) CHECK(h[static_cast<std::size_t>(b)] == 0.25);
    CHECK(block_abs_sum(h, 4, 252) == 0.0);
}

TEST_CASE("byte histogram is invariant to repetition") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        auto x = random_bytes(777 + seed * 31, seed);
        auto xx = x;
        xx.insert(xx.end(), x.begin(), x.end());
        const auto a = byte_histogram(x);
        const auto b = byte_histogram(xx);
        for (std::size_t i = 0; i < 256; ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-15));
    }
}

TEST_CASE("entropy histogram: constant input lands in row 0") {
    const std::vector<std::uint8_t> x(5000, 0x41);
    const auto h = byte_entropy_histogram(x);
    CHECK(block_abs_sum(h, 0, 16) == doctest::Approx(1.0));
    CHECK(h[4] == doctest::Approx(1.0));
}

TEST_CASE("entropy histogram: short input is one window") {
    const std::vector<std::uint8_t> x{0x00, 0x10, 0x20, 0x30};
    // Four distinct nibbles: 2 bits of entropy, row 8.
    const auto h = byte_entropy_histogram(x);
    for (std::size_t k = 0; k < 4; ++k) CHECK(h[8 * 16 + k] == 0.25);
    CHECK(block_abs_sum(h, 0, 256) == doctest::Approx(1.0));
}

TEST_CASE("entropy histogram: random 64 KiB puts its mass in the top row") {
    const auto x = random_bytes(64 * 1024, 0);
    const auto h = byte_entropy_histogram(x);
    CHECK(block_abs_sum(h, 15 * 16, 16) >= 0.99);
}

TEST_CASE("entropy histogram agrees with the window oracle") {
    for (std::uint64_t seed = 0; seed < 12; ++seed) {
        nn::Rng rng(seed + 100);
        const std::size_t n = rng.below(9000);
        // Mix of skewed and uniform bytes so several rows are populated.
        std::vector<std::uint8_t> x(n);
        const std::size_t alphabet = 1 + rng.below(256);
        for (auto& b : x) b = static_cast<std::uint8_t>(rng.below(alphabet) * (256 / alphabet));
        const auto got = byte_entropy_histogram(x);
        const auto want = entropy_histogram_oracle(x, 2048, 1024);
        for (std::size_t i = 0; i < 256; ++i) CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));
    }
}

TEST_CASE("entropy histogram repeats cleanly on stride-periodic input") {
    const auto block = random_bytes(1024, 9);
    std::vector<std::uint8_t> x;
    for (int i = 0; i < 4; ++i) x.insert(x.end(), block.begin(), block.end());
    auto xx = x;
    xx.insert(xx.end(), x.begin(), x.end());
    const auto a = byte_entropy_histogram(x);
    const auto b = byte_entropy_histogram(xx);
    for (std::size_t i = 0; i < 256; ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-15));
}

TEST_CASE("parse_pe reads the hand-built fixture") {
    const auto bytes = testing::build_pe_fixture();
    const PeSummary pe = parse_pe(bytes);
    REQUIRE(pe.parse_ok);
    CHECK(pe.machine == testing::PeFixture::kMachine);
    CHECK(pe.section_count == testing::PeFixture::kSections);
    CHECK(pe.timestamp == testing::PeFixture::kTimestamp);
    CHECK(pe.entry_point == testing::PeFixture::kEntry);
    CHECK_FALSE(pe.pe32_plus);
    CHECK(pe.subsystem == 3);
    CHECK(pe.data_directory_count == 16);
    REQUIRE(pe.sections.size() == 2);
    CHECK(pe.sections[0].name == ".text");
    CHECK(pe.sections[1].name == ".idata");
    CHECK(pe.sections[0].raw_size == 0x200);
    CHECK(pe.overlay_size == 0);
    REQUIRE(pe.imports.size() == 1);
    CHECK(pe.imports[0] == testing::PeFixture::kImport);
    CHECK(pe.import_dll_count == 1);
}

TEST_CASE("parse_pe rejects malformed images without throwing") {
    CHECK_FALSE(parse_pe(std::vector<std::uint8_t>{'N', 'Z', 0, 0}).parse_ok);
    CHECK_FALSE(parse_pe({}).parse_ok);
    auto bytes = testing::build_pe_fixture();
    // Cut inside the optional header.
    bytes.resize(testing::PeFixture::kOptionalHeaderOffset + 40);
    const PeSummary pe = parse_pe(bytes);
    CHECK_FALSE(pe.parse_ok);
    CHECK(pe.machine == 0);
    CHECK(pe.sections.empty());

    const auto v = featurize_static(bytes);
    CHECK(block_abs_sum(v.values, 0, 256) == doctest::Approx(1.0));
    CHECK(block_abs_sum(v.values, 256, 256) == doctest::Approx(1.0));
    CHECK(block_abs_sum(v.values, 512, 256) == 0.0);
}

TEST_CASE("shannon entropy") {
    CHECK(shannon_entropy({}) == 0.0);
    CHECK(shannon_entropy(std::vector<std::uint8_t>{7, 7, 7}) == 0.0);
    CHECK(shannon_entropy(std::vector<std::uint8_t>{0, 1}) == doctest::Approx(1.0));
    std::vector<std::uint8_t> all(256);
    for (int i = 0; i < 256; ++i) all[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(i);
    CHECK(shannon_entropy(all) == doctest::Approx(8.0));
}

TEST_CASE("featurize_static layout and determinism") {
    const StaticSchema schema;
    CHECK(schema.dim() == 768);
    const auto bytes = testing::build_pe_fixture();
    const auto a = featurize_static(bytes);
    const auto b = featurize_static(bytes);
    CHECK(a.values.size() == 768);
    CHECK(a.values == b.values);
    CHECK(a.schema_version == kStaticSchemaVersion);
    CHECK(a.values[512] == 1.0);  // header block starts with parse_ok
}

TEST_CASE("non-PE bytes populate only the byte blocks") {
    const auto v = featurize_static(random_bytes(3000, 4));
    CHECK(block_abs_sum(v.values, 0, 256) == doctest::Approx(1.0));
    CHECK(block_abs_sum(v.values, 256, 256) == doctest::Approx(1.0));
    CHECK(block_abs_sum(v.values, 512, 256) == 0.0);
}

TEST_CASE("fixture import hashes into exactly one bin") {
    const auto v = featurize_static(testing::build_pe_fixture());
    const std::uint64_t h = fnv_oracle(testing::PeFixture::kImport);
    const std::size_t bin = h % 128;
    const double sign = (h >> 63) ? 1.0 : -1.0;
    std::size_t nonzero = 0;
    for (std::size_t i = 0; i < 128; ++i) {
        if (v.values[576 + i] != 0.0) {
            ++nonzero;
            CHECK(i == bin);
            CHECK(v.values[576 + i] == sign);
        }
    }
    CHECK(nonzero == 1);
}

TEST_CASE("byte blocks have fixed size in the schema") {
    StaticSchema s;
    s.byte_histogram = 128;
    CHECK_THROWS_AS(featurize_static({}, s), ConfigurationError);
    StaticSchema small;
    small.header = 16;
    small.imports = 32;
    small.sections = 8;
    CHECK(featurize_static(testing::build_pe_fixture(), small).values.size() == small.dim());
}

TEST_CASE("featurize_static is total on corrupted images") {
    const auto base = testing::build_pe_fixture();
    nn::Rng rng(11);
    for (int trial = 0; trial < 600; ++trial) {
        std::vector<std::uint8_t> x = base;
        if (trial % 3 == 0) {
            x.resize(rng.below(base.size() + 1));
        } else {
            const std::size_t flips = 1 + rng.below(16);
            for (std::size_t f = 0; f < flips; ++f) x[rng.below(x.size())] = static_cast<std::uint8_t>(rng.below(256));
        }
        const auto v = featurize_static(x);
        REQUIRE(v.values.size() == 768);
        for (double d : v.values) REQUIRE(std::isfinite(d));
    }
}
