#include <string>
#include <vector>

#include "doctest.h"
#include "malfuse/errors.hpp"
#include "malfuse/features/path.hpp"
#include "malfuse/nn/tensor.hpp"

using namespace mf;
using namespace mf::path;

TEST_CASE("normalize_path: reference listings") {
    CHECK(normalize_path("C:\\users\\bob\\Desktop\\04-CA\\8853.vbs").text ==
          "[drive]\\users\\[user]\\desktop\\04-ca\\8853.vbs");
    CHECK(normalize_path("\\\\company\\priv\\timesheets\\april2021.xlsm").text ==
          "[net]\\company\\priv\\timesheets\\april2021.xlsm");
    CHECK(normalize_path("[drive]\\x.exe").text == "[drive]\\x.exe");
}

TEST_CASE("normalize_path: separators, prefixes and variables") {
    CHECK(normalize_path("D:/Tools/App.EXE").text == "[drive]\\tools\\app.exe");
    CHECK(normalize_path("\\\\?\\C:\\Windows\\notepad.exe").text == "[drive]\\windows\\notepad.exe");
    CHECK(normalize_path("\\??\\c:\\a.dll").text == "[drive]\\a.dll");
    CHECK(normalize_path("\\\\?\\UNC\\srv\\share\\f.txt").text == "[net]\\srv\\share\\f.txt");
    CHECK(normalize_path("%WINDIR%\\system32\\cmd.exe").text == "[drive]\\windows\\system32\\cmd.exe");
    CHECK(normalize_path("%temp%\\x.tmp").text == "[drive]\\users\\[user]\\appdata\\local\\temp\\x.tmp");
    CHECK(normalize_path("%nosuchvar%\\x").text == "%nosuchvar%\\x");
    CHECK(normalize_path("c:\\users\\public\\a.exe").text == "[drive]\\users\\public\\a.exe");
    CHECK(normalize_path("c:\\documents and settings\\alice\\x").text ==
          "[drive]\\documents and settings\\[user]\\x");
    CHECK(normalize_path("relative\\file.txt").text == "relative\\file.txt");
    CHECK_THROWS_AS(normalize_path(""), InputError);
}

TEST_CASE("env map file overrides defaults") {
    const EnvMap env = EnvMap::parse("# site overrides\nTEMP = [drive]\\tmp\n\n%tools%=[drive]\\tools\n");
    CHECK(normalize_path("%temp%\\a", env).text == "[drive]\\tmp\\a");
    CHECK(normalize_path("%TOOLS%\\b", env).text == "[drive]\\tools\\b");
    CHECK(EnvMap::defaults().size() >= 25);
    try {
        EnvMap::parse("ok=1\nbroken line\n");
        FAIL("expected InputError");
    } catch (const InputError& e) {
        CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }
}

TEST_CASE("normalize_path is idempotent") {
    nn::Rng rng(5);
    const std::vector<std::string> parts{"C:", "c:", "\\\\host", "%appdata%", "%windir%", "users",
                                         "Bob",  "AppData", "Program Files", "x.exe", "/", "\\",
                                         "%temp%", "documents and settings", "public", "[drive]", "..", "d:"};
    for (int trial = 0; trial < 2000; ++trial) {
        std::string raw;
        const std::size_t n = 1 + rng.below(7);
        for (std::size_t i = 0; i < n; ++i) {
            raw += parts[rng.below(parts.size())];
            if (rng.bernoulli(0.7)) raw += rng.bernoulli(0.5) ? "\\" : "/";
        }
        const NormalizedPath once = normalize_path(raw);
        CAPTURE(raw);
        CHECK(normalize_path(once.text) == once);
    }
}

TEST_CASE("no held-out user name survives normalization") {
    const std::vector<std::string> names{"alice", "Bob", "j.smith", "Admin-PC", "svc_backup", "ZED", "mary ann"};
    for (const auto& name : names) {
        for (const std::string& prefix : {"C:\\Users\\", "c:/users/", "\\\\fs01\\users\\", "E:\\Documents and Settings\\"}) {
            const std::string raw = prefix + name + "\\Downloads\\" + "inv.pdf.exe";
            const auto out = normalize_path(raw).text;
            std::string lower = name;
            for (auto& c : lower) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
            CAPTURE(raw);
            CHECK(out.find(lower) == std::string::npos);
            CHECK(out.find("[user]") != std::string::npos);
        }
    }
}

TEST_CASE("byte vocab: frequency order with byte-value tie break") {
    const std::vector<NormalizedPath> c1{{"aab"}};
    const ByteVocab v1 = build_byte_vocab(c1, 2);
    CHECK(v1.id('a') == 2);
    CHECK(v1.id('b') == 3);
    CHECK(v1.id('z') == kRareId);
    CHECK(v1.size() == 4);

    const std::vector<NormalizedPath> c2{{"ab"}, {"ba"}};
    const ByteVocab v2 = build_byte_vocab(c2, 1);
    CHECK(v2.id('a') == 2);
    CHECK(v2.id('b') == kRareId);

    CHECK_THROWS_AS(build_byte_vocab(std::vector<NormalizedPath>{}, 5), InputError);
    CHECK_THROWS_AS(build_byte_vocab(c1, 0), InputError);
}

TEST_CASE("byte vocab covers every training byte when large enough") {
    const std::vector<NormalizedPath> corpus{normalize_path("C:\\Windows\\x.exe"), normalize_path("%temp%\\é.bin")};
    const ByteVocab v = build_byte_vocab(corpus, 150);
    for (const auto& p : corpus)
        for (unsigned char c : p.text) CHECK(v.id(c) >= 2);
}

TEST_CASE("byte vocab text format round-trips") {
    const std::vector<NormalizedPath> corpus{normalize_path("C:\\Users\\z\\a.txt")};
    const ByteVocab v = build_byte_vocab(corpus, 150);
    const std::string text = v.to_text();
    CHECK(text.rfind("mf-byte-vocab\t1\tsize=150\tpad=0\trare=1\n", 0) == 0);
    CHECK(ByteVocab::from_text(text) == v);
    CHECK_THROWS_AS(ByteVocab::from_text("bogus\n"), CompatibilityError);
    CHECK_THROWS_AS(ByteVocab::from_text("mf-byte-vocab\t1\tsize=2\tpad=0\trare=1\n61\t3\n"), CompatibilityError);
}

TEST_CASE("encode_path pads, maps rare bytes and truncates") {
    const std::vector<NormalizedPath> corpus{{"aab"}};
    const ByteVocab v = build_byte_vocab(corpus, 2);
    auto s = encode_path({"ab"}, v, 4);
    CHECK(s.ids == std::vector<std::int32_t>{2, 3, 0, 0});
    CHECK(s.true_length == 2);
    CHECK(encode_path({"abc"}, v, 4).ids == std::vector<std::int32_t>{2, 3, 1, 0});
    s = encode_path({"abab"}, v, 2);
    CHECK(s.ids == std::vector<std::int32_t>{2, 3});
    CHECK(s.true_length == 4);
    CHECK_THROWS_AS(encode_path({"a"}, v, 0), InputError);
}

TEST_CASE("encode_path length and id range properties") {
    nn::Rng rng(8);
    std::vector<NormalizedPath> corpus;
    for (int i = 0; i < 50; ++i) {
        std::string s;
        const std::size_t len = rng.below(300);
        for (std::size_t k = 0; k < len; ++k) s += static_cast<char>(32 + rng.below(95));
        corpus.push_back({s});
    }
    corpus.push_back({"x"});
    const ByteVocab v = build_byte_vocab(corpus, 40);
    for (const auto& p : corpus) {
        const auto a = encode_path(p, v, 100);
        REQUIRE(a.ids.size() == 100);
        for (std::size_t i = 0; i < a.ids.size(); ++i) {
            CHECK(a.ids[i] < static_cast<std::int32_t>(v.size()));
            if (i >= a.true_length) CHECK(a.ids[i] == kPadId);
        }
        CHECK(encode_path(p, v, 100) == a);
    }
}
