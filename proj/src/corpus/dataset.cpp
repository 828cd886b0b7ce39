#include "malfuse/corpus/dataset.hpp"

#include <cmath>
#include <cstdio>
#include <thread>

#include "malfuse/binary_io.hpp"
#include "malfuse/errors.hpp"
#include "malfuse/hash.hpp"

namespace mf::corpus {

using models::Modality;
using models::ModalityInput;
using nlohmann::json;
using nn::Tensor2D;

// --------------------------------------------------------------- config

json FeaturizerConfig::to_json() const {
    return {{"path_vocab", path_vocab}, {"path_len", path_len},     {"api_vocab", api_vocab},
            {"api_len", api_len},       {"static_schema", schema.describe()}, {"env_overrides", env_overrides}};
}

FeaturizerConfig FeaturizerConfig::from_json(const json& j) {
    FeaturizerConfig c;
    c.path_vocab = j.value("path_vocab", c.path_vocab);
    c.path_len = j.value("path_len", c.path_len);
    c.api_vocab = j.value("api_vocab", c.api_vocab);
    c.api_len = j.value("api_len", c.api_len);
    c.env_overrides = j.value("env_overrides", c.env_overrides);
    if (j.contains("static_schema") && j["static_schema"] != c.schema.describe())
        throw CompatibilityError("featurizer: static schema '" + j["static_schema"].get<std::string>() +
                                 "' is not supported (expected '" + c.schema.describe() + "')");
    return c;
}

std::map<std::string, std::string> FeaturizerState::hashes() const {
    const json fp = {{"path_vocab", config.path_vocab}, {"path_len", config.path_len}};
    const json ap = {{"api_vocab", config.api_vocab}, {"api_len", config.api_len}};
    std::uint64_t h_fp = fnv1a64(fp.dump());
    h_fp = fnv1a64(env.to_text(), h_fp);
    h_fp = fnv1a64(byte_vocab.to_text(), h_fp);
    const std::uint64_t h_api = fnv1a64(api_vocab.to_text(), fnv1a64(ap.dump()));
    const std::uint64_t h_emb = fnv1a64(config.schema.describe());
    return {{"fp", to_hex(h_fp)}, {"api", to_hex(h_api)}, {"emb", to_hex(h_emb)}};
}

void FeaturizerState::save(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);
    write_file_text(dir / "featurizer.json", json{{"config", config.to_json()}, {"hashes", hashes()}}.dump(2) + "\n");
    write_file_text(dir / "env_map.txt", env.to_text());
    write_file_text(dir / "byte_vocab.txt", byte_vocab.to_text());
    write_file_text(dir / "api_vocab.txt", api_vocab.to_text());
}

FeaturizerState FeaturizerState::load(const std::filesystem::path& dir) {
    FeaturizerState s;
    json j;
    try {
        j = json::parse(read_file_text(dir / "featurizer.json"));
    } catch (const json::parse_error& e) {
        throw CompatibilityError("featurizer.json: " + std::string(e.what()));
    }
    s.config = FeaturizerConfig::from_json(j.at("config"));
    s.env = path::EnvMap::parse(read_file_text(dir / "env_map.txt"), path::EnvMap{});
    s.byte_vocab = path::ByteVocab::from_text(read_file_text(dir / "byte_vocab.txt"));
    s.api_vocab = api::ApiVocab::from_text(read_file_text(dir / "api_vocab.txt"));
    return s;
}

// -------------------------------------------------------------- dataset

eval::SplitData EncodedDataset::split(std::optional<Split> which) const {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < this->rows(); ++i)
        if (!which || splits[i] == which) rows.push_back(i);
    eval::SplitData s;
    s.batch.rows = rows.size();
    for (std::size_t r : rows) {
        s.ids.push_back(ids[r]);
        s.labels.push_back(labels[r]);
        s.families.push_back(families[r]);
    }
    for (std::size_t m = 0; m < 3; ++m) {
        if (!batch.inputs[m]) continue;
        const auto& src = *batch.inputs[m];
        ModalityInput in{Tensor2D(static_cast<Eigen::Index>(rows.size()), src.x.cols()), {}};
        for (std::size_t i = 0; i < rows.size(); ++i) {
            in.x.row(static_cast<Eigen::Index>(i)) = src.x.row(static_cast<Eigen::Index>(rows[i]));
            in.present.push_back(src.present[rows[i]]);
        }
        s.batch.inputs[m] = std::move(in);
    }
    return s;
}

std::vector<std::uint8_t> EncodedDataset::encode() const {
    json header = {{"rows", rows()}, {"ids", ids}, {"labels", labels}, {"families", families},
                   {"featurizer_hashes", featurizer_hashes}};
    json sp = json::array();
    for (const auto& s : splits) sp.push_back(s ? std::string(to_string(*s)) : std::string("-"));
    header["splits"] = sp;
    json mods = json::object();
    for (auto m : models::kModalityOrder) {
        const auto& in = batch.inputs[static_cast<std::size_t>(m)];
        if (!in) continue;
        mods[std::string(models::to_string(m))] = {{"cols", in->x.cols()}, {"present", in->present}};
    }
    header["modalities"] = mods;
    ByteWriter w;
    w.bytes("MFDS");
    w.u16(1);
    w.str(header.dump());
    for (auto m : models::kModalityOrder) {
        const auto& in = batch.inputs[static_cast<std::size_t>(m)];
        if (!in) continue;
        for (Eigen::Index i = 0; i < in->x.size(); ++i) w.f32(static_cast<float>(in->x.data()[i]));
    }
    return w.data();
}

EncodedDataset EncodedDataset::decode(const std::vector<std::uint8_t>& bytes) {
    ByteReader r(bytes);
    if (r.bytes(4) != "MFDS") throw CompatibilityError("dataset: bad magic");
    if (const auto v = r.u16(); v != 1) throw CompatibilityError("dataset: unsupported version " + std::to_string(v));
    json header;
    try {
        header = json::parse(r.str());
    } catch (const json::parse_error& e) {
        throw CompatibilityError("dataset header: " + std::string(e.what()));
    }
    EncodedDataset d;
    const std::size_t rows = header.at("rows").get<std::size_t>();
    d.ids = header.at("ids").get<std::vector<std::string>>();
    d.labels = header.at("labels").get<std::vector<double>>();
    d.families = header.at("families").get<std::vector<std::string>>();
    d.featurizer_hashes = header.at("featurizer_hashes").get<std::map<std::string, std::string>>();
    for (const auto& s : header.at("splits")) {
        const auto text = s.get<std::string>();
        d.splits.push_back(text == "-" ? std::nullopt : std::optional<Split>(split_from_string(text)));
    }
    if (d.ids.size() != rows || d.labels.size() != rows || d.families.size() != rows || d.splits.size() != rows)
        throw CompatibilityError("dataset: header lists disagree with the row count");
    d.batch.rows = rows;
    for (auto m : models::kModalityOrder) {
        const std::string tag(models::to_string(m));
        if (!header.at("modalities").contains(tag)) continue;
        const auto& mj = header["modalities"][tag];
        ModalityInput in;
        in.x.resize(static_cast<Eigen::Index>(rows), mj.at("cols").get<Eigen::Index>());
        in.present = mj.at("present").get<std::vector<std::uint8_t>>();
        for (Eigen::Index i = 0; i < in.x.size(); ++i) in.x.data()[i] = r.f32();
        d.batch.inputs[static_cast<std::size_t>(m)] = std::move(in);
    }
    if (!r.at_end()) throw CompatibilityError("dataset: trailing bytes");
    d.batch.validate();
    return d;
}

// ---------------------------------------------------------- featurizing

namespace {

struct RawSample {
    std::optional<path::NormalizedPath> path;
    std::optional<api::EmulationReport> report;
    std::optional<std::vector<double>> static_vec;
    std::vector<Diagnostic> errors;
};

RawSample read_sample(const SampleRecord& rec, const std::filesystem::path& base, const FeaturizerConfig& cfg,
                      const path::EnvMap& env) {
    RawSample s;
    auto fail = [&](const char* modality, const std::string& msg) { s.errors.push_back({rec.sample_id, modality, msg}); };
    if (!rec.filepath.empty()) {
        try {
            s.path = path::normalize_path(rec.filepath, env);
        } catch (const Error& e) {
            fail("fp", e.what());
        }
    }
    if (rec.report_path) {
        try {
            auto rep = api::parse_report(read_file_text(base / *rec.report_path));
            if (rep.sample_id.empty()) rep.sample_id = rec.sample_id;
            if (!rep.family && rec.family) rep.family = rec.family;
            s.report = std::move(rep);
        } catch (const Error& e) {
            fail("api", *rec.report_path + ": " + e.what());
        }
    }
    try {
        if (rec.pe_path) {
            const auto bytes = read_file_bytes(base / *rec.pe_path);
            s.static_vec = pe::featurize_static(bytes, cfg.schema).values;
        } else if (rec.static_path) {
            s.static_vec = decode_static_vector(read_file_bytes(base / *rec.static_path), cfg.schema.describe(),
                                                cfg.schema.dim());
        }
    } catch (const Error& e) {
        fail("emb", std::string(rec.pe_path ? *rec.pe_path : *rec.static_path) + ": " + e.what());
    }
    return s;
}

}  // namespace

FeaturizeResult featurize_corpus(const std::vector<SampleRecord>& records, const std::filesystem::path& base_dir,
                                 const FeaturizerConfig& config, std::size_t jobs, const FeaturizerState* state) {
    FeaturizeResult out;
    out.state.config = state ? state->config : config;
    out.state.env = state ? state->env : path::EnvMap::parse(config.env_overrides);
    const auto& cfg = out.state.config;

    std::vector<RawSample> raw(records.size());
    jobs = std::max<std::size_t>(1, std::min(jobs, records.size()));
    std::vector<std::thread> workers;
    std::vector<std::exception_ptr> failures(jobs);
    for (std::size_t w = 0; w < jobs; ++w) {
        workers.emplace_back([&, w] {
            try {
                for (std::size_t i = w; i < records.size(); i += jobs)
                    raw[i] = read_sample(records[i], base_dir, cfg, out.state.env);
            } catch (...) {
                failures[w] = std::current_exception();
            }
        });
    }
    for (auto& t : workers) t.join();
    for (const auto& f : failures)
        if (f) std::rethrow_exception(f);
    for (const auto& s : raw) out.errors.insert(out.errors.end(), s.errors.begin(), s.errors.end());

    if (state) {
        out.state.byte_vocab = state->byte_vocab;
        out.state.api_vocab = state->api_vocab;
    } else {
        bool any_train = false;
        for (const auto& r : records) any_train = any_train || r.split == Split::train;
        std::vector<path::NormalizedPath> paths;
        std::vector<api::EmulationReport> reps;
        for (std::size_t i = 0; i < records.size(); ++i) {
            if (any_train && records[i].split != Split::train) continue;
            if (raw[i].path) paths.push_back(*raw[i].path);
            if (raw[i].report) reps.push_back(*raw[i].report);
        }
        out.state.byte_vocab = path::build_byte_vocab(paths, cfg.path_vocab);
        bool any_success = false;
        for (const auto& r : reps) any_success = any_success || r.status == api::EmulationStatus::success;
        if (any_success) out.state.api_vocab = api::build_api_vocab(reps, cfg.api_vocab);
    }

    auto& d = out.dataset;
    const auto rows = static_cast<Eigen::Index>(records.size());
    d.batch.rows = records.size();
    ModalityInput fp{Tensor2D::Zero(rows, static_cast<Eigen::Index>(cfg.path_len)), {}};
    ModalityInput ap{Tensor2D::Zero(rows, static_cast<Eigen::Index>(cfg.api_len)), {}};
    ModalityInput em{Tensor2D::Zero(rows, static_cast<Eigen::Index>(cfg.schema.dim())), {}};
    const bool have_api_vocab = out.state.api_vocab.capacity() > 0;
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        const auto& rec = records[i];
        d.ids.push_back(rec.sample_id);
        d.labels.push_back(rec.label);
        d.families.push_back(rec.family ? *rec.family : (rec.label ? "malicious" : "benign"));
        d.splits.push_back(rec.split);
        auto& s = raw[i];
        fp.present.push_back(s.path.has_value());
        if (s.path) {
            const auto seq = path::encode_path(*s.path, out.state.byte_vocab, cfg.path_len);
            for (std::size_t k = 0; k < seq.ids.size(); ++k) fp.x(r, static_cast<Eigen::Index>(k)) = seq.ids[k];
        }
        const bool api_ok = s.report && s.report->status == api::EmulationStatus::success && have_api_vocab;
        ap.present.push_back(api_ok);
        if (api_ok) {
            const auto seq = api::encode_apiseq(*s.report, out.state.api_vocab, cfg.api_len);
            for (std::size_t k = 0; k < seq.ids.size(); ++k) ap.x(r, static_cast<Eigen::Index>(k)) = seq.ids[k];
        }
        em.present.push_back(s.static_vec.has_value());
        if (s.static_vec)
            for (std::size_t k = 0; k < s.static_vec->size(); ++k)
                em.x(r, static_cast<Eigen::Index>(k)) = static_cast<float>((*s.static_vec)[k]);
        if (s.report) out.reports.push_back(std::move(*s.report));
    }
    d.batch.inputs[0] = std::move(fp);
    d.batch.inputs[1] = std::move(ap);
    d.batch.inputs[2] = std::move(em);
    d.featurizer_hashes = out.state.hashes();
    return out;
}

std::string coverage_csv(const std::vector<api::EmulationReport>& reports, const std::vector<std::size_t>& sizes) {
    std::string out = "vocab_size,coverage\n";
    for (std::size_t v : sizes) {
        const double c = api::vocab_coverage(api::build_api_vocab(reports, v), reports);
        char buf[64];
        std::snprintf(buf, sizeof buf, "%zu,%.4f\n", v, c);
        out += buf;
    }
    return out;
}

}  // namespace mf::corpus
