#include "voxalign/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "voxalign/config_json.hpp"
#include "voxalign/error.hpp"
#include "voxalign/kernels.hpp"
#include "voxalign/parallel.hpp"
#include "voxalign/rng.hpp"
#include "voxalign/tensor_io.hpp"

namespace voxalign {
namespace {

namespace fs = std::filesystem;

std::vector<double> matvec(const Matrix& m, std::span<const double> x) {
    std::vector<double> y(m.rows);
    kernels::gemv(m.data, m.rows, m.cols, x, {}, y);
    return y;
}

Matrix transpose(const Matrix& m) {
    Matrix t{m.cols, m.rows, std::vector<double>(m.data.size())};
    for (std::size_t r = 0; r < m.rows; ++r)
        for (std::size_t c = 0; c < m.cols; ++c) t.data[c * m.rows + r] = m(r, c);
    return t;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    Matrix out{a.rows, b.cols, std::vector<double>(a.rows * b.cols, 0.0)};
    const Matrix bt = transpose(b);
    for (std::size_t r = 0; r < a.rows; ++r)
        for (std::size_t c = 0; c < b.cols; ++c)
            out.data[r * b.cols + c] = kernels::dot(std::span<const double>(a.data).subspan(r * a.cols, a.cols),
                                                    std::span<const double>(bt.data).subspan(c * bt.cols, bt.cols));
    return out;
}

Tensor matrix_tensor(const Matrix& m) { return Tensor{{m.rows, m.cols}, m.data}; }

Matrix tensor_matrix(const Tensor& t, const char* what) {
    if (t.dims.size() != 2) throw Error(ErrorCode::FormatError, std::string(what) + " is not a rank-2 tensor");
    return Matrix{static_cast<std::size_t>(t.dims[0]), static_cast<std::size_t>(t.dims[1]), t.data};
}

std::vector<double> row_vector(const Matrix& m, std::size_t r) {
    return {m.data.begin() + static_cast<std::ptrdiff_t>(r * m.cols),
            m.data.begin() + static_cast<std::ptrdiff_t>((r + 1) * m.cols)};
}

std::vector<double> default_prevalences(std::size_t n_labels, std::uint64_t seed) {
    Rng rng(derive_seed(seed, seed_stream::prevalences));
    const double lo = std::log(0.05);
    const double hi = std::log(0.5);
    std::vector<double> p(n_labels);
    for (double& v : p) v = std::exp(lo + (hi - lo) * rng.uniform());
    return p;
}

GeneratorConfig resolved(const GeneratorConfig& config) {
    GeneratorConfig c = config;
    if (c.prevalences.empty()) c.prevalences = default_prevalences(c.n_labels, c.seed);
    return c;
}

std::string relative_data_path(const std::string& id, const char* kind) { return "data/" + id + "." + kind + ".xmdt"; }

ManifestRecord record_for(const PairedExample& ex) {
    return ManifestRecord{ex.id,
                          relative_data_path(ex.id, "audio"),
                          relative_data_path(ex.id, "vision"),
                          relative_data_path(ex.id, "text"),
                          ex.labels,
                          ex.speaker_id,
                          ex.duration_s,
                          Split::Train};
}

void ensure_dir(const fs::path& p) {
    std::error_code ec;
    fs::create_directories(p, ec);
    if (ec) throw Error(ErrorCode::IoError, "cannot create directory " + p.string() + ": " + ec.message());
}

void write_text_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot open for writing: " + path.string());
    out << content;
    out.close();
    if (!out) throw Error(ErrorCode::IoError, "failed writing " + path.string());
}

std::string read_text_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoError, "cannot open for reading: " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<std::uint8_t> labels_from_json(const Json& j) {
    std::vector<std::uint8_t> labels;
    for (const auto& v : j) {
        const int b = v.get<int>();
        if (b != 0 && b != 1) throw Error(ErrorCode::FormatError, "label values must be 0 or 1");
        labels.push_back(static_cast<std::uint8_t>(b));
    }
    return labels;
}

}  // namespace

void validate(const GeneratorConfig& c) {
    auto fail = [](const std::string& m) { throw Error(ErrorCode::InvalidConfig, m); };
    if (c.n_examples == 0) fail("n_examples must be >= 1");
    if (c.n_labels == 0) fail("n_labels must be >= 1");
    if (c.latent_dim < c.n_labels) fail("latent_dim must be >= n_labels");
    if (c.audio_dim < c.latent_dim || c.vision_dim < c.latent_dim || c.text_dim < c.latent_dim) {
        fail("audio, vision and text dims must be >= latent_dim");
    }
    if (c.embed_dim < c.latent_dim) fail("embed_dim must be >= latent_dim");
    if (!c.prevalences.empty()) {
        if (c.prevalences.size() != c.n_labels) fail("prevalences must have n_labels entries");
        for (double p : c.prevalences)
            if (!(p > 0.0 && p < 1.0)) fail("prevalences must lie in (0, 1)");
    }
    if (c.speaker_count == 0) fail("speaker_count must be >= 1");
    if (!(c.duration_mean_s > 0.0)) fail("duration_mean_s must be > 0");
    if (!(c.duration_jitter >= 0.0 && c.duration_jitter < 1.0)) fail("duration_jitter must lie in [0, 1)");
    if (!(c.frame_rate_hz > 0.0)) fail("frame_rate_hz must be > 0");
    const auto& n = c.noise;
    for (double s : {n.latent, n.vision, n.text, n.audio, n.speaker_offset})
        if (!(s >= 0.0) || !std::isfinite(s)) fail("noise scales must be finite and >= 0");
    if (n.audio < n.text) fail("audio noise must be >= text noise");
    if (!(c.train_fraction > 0.0 && c.train_fraction < 1.0)) fail("train_fraction must lie in (0, 1)");
}

Matrix random_orthonormal_columns(std::size_t rows, std::size_t cols, std::uint64_t seed) {
    if (rows < cols) throw Error(ErrorCode::InvalidConfig, "orthonormal columns need rows >= cols");
    Rng rng(seed);
    // Column-major scratch for modified Gram-Schmidt.
    std::vector<std::vector<double>> columns(cols, std::vector<double>(rows));
    for (auto& col : columns)
        for (double& v : col) v = rng.normal();
    for (std::size_t c = 0; c < cols; ++c) {
        for (std::size_t p = 0; p < c; ++p) {
            const double proj = kernels::dot(columns[c], columns[p]);
            kernels::axpy(-proj, columns[p], columns[c]);
        }
        const double norm = l2_norm(columns[c]);
        kernels::scale(1.0 / norm, columns[c]);
    }
    Matrix m{rows, cols, std::vector<double>(rows * cols)};
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) m.data[r * cols + c] = columns[c][r];
    return m;
}

GeneratorModel build_generator_model(const GeneratorConfig& config) {
    validate(config);
    const GeneratorConfig c = resolved(config);
    const std::uint64_t base = derive_seed(c.seed, seed_stream::generator_model);
    GeneratorModel m;
    m.label_embedding = random_orthonormal_columns(c.latent_dim, c.n_labels, derive_seed(base, 1));
    m.vision_map = random_orthonormal_columns(c.vision_dim, c.latent_dim, derive_seed(base, 2));
    m.text_map = random_orthonormal_columns(c.text_dim, c.latent_dim, derive_seed(base, 3));
    m.audio_map = random_orthonormal_columns(c.audio_dim, c.latent_dim, derive_seed(base, 4));
    m.shared_map = random_orthonormal_columns(c.embed_dim, c.latent_dim, derive_seed(base, 5));
    Rng rng(derive_seed(base, 6));
    m.speaker_offsets = Matrix{c.speaker_count, c.audio_dim, std::vector<double>(c.speaker_count * c.audio_dim)};
    for (double& v : m.speaker_offsets.data) v = c.noise.speaker_offset * rng.normal();
    m.prevalences = c.prevalences;
    return m;
}

FrozenTowers build_frozen_towers(const GeneratorConfig& config, const GeneratorModel& model) {
    const std::uint64_t base = derive_seed(config.seed, seed_stream::generator_model);
    const Matrix vision = matmul(model.shared_map, transpose(model.vision_map));
    const Matrix text = matmul(model.shared_map, transpose(model.text_map));
    return FrozenTowers{FrozenProjector(vision.rows, vision.cols, vision.data, derive_seed(base, 2)),
                        FrozenProjector(text.rows, text.cols, text.data, derive_seed(base, 3))};
}

std::string label_name(std::size_t index) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "finding_%02zu", index);
    return buf;
}

PromptSet build_prompts(const GeneratorModel& model) {
    const std::size_t n_labels = model.label_embedding.cols;
    const std::size_t k = model.label_embedding.rows;
    const std::size_t f = model.audio_map.rows;
    const std::size_t t = model.text_map.rows;

    std::vector<double> mean_offset(f, 0.0);
    for (std::size_t s = 0; s < model.speaker_offsets.rows; ++s) {
        kernels::axpy(1.0, row_vector(model.speaker_offsets, s), mean_offset);
    }
    kernels::scale(1.0 / static_cast<double>(model.speaker_offsets.rows), mean_offset);

    PromptSet p;
    p.audio_positive = Matrix{n_labels, f, {}};
    p.audio_negative = Matrix{n_labels, f, {}};
    p.text_positive = Matrix{n_labels, t, {}};
    p.text_negative = Matrix{n_labels, t, {}};
    for (std::size_t l = 0; l < n_labels; ++l) {
        p.label_names.push_back(label_name(l));
        std::vector<double> direction(k);
        for (std::size_t r = 0; r < k; ++r) direction[r] = model.label_embedding(r, l);
        std::vector<double> negated = direction;
        kernels::scale(-1.0, negated);

        auto audio_pos = matvec(model.audio_map, direction);
        auto audio_neg = matvec(model.audio_map, negated);
        kernels::axpy(1.0, mean_offset, audio_pos);
        kernels::axpy(1.0, mean_offset, audio_neg);
        const auto text_pos = matvec(model.text_map, direction);
        const auto text_neg = matvec(model.text_map, negated);

        p.audio_positive.data.insert(p.audio_positive.data.end(), audio_pos.begin(), audio_pos.end());
        p.audio_negative.data.insert(p.audio_negative.data.end(), audio_neg.begin(), audio_neg.end());
        p.text_positive.data.insert(p.text_positive.data.end(), text_pos.begin(), text_pos.end());
        p.text_negative.data.insert(p.text_negative.data.end(), text_neg.begin(), text_neg.end());
    }
    return p;
}

std::string example_id(std::size_t index) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "ex%06zu", index);
    return buf;
}

PairedExample sample_example(const GeneratorConfig& config, const GeneratorModel& model, std::size_t index) {
    const std::size_t n_labels = model.label_embedding.cols;
    const std::size_t k = model.label_embedding.rows;
    const std::size_t f = model.audio_map.rows;
    const NoiseScales& noise = config.noise;
    Rng rng(derive_seed(config.seed, seed_stream::example_base + index));

    PairedExample ex;
    ex.id = example_id(index);
    ex.labels.resize(n_labels);
    std::vector<double> signs(n_labels);
    for (std::size_t l = 0; l < n_labels; ++l) {
        ex.labels[l] = rng.bernoulli(model.prevalences[l]) ? 1 : 0;
        signs[l] = ex.labels[l] ? 1.0 : -1.0;
    }
    ex.speaker_id = static_cast<std::size_t>(rng.uniform_index(model.speaker_offsets.rows));
    ex.duration_s = config.duration_mean_s * (1.0 + config.duration_jitter * (2.0 * rng.uniform() - 1.0));

    std::vector<double> z = matvec(model.label_embedding, signs);
    for (std::size_t r = 0; r < k; ++r) z[r] += noise.latent * rng.normal();

    ex.vision_features = matvec(model.vision_map, z);
    for (double& v : ex.vision_features) v += noise.vision * rng.normal();
    ex.text_features = matvec(model.text_map, z);
    for (double& v : ex.text_features) v += noise.text * rng.normal();

    std::vector<double> clean = matvec(model.audio_map, z);
    kernels::axpy(1.0, row_vector(model.speaker_offsets, ex.speaker_id), clean);
    const auto frames = static_cast<std::size_t>(
        std::max<long long>(1, std::llround(ex.duration_s * config.frame_rate_hz)));
    ex.audio.feature_dim = f;
    ex.audio.frame_rate_hz = config.frame_rate_hz;
    ex.audio.frames.resize(frames * f);
    for (std::size_t t = 0; t < frames; ++t)
        for (std::size_t c = 0; c < f; ++c) ex.audio.frames[t * f + c] = clean[c] + noise.audio * rng.normal();
    return ex;
}

const char* to_string(Split s) noexcept { return s == Split::Train ? "train" : "test"; }

Split parse_split(const std::string& s) {
    if (s == "train") return Split::Train;
    if (s == "test") return Split::Test;
    throw Error(ErrorCode::FormatError, "unknown split tag '" + s + "'");
}

std::vector<std::size_t> DatasetManifest::indices_of(Split split) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < records.size(); ++i)
        if (records[i].split == split) out.push_back(i);
    return out;
}

DatasetManifest split_dataset(DatasetManifest manifest, double train_fraction, std::uint64_t seed) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
        throw Error(ErrorCode::InvalidFraction, "train fraction must lie strictly between 0 and 1");
    }
    const std::size_t n = manifest.records.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(derive_seed(seed, seed_stream::split));
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.uniform_index(i)]);
    const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(n)));
    for (std::size_t r = 0; r < n; ++r) manifest.records[order[r]].split = r < n_train ? Split::Train : Split::Test;
    return manifest;
}

void write_manifest(const DatasetManifest& manifest, const fs::path& path) {
    std::string out;
    for (const auto& r : manifest.records) {
        Json j;
        j["id"] = r.id;
        j["audio_path"] = r.audio_path;
        j["vision_path"] = r.vision_path;
        j["text_path"] = r.text_path;
        Json labels = Json::array();
        for (auto b : r.labels) labels.push_back(static_cast<int>(b));
        j["labels"] = std::move(labels);
        j["speaker_id"] = r.speaker_id;
        j["duration_s"] = r.duration_s;
        j["split"] = to_string(r.split);
        out += j.dump();
        out += '\n';
    }
    write_text_file(path, out);
}

DatasetManifest read_manifest(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoError, "cannot open manifest " + path.string());
    DatasetManifest m;
    std::set<std::string> ids;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            const Json j = Json::parse(line);
            ManifestRecord r;
            r.id = j.at("id").get<std::string>();
            r.audio_path = j.at("audio_path").get<std::string>();
            r.vision_path = j.at("vision_path").get<std::string>();
            r.text_path = j.at("text_path").get<std::string>();
            r.labels = labels_from_json(j.at("labels"));
            r.speaker_id = j.at("speaker_id").get<std::size_t>();
            r.duration_s = j.at("duration_s").get<double>();
            r.split = parse_split(j.at("split").get<std::string>());
            if (!ids.insert(r.id).second) throw Error(ErrorCode::FormatError, "duplicate id " + r.id);
            m.records.push_back(std::move(r));
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorCode::FormatError,
                        path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return m;
}

Dataset synthesize_dataset(const GeneratorConfig& config, unsigned threads) {
    validate(config);
    Dataset ds;
    ds.config = resolved(config);
    const GeneratorModel model = build_generator_model(ds.config);
    ds.towers = build_frozen_towers(ds.config, model);
    ds.prompts = build_prompts(model);
    ds.examples.resize(ds.config.n_examples);
    parallel_for(ds.config.n_examples, threads,
                 [&](std::size_t i) { ds.examples[i] = sample_example(ds.config, model, i); });
    for (const auto& ex : ds.examples) ds.manifest.records.push_back(record_for(ex));
    ds.manifest = split_dataset(std::move(ds.manifest), ds.config.train_fraction, ds.config.seed);
    return ds;
}

DatasetManifest generate_dataset(const GeneratorConfig& config, const fs::path& out_dir, unsigned threads) {
    const Dataset ds = synthesize_dataset(config, threads);
    ensure_dir(out_dir / "data");
    ensure_dir(out_dir / "frozen");
    ensure_dir(out_dir / "prompts");

    parallel_for(ds.examples.size(), threads, [&](std::size_t i) {
        const PairedExample& ex = ds.examples[i];
        const ManifestRecord& r = ds.manifest.records[i];
        const std::vector<std::uint64_t> audio_dims{ex.audio.frame_count(), ex.audio.feature_dim};
        const std::vector<std::uint64_t> vision_dims{ex.vision_features.size()};
        const std::vector<std::uint64_t> text_dims{ex.text_features.size()};
        write_tensor(out_dir / r.audio_path, audio_dims, ex.audio.frames);
        write_tensor(out_dir / r.vision_path, vision_dims, ex.vision_features);
        write_tensor(out_dir / r.text_path, text_dims, ex.text_features);
    });

    auto projector_tensor = [](const FrozenProjector& p) {
        return Tensor{{p.output_dim(), p.source_dim()}, {p.matrix().begin(), p.matrix().end()}};
    };
    const Tensor vision = projector_tensor(ds.towers.vision);
    const Tensor text = projector_tensor(ds.towers.text);
    write_tensor(out_dir / "frozen/vision_projector.xmdt", vision.dims, vision.data);
    write_tensor(out_dir / "frozen/text_projector.xmdt", text.dims, text.data);
    for (const auto& [name, m] : {std::pair{"audio_positive", &ds.prompts.audio_positive},
                                  std::pair{"audio_negative", &ds.prompts.audio_negative},
                                  std::pair{"text_positive", &ds.prompts.text_positive},
                                  std::pair{"text_negative", &ds.prompts.text_negative}}) {
        const Tensor t = matrix_tensor(*m);
        write_tensor(out_dir / "prompts" / (std::string(name) + ".xmdt"), t.dims, t.data);
    }

    Json gen;
    gen["format"] = "voxalign-dataset";
    gen["version"] = 1;
    gen["generator"] = to_json(ds.config);
    gen["vision_projector_seed"] = ds.towers.vision.seed();
    gen["text_projector_seed"] = ds.towers.text.seed();
    Json names = Json::array();
    for (const auto& n : ds.prompts.label_names) names.push_back(n);
    gen["label_names"] = std::move(names);
    write_text_file(out_dir / "generator.json", gen.dump(2) + "\n");
    write_manifest(ds.manifest, out_dir / "manifest.jsonl");
    return ds.manifest;
}

Dataset load_dataset(const fs::path& manifest_path, unsigned threads) {
    const fs::path root = manifest_path.parent_path();
    Dataset ds;
    Json gen;
    try {
        gen = Json::parse(read_text_file(root / "generator.json"));
        apply_json(gen.at("generator"), ds.config);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::FormatError, "generator.json: " + std::string(e.what()));
    }

    auto load_projector = [&](const char* file, const char* seed_key) {
        const Tensor t = read_tensor(root / "frozen" / file);
        if (t.dims.size() != 2) throw Error(ErrorCode::FormatError, std::string(file) + " is not rank 2");
        return FrozenProjector(t.dims[0], t.dims[1], t.data, gen.at(seed_key).get<std::uint64_t>());
    };
    ds.towers = FrozenTowers{load_projector("vision_projector.xmdt", "vision_projector_seed"),
                             load_projector("text_projector.xmdt", "text_projector_seed")};
    ds.prompts.audio_positive = tensor_matrix(read_tensor(root / "prompts/audio_positive.xmdt"), "audio prompts");
    ds.prompts.audio_negative = tensor_matrix(read_tensor(root / "prompts/audio_negative.xmdt"), "audio prompts");
    ds.prompts.text_positive = tensor_matrix(read_tensor(root / "prompts/text_positive.xmdt"), "text prompts");
    ds.prompts.text_negative = tensor_matrix(read_tensor(root / "prompts/text_negative.xmdt"), "text prompts");
    for (const auto& n : gen.at("label_names")) ds.prompts.label_names.push_back(n.get<std::string>());

    ds.manifest = read_manifest(manifest_path);
    ds.examples.resize(ds.manifest.records.size());
    parallel_for(ds.examples.size(), threads, [&](std::size_t i) {
        const ManifestRecord& r = ds.manifest.records[i];
        PairedExample& ex = ds.examples[i];
        ex.id = r.id;
        ex.labels = r.labels;
        ex.speaker_id = r.speaker_id;
        ex.duration_s = r.duration_s;
        const Tensor audio = read_tensor(root / r.audio_path);
        if (audio.dims.size() != 2) throw Error(ErrorCode::FormatError, r.audio_path + " is not rank 2");
        ex.audio.feature_dim = audio.dims[1];
        ex.audio.frame_rate_hz = ds.config.frame_rate_hz;
        ex.audio.frames = audio.data;
        ex.vision_features = read_tensor(root / r.vision_path).data;
        ex.text_features = read_tensor(root / r.text_path).data;
        if (r.labels.size() != ds.prompts.label_names.size()) {
            throw Error(ErrorCode::FormatError, r.id + ": label count does not match the label set");
        }
    });
    return ds;
}

// ---------------------------------------------------------------------------

Json to_json(const GeneratorConfig& c) {
    Json j;
    j["n_examples"] = c.n_examples;
    j["n_labels"] = c.n_labels;
    j["latent_dim"] = c.latent_dim;
    j["audio_dim"] = c.audio_dim;
    j["vision_dim"] = c.vision_dim;
    j["text_dim"] = c.text_dim;
    j["embed_dim"] = c.embed_dim;
    j["prevalences"] = c.prevalences;
    j["speaker_count"] = c.speaker_count;
    j["duration_mean_s"] = c.duration_mean_s;
    j["duration_jitter"] = c.duration_jitter;
    j["frame_rate_hz"] = c.frame_rate_hz;
    j["noise"] = {{"latent", c.noise.latent},
                  {"vision", c.noise.vision},
                  {"text", c.noise.text},
                  {"audio", c.noise.audio},
                  {"speaker_offset", c.noise.speaker_offset}};
    j["train_fraction"] = c.train_fraction;
    j["seed"] = c.seed;
    return j;
}

void apply_json(const Json& j, GeneratorConfig& c) {
    if (!j.is_object()) throw Error(ErrorCode::InvalidConfig, "generator config must be a JSON object");
    try {
        for (const auto& [key, v] : j.items()) {
            if (key == "n_examples") c.n_examples = v.get<std::size_t>();
            else if (key == "n_labels") c.n_labels = v.get<std::size_t>();
            else if (key == "latent_dim") c.latent_dim = v.get<std::size_t>();
            else if (key == "audio_dim") c.audio_dim = v.get<std::size_t>();
            else if (key == "vision_dim") c.vision_dim = v.get<std::size_t>();
            else if (key == "text_dim") c.text_dim = v.get<std::size_t>();
            else if (key == "embed_dim") c.embed_dim = v.get<std::size_t>();
            else if (key == "prevalences") c.prevalences = v.get<std::vector<double>>();
            else if (key == "speaker_count") c.speaker_count = v.get<std::size_t>();
            else if (key == "duration_mean_s") c.duration_mean_s = v.get<double>();
            else if (key == "duration_jitter") c.duration_jitter = v.get<double>();
            else if (key == "frame_rate_hz") c.frame_rate_hz = v.get<double>();
            else if (key == "train_fraction") c.train_fraction = v.get<double>();
            else if (key == "seed") c.seed = v.get<std::uint64_t>();
            else if (key == "noise") {
                for (const auto& [nk, nv] : v.items()) {
                    if (nk == "latent") c.noise.latent = nv.get<double>();
                    else if (nk == "vision") c.noise.vision = nv.get<double>();
                    else if (nk == "text") c.noise.text = nv.get<double>();
                    else if (nk == "audio") c.noise.audio = nv.get<double>();
                    else if (nk == "speaker_offset") c.noise.speaker_offset = nv.get<double>();
                    else throw Error(ErrorCode::InvalidConfig, "unknown noise key '" + nk + "'");
                }
            } else {
                throw Error(ErrorCode::InvalidConfig, "unknown generator key '" + key + "'");
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::InvalidConfig, std::string("generator config: ") + e.what());
    }
}

}  // namespace voxalign
