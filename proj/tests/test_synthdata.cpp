#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <vector>

#include "doctest.h"
#include "oracles.hpp"
#include "voxalign/error.hpp"
#include "voxalign/evaluation.hpp"
#include "voxalign/synthdata.hpp"

using namespace voxalign;
namespace fs = std::filesystem;

namespace {

ErrorCode code_of(auto&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected an error");
    return ErrorCode::IoError;
}

GeneratorConfig small_config(std::size_t n = 60, std::uint64_t seed = 5) {
    GeneratorConfig c;
    c.n_examples = n;
    c.seed = seed;
    return c;
}

fs::path fresh_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "voxalign_tests" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

bool same_example(const PairedExample& a, const PairedExample& b) {
    return a.id == b.id && a.labels == b.labels && a.speaker_id == b.speaker_id && a.duration_s == b.duration_s &&
           a.audio.frames == b.audio.frames && a.audio.feature_dim == b.audio.feature_dim &&
           a.vision_features == b.vision_features && a.text_features == b.text_features;
}

}  // namespace

TEST_CASE("generator config validation") {
    GeneratorConfig c = small_config();
    c.n_examples = 0;
    CHECK(code_of([&] { validate(c); }) == ErrorCode::InvalidConfig);
    c = small_config();
    c.latent_dim = 4;
    CHECK(code_of([&] { validate(c); }) == ErrorCode::InvalidConfig);
    c = small_config();
    c.prevalences = {0.5};
    CHECK(code_of([&] { validate(c); }) == ErrorCode::InvalidConfig);
    c = small_config();
    c.noise.audio = -1.0;
    CHECK(code_of([&] { validate(c); }) == ErrorCode::InvalidConfig);
    CHECK_NOTHROW(validate(small_config()));
}

TEST_CASE("orthonormal columns") {
    const Matrix m = random_orthonormal_columns(12, 7, 3);
    for (std::size_t a = 0; a < 7; ++a)
        for (std::size_t b = 0; b < 7; ++b) {
            double s = 0.0;
            for (std::size_t r = 0; r < 12; ++r) s += m(r, a) * m(r, b);
            CHECK(std::abs(s - (a == b ? 1.0 : 0.0)) < 1e-12);
        }
    CHECK(random_orthonormal_columns(12, 7, 3) == m);
}

TEST_CASE("examples follow the documented structure") {
    const GeneratorConfig c = small_config(300);
    const Dataset ds = synthesize_dataset(c);
    REQUIRE(ds.examples.size() == 300);
    for (const auto& ex : ds.examples) {
        CHECK(ex.labels.size() == c.n_labels);
        CHECK(ex.speaker_id < c.speaker_count);
        CHECK(ex.duration_s >= c.duration_mean_s * (1 - c.duration_jitter) - 1e-9);
        CHECK(ex.duration_s <= c.duration_mean_s * (1 + c.duration_jitter) + 1e-9);
        CHECK(ex.audio.feature_dim == c.audio_dim);
        CHECK(ex.audio.frame_count() == std::size_t(std::llround(ex.duration_s * c.frame_rate_hz)));
        CHECK(ex.vision_features.size() == c.vision_dim);
        CHECK(ex.text_features.size() == c.text_dim);
    }
    CHECK(ds.prompts.label_names.size() == c.n_labels);
    CHECK(ds.prompts.label_names[0] == label_name(0));
    CHECK(ds.towers.vision.output_dim() == c.embed_dim);
    CHECK(ds.towers.text.source_dim() == c.text_dim);
}

TEST_CASE("prompts are distinct feature vectors") {
    const Dataset ds = synthesize_dataset(small_config(10));
    for (const auto& p : spoken_prompt_pairs(ds.prompts)) CHECK(p.positive != p.negative);
    for (const auto& p : written_prompt_pairs(ds.prompts)) CHECK(p.positive != p.negative);
}

TEST_CASE("sampling is deterministic and independent of thread count") {
    const GeneratorConfig c = small_config(40);
    const Dataset a = synthesize_dataset(c, 1);
    const Dataset b = synthesize_dataset(c, 4);
    for (std::size_t i = 0; i < a.examples.size(); ++i) CHECK(same_example(a.examples[i], b.examples[i]));
    CHECK(a.manifest == b.manifest);

    const GeneratorModel model = build_generator_model(c);
    CHECK(same_example(sample_example(c, model, 17), a.examples[17]));
    GeneratorConfig other = c;
    other.seed = c.seed + 1;
    CHECK_FALSE(same_example(synthesize_dataset(other).examples[0], a.examples[0]));
}

TEST_CASE("prevalences are honoured") {
    GeneratorConfig c = small_config(4000);
    c.n_labels = 3;
    c.latent_dim = 8;
    c.prevalences = {0.1, 0.3, 0.5};
    const GeneratorModel model = build_generator_model(c);
    std::vector<double> counts(3, 0.0);
    for (std::size_t i = 0; i < c.n_examples; ++i) {
        const auto ex = sample_example(c, model, i);
        for (std::size_t l = 0; l < 3; ++l) counts[l] += ex.labels[l];
    }
    for (std::size_t l = 0; l < 3; ++l) {
        const double p = c.prevalences[l];
        const double sigma = std::sqrt(p * (1 - p) / double(c.n_examples));
        CHECK(std::abs(counts[l] / double(c.n_examples) - p) < 4.0 * sigma);
    }
}

TEST_CASE("split fractions and seeds") {
    const Dataset ds = synthesize_dataset(small_config(101));
    CHECK(ds.manifest.indices_of(Split::Train).size() == 81);
    CHECK(ds.manifest.indices_of(Split::Test).size() == 20);
    CHECK(code_of([&] { split_dataset(ds.manifest, 0.0, 1); }) == ErrorCode::InvalidFraction);
    CHECK(code_of([&] { split_dataset(ds.manifest, 1.0, 1); }) == ErrorCode::InvalidFraction);
    const DatasetManifest a = split_dataset(ds.manifest, 0.5, 9);
    CHECK(split_dataset(ds.manifest, 0.5, 9) == a);
    CHECK(a.indices_of(Split::Train).size() == 51);  // round(50.5) away from zero
}

TEST_CASE("generate_dataset round trips and is byte-identical across runs and thread counts") {
    const GeneratorConfig c = small_config(30, 7);
    const fs::path d1 = fresh_dir("gen1"), d2 = fresh_dir("gen2");
    generate_dataset(c, d1, 1);
    generate_dataset(c, d2, 3);
    std::size_t files = 0;
    for (const auto& e : fs::recursive_directory_iterator(d1)) {
        if (!e.is_regular_file()) continue;
        ++files;
        const fs::path rel = fs::relative(e.path(), d1);
        CHECK_MESSAGE(slurp(e.path()) == slurp(d2 / rel), rel.string());
    }
    CHECK(files == 30 * 3 + 2 + 4 + 2);

    const Dataset mem = synthesize_dataset(c);
    const Dataset disk = load_dataset(d1 / "manifest.jsonl");
    CHECK(disk.config == mem.config);
    CHECK(disk.manifest == mem.manifest);
    for (std::size_t i = 0; i < mem.examples.size(); ++i) CHECK(same_example(mem.examples[i], disk.examples[i]));
    CHECK(disk.towers.vision.fingerprint() == mem.towers.vision.fingerprint());
    CHECK(disk.towers.text.fingerprint() == mem.towers.text.fingerprint());
    CHECK(disk.prompts.audio_positive == mem.prompts.audio_positive);
    CHECK(disk.prompts.text_negative == mem.prompts.text_negative);
}

TEST_CASE("manifest rejects malformed lines") {
    const fs::path dir = fresh_dir("bad_manifest");
    std::ofstream(dir / "m.jsonl") << "{\"id\":\"x\"}\n";
    CHECK_THROWS_AS(read_manifest(dir / "m.jsonl"), Error);
    CHECK(code_of([&] { read_manifest(dir / "missing.jsonl"); }) == ErrorCode::IoError);
}

TEST_CASE("paired views are linearly informative about labels") {
    // Ridge probe fit with Eigen on train vision features, scored on held-out
    // examples: every label should be well above chance.
    GeneratorConfig c = small_config(1200, 11);
    const Dataset ds = synthesize_dataset(c);
    const auto train = ds.manifest.indices_of(Split::Train);
    const auto test = ds.manifest.indices_of(Split::Test);
    auto design = [&](const std::vector<std::size_t>& idx) {
        Eigen::MatrixXd x(idx.size(), c.vision_dim + 1);
        for (std::size_t r = 0; r < idx.size(); ++r) {
            for (std::size_t k = 0; k < c.vision_dim; ++k) x(r, k) = ds.examples[idx[r]].vision_features[k];
            x(r, c.vision_dim) = 1.0;
        }
        return x;
    };
    const Eigen::MatrixXd xtr = design(train), xte = design(test);
    Eigen::MatrixXd ytr(train.size(), c.n_labels);
    for (std::size_t r = 0; r < train.size(); ++r)
        for (std::size_t l = 0; l < c.n_labels; ++l) ytr(r, l) = ds.examples[train[r]].labels[l];
    const Eigen::MatrixXd gram =
        xtr.transpose() * xtr + 1e-3 * Eigen::MatrixXd::Identity(c.vision_dim + 1, c.vision_dim + 1);
    const Eigen::MatrixXd w = gram.ldlt().solve(xtr.transpose() * ytr);
    const Eigen::MatrixXd pred = xte * w;
    for (std::size_t l = 0; l < c.n_labels; ++l) {
        std::vector<double> s(test.size());
        std::vector<std::uint8_t> y(test.size());
        for (std::size_t r = 0; r < test.size(); ++r) {
            s[r] = pred(r, l);
            y[r] = ds.examples[test[r]].labels[l];
        }
        if (std::count(y.begin(), y.end(), 1) == 0 || std::count(y.begin(), y.end(), 0) == 0) continue;
        CHECK(oracle::auroc_pairs(s, y) > 0.75);
    }
}

TEST_CASE("frozen towers agree on paired examples") {
    const Dataset ds = synthesize_dataset(small_config(200, 12));
    double paired = 0.0, unpaired = 0.0;
    for (std::size_t i = 0; i < 200; ++i) {
        const Embedding t = frozen_encode(ds.towers.text, ds.examples[i].text_features);
        paired += cosine_similarity(t, frozen_encode(ds.towers.vision, ds.examples[i].vision_features));
        unpaired += cosine_similarity(t, frozen_encode(ds.towers.vision, ds.examples[(i + 1) % 200].vision_features));
    }
    CHECK(paired / 200.0 > unpaired / 200.0 + 0.2);
}
