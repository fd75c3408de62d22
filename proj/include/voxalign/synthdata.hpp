#pragma once

// Deterministic generator of paired (audio, vision, text) examples sharing a
// per-example latent driven by multi-label findings.
//
// For example i with labels y in {0,1}^L and speaker s:
//   z        = E (2y - 1) + latent_noise * eps_z          (k-dim latent)
//   vision   = A z + vision_noise * eps_v
//   text     = B z + text_noise * eps_t
//   frame_t  = C z + offset[s] + audio_noise * eps_a,t     (one per second)
// E, A, B, C have orthonormal columns drawn from the generator-model seed.
// The frozen towers map vision and text into the shared space through one
// common isometry R: g(x) = norm(R A^T x), h(x) = norm(R B^T x).

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "voxalign/encoders.hpp"
#include "voxalign/windowing.hpp"

namespace voxalign {

struct NoiseScales {
    double latent = 0.6;
    double vision = 0.6;
    double text = 0.1;
    double audio = 6.0;
    double speaker_offset = 0.5;

    bool operator==(const NoiseScales&) const = default;
};

struct GeneratorConfig {
    std::size_t n_examples = 2500;
    std::size_t n_labels = 18;
    std::size_t latent_dim = 24;
    std::size_t audio_dim = 64;
    std::size_t vision_dim = 48;
    std::size_t text_dim = 48;
    /// Width of the shared embedding space produced by the frozen towers.
    std::size_t embed_dim = 32;
    /// Per-label positive rate; empty draws log-uniform values in [0.05, 0.5].
    std::vector<double> prevalences;
    std::size_t speaker_count = 8;
    double duration_mean_s = 86.0;
    double duration_jitter = 0.15;
    double frame_rate_hz = 1.0;
    NoiseScales noise;
    double train_fraction = 0.8;
    std::uint64_t seed = 0;

    bool operator==(const GeneratorConfig&) const = default;
};

/// Throws InvalidConfig.
void validate(const GeneratorConfig& config);

struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;  // row-major

    double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
    bool operator==(const Matrix&) const = default;
};

/// rows x cols Gaussian matrix orthonormalized column by column (rows >= cols).
Matrix random_orthonormal_columns(std::size_t rows, std::size_t cols, std::uint64_t seed);

struct GeneratorModel {
    Matrix label_embedding;  // E: k x L
    Matrix vision_map;       // A: V x k
    Matrix text_map;         // B: T x k
    Matrix audio_map;        // C: F x k
    Matrix shared_map;       // R: d x k
    Matrix speaker_offsets;  // S x F
    std::vector<double> prevalences;
};

GeneratorModel build_generator_model(const GeneratorConfig& config);

struct FrozenTowers {
    FrozenProjector vision;
    FrozenProjector text;
};

FrozenTowers build_frozen_towers(const GeneratorConfig& config, const GeneratorModel& model);

/// Feature-space query pairs, one row per label. Audio prompts are single-finding
/// utterances C(+-E e_l) + mean speaker offset; text prompts are B(+-E e_l).
struct PromptSet {
    std::vector<std::string> label_names;
    Matrix audio_positive;  // L x F
    Matrix audio_negative;
    Matrix text_positive;  // L x T
    Matrix text_negative;
};

PromptSet build_prompts(const GeneratorModel& model);
std::string label_name(std::size_t index);

struct PairedExample {
    std::string id;
    std::vector<std::uint8_t> labels;
    std::size_t speaker_id = 0;
    double duration_s = 0.0;
    AudioSignal audio;
    std::vector<double> vision_features;
    std::vector<double> text_features;
};

/// Example `index`, drawn from the per-example seed derive_seed(seed, example_base + index).
PairedExample sample_example(const GeneratorConfig& config, const GeneratorModel& model, std::size_t index);
std::string example_id(std::size_t index);

enum class Split { Train, Test };
const char* to_string(Split s) noexcept;
Split parse_split(const std::string& s);

struct ManifestRecord {
    std::string id;
    std::string audio_path;
    std::string vision_path;
    std::string text_path;
    std::vector<std::uint8_t> labels;
    std::size_t speaker_id = 0;
    double duration_s = 0.0;
    Split split = Split::Train;

    bool operator==(const ManifestRecord&) const = default;
};

struct DatasetManifest {
    std::vector<ManifestRecord> records;

    std::vector<std::size_t> indices_of(Split split) const;
    bool operator==(const DatasetManifest&) const = default;
};

/// Seeded Fisher-Yates shuffle; the first round(fraction * n) shuffled ids become
/// train, the rest test. Throws InvalidFraction unless 0 < fraction < 1.
DatasetManifest split_dataset(DatasetManifest manifest, double train_fraction, std::uint64_t seed);

/// One JSON object per line, UTF-8, fields in the order
/// id, audio_path, vision_path, text_path, labels, speaker_id, duration_s, split.
void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);
DatasetManifest read_manifest(const std::filesystem::path& path);

/// Everything a training or evaluation run needs, held in memory.
struct Dataset {
    GeneratorConfig config;
    FrozenTowers towers;
    PromptSet prompts;
    std::vector<PairedExample> examples;  // examples[i] matches manifest.records[i]
    DatasetManifest manifest;
};

/// In-memory generation; identical content to what generate_dataset writes.
Dataset synthesize_dataset(const GeneratorConfig& config, unsigned threads = 1);

/// Writes manifest.jsonl, generator.json, frozen/, prompts/ and data/ under
/// out_dir. Output bytes do not depend on `threads`.
DatasetManifest generate_dataset(const GeneratorConfig& config, const std::filesystem::path& out_dir,
                                 unsigned threads = 1);

/// Loads a directory written by generate_dataset, given its manifest path.
Dataset load_dataset(const std::filesystem::path& manifest_path, unsigned threads = 1);

}  // namespace voxalign
