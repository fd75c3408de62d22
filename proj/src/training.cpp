#include "voxalign/training.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>

#include "voxalign/config_json.hpp"
#include "voxalign/error.hpp"
#include "voxalign/kernels.hpp"
#include "voxalign/parallel.hpp"

namespace voxalign {
namespace {

namespace fs = std::filesystem;

bool finite(const LossBreakdown& l) {
    return std::isfinite(l.con_audio_to_ct) && std::isfinite(l.con_ct_to_audio) && std::isfinite(l.distill) &&
           std::isfinite(l.total);
}

struct FrozenEmbeddings {
    std::vector<Embedding> vision;
    std::vector<Embedding> text;
};

FrozenEmbeddings embed_frozen(const Dataset& ds, const std::vector<std::size_t>& indices, unsigned threads) {
    FrozenEmbeddings out;
    std::vector<std::optional<Embedding>> vision(indices.size());
    std::vector<std::optional<Embedding>> text(indices.size());
    parallel_for(indices.size(), threads, [&](std::size_t k) {
        const PairedExample& ex = ds.examples[indices[k]];
        vision[k] = frozen_encode(ds.towers.vision, ex.vision_features);
        text[k] = frozen_encode(ds.towers.text, ex.text_features);
    });
    for (auto& v : vision) out.vision.push_back(std::move(*v));
    for (auto& t : text) out.text.push_back(std::move(*t));
    return out;
}

LossOptions loss_options(const TrainConfig& c) { return LossOptions{c.effective_lambda(), c.temperature}; }

}  // namespace

AdamState AdamState::for_params(const StudentEncoderParams& params) {
    AdamState s;
    for (const auto& l : params.layers) {
        s.first_moment.emplace_back(l.weights.size(), 0.0);
        s.first_moment.emplace_back(l.bias.size(), 0.0);
        s.second_moment.emplace_back(l.weights.size(), 0.0);
        s.second_moment.emplace_back(l.bias.size(), 0.0);
    }
    return s;
}

void adam_step(StudentEncoderParams& params, const StudentEncoderParams& grads, AdamState& state,
               const AdamHyper& hyper) {
    const std::size_t n_layers = params.layers.size();
    if (grads.layers.size() != n_layers || state.first_moment.size() != 2 * n_layers ||
        state.second_moment.size() != 2 * n_layers) {
        throw Error(ErrorCode::ShapeMismatch, "Adam state or gradient layer count differs from params");
    }
    for (std::size_t k = 0; k < n_layers; ++k) {
        const auto& p = params.layers[k];
        const auto& g = grads.layers[k];
        if (g.weights.size() != p.weights.size() || g.bias.size() != p.bias.size() ||
            state.first_moment[2 * k].size() != p.weights.size() ||
            state.first_moment[2 * k + 1].size() != p.bias.size() ||
            state.second_moment[2 * k].size() != p.weights.size() ||
            state.second_moment[2 * k + 1].size() != p.bias.size()) {
            throw Error(ErrorCode::ShapeMismatch, "Adam shapes differ at layer " + std::to_string(k));
        }
        for (double v : g.weights)
            if (!std::isfinite(v)) throw Error(ErrorCode::NonFiniteGradient, "layer " + std::to_string(k) + " weights");
        for (double v : g.bias)
            if (!std::isfinite(v)) throw Error(ErrorCode::NonFiniteGradient, "layer " + std::to_string(k) + " bias");
    }

    state.step += 1;
    const auto t = static_cast<double>(state.step);
    const kernels::AdamCoefficients c{hyper.learning_rate, hyper.beta1, hyper.beta2, hyper.epsilon,
                                      1.0 - std::pow(hyper.beta1, t), 1.0 - std::pow(hyper.beta2, t)};
    const kernels::KernelTable& kt = kernels::active();
    for (std::size_t k = 0; k < n_layers; ++k) {
        auto& p = params.layers[k];
        const auto& g = grads.layers[k];
        kt.adam_update(p.weights.data(), g.weights.data(), state.first_moment[2 * k].data(),
                       state.second_moment[2 * k].data(), p.weights.size(), c);
        kt.adam_update(p.bias.data(), g.bias.data(), state.first_moment[2 * k + 1].data(),
                       state.second_moment[2 * k + 1].data(), p.bias.size(), c);
    }
}

void validate(const TrainConfig& c) {
    auto fail = [](const std::string& m) { throw Error(ErrorCode::InvalidConfig, m); };
    if (c.batch_size == 0) fail("batch_size must be >= 1");
    if (!(c.learning_rate > 0.0) || !std::isfinite(c.learning_rate)) fail("learning_rate must be > 0");
    if (!(c.lambda >= 0.0) || !std::isfinite(c.lambda)) fail("lambda must be >= 0");
    if (!(c.temperature > 0.0) || !std::isfinite(c.temperature)) fail("temperature must be > 0");
    if (!(c.beta1 >= 0.0 && c.beta1 < 1.0) || !(c.beta2 >= 0.0 && c.beta2 < 1.0)) fail("Adam betas must lie in [0, 1)");
    if (!(c.epsilon > 0.0)) fail("Adam epsilon must be > 0");
    for (auto h : c.hidden_dims)
        if (h == 0) fail("hidden layer widths must be >= 1");
    if (!(c.windows.window_len_s > 0.0) || !(c.windows.overlap_s >= 0.0) ||
        !(c.windows.overlap_s < c.windows.window_len_s)) {
        fail("window settings need 0 <= overlap < length");
    }
}

BatchSampler::BatchSampler(std::vector<std::size_t> pool, std::uint64_t seed) : pool_(std::move(pool)), rng_(seed) {
    if (pool_.empty()) throw Error(ErrorCode::EmptySplit, "cannot sample batches from an empty split");
    reshuffle();
}

void BatchSampler::reshuffle() {
    order_ = pool_;
    for (std::size_t i = order_.size(); i > 1; --i) std::swap(order_[i - 1], order_[rng_.uniform_index(i)]);
    cursor_ = 0;
}

std::vector<std::size_t> BatchSampler::next(std::size_t batch_size) {
    std::vector<std::size_t> batch;
    batch.reserve(batch_size);
    while (batch.size() < batch_size) {
        if (cursor_ == order_.size()) {
            ++epoch_;
            reshuffle();
        }
        batch.push_back(order_[cursor_++]);
    }
    return batch;
}

std::vector<PairedExample> sample_batch(const Dataset& dataset, BatchSampler& sampler, std::size_t batch_size) {
    std::vector<PairedExample> out;
    for (std::size_t i : sampler.next(batch_size)) out.push_back(dataset.examples.at(i));
    return out;
}

StudentArchitecture student_architecture(const Dataset& dataset, const TrainConfig& config) {
    StudentArchitecture arch;
    arch.input_dim = dataset.examples.empty() ? dataset.config.audio_dim : dataset.examples.front().audio.feature_dim;
    arch.hidden_dims = config.hidden_dims;
    arch.output_dim = dataset.towers.vision.output_dim();
    arch.activation = config.activation;
    return arch;
}

LossBreakdown held_out_loss(const StudentEncoderParams& params, const Dataset& dataset,
                            const std::vector<std::size_t>& indices, const TrainConfig& config, unsigned threads) {
    if (indices.empty()) throw Error(ErrorCode::EmptySplit, "held-out split is empty");
    LossBreakdown mean;
    std::size_t chunks = 0;
    for (std::size_t begin = 0; begin < indices.size(); begin += config.batch_size) {
        const std::size_t end = std::min(indices.size(), begin + config.batch_size);
        const std::vector<std::size_t> chunk(indices.begin() + static_cast<std::ptrdiff_t>(begin),
                                             indices.begin() + static_cast<std::ptrdiff_t>(end));
        FrozenEmbeddings frozen = embed_frozen(dataset, chunk, threads);
        std::vector<std::optional<Embedding>> audio(chunk.size());
        parallel_for(chunk.size(), threads, [&](std::size_t k) {
            audio[k] = encode_long_audio(dataset.examples[chunk[k]].audio, params, config.windows);
        });
        BatchEmbeddings batch;
        for (auto& a : audio) batch.audio.push_back(std::move(*a));
        batch.vision = std::move(frozen.vision);
        batch.text = std::move(frozen.text);
        const LossBreakdown l = total_loss(batch, loss_options(config));
        mean.con_audio_to_ct += l.con_audio_to_ct;
        mean.con_ct_to_audio += l.con_ct_to_audio;
        mean.con_symmetric += l.con_symmetric;
        mean.distill += l.distill;
        mean.total += l.total;
        ++chunks;
    }
    const double inv = 1.0 / static_cast<double>(chunks);
    mean.con_audio_to_ct *= inv;
    mean.con_ct_to_audio *= inv;
    mean.con_symmetric *= inv;
    mean.distill *= inv;
    mean.total *= inv;
    mean.lambda = config.effective_lambda();
    return mean;
}

TrainResult train(const TrainConfig& config, const Dataset& dataset, unsigned threads) {
    validate(config);
    const auto started = std::chrono::steady_clock::now();
    if (config.batch_size == 1) {
        std::cerr << "warning: batch_size 1 gives no contrastive signal (loss is identically 0)\n";
    }

    const auto train_idx = dataset.manifest.indices_of(Split::Train);
    const auto test_idx = dataset.manifest.indices_of(Split::Test);
    if (train_idx.empty()) throw Error(ErrorCode::EmptySplit, "dataset has no train split");

    TrainResult result;
    TrainReport& report = result.report;
    report.config = config;
    report.vision_fingerprint_before = dataset.towers.vision.fingerprint();
    report.text_fingerprint_before = dataset.towers.text.fingerprint();

    const StudentArchitecture arch = student_architecture(dataset, config);
    result.params = init_student(arch, derive_seed(config.seed, seed_stream::student_init));
    StudentEncoderParams& params = result.params;
    AdamState adam = AdamState::for_params(params);
    const AdamHyper hyper{config.learning_rate, config.beta1, config.beta2, config.epsilon};

    // Frozen towers never change, so their embeddings are computed once.
    std::vector<std::size_t> all(dataset.examples.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    const FrozenEmbeddings frozen = embed_frozen(dataset, all, threads);

    BatchSampler sampler(train_idx, derive_seed(config.seed, seed_stream::batch_order));
    const LossOptions options = loss_options(config);
    report.loss_curve.reserve(config.steps);

    for (std::size_t step = 0; step < config.steps; ++step) {
        const std::vector<std::size_t> batch = sampler.next(config.batch_size);
        const std::size_t n = batch.size();

        std::vector<LongAudioTrace> traces(n);
        parallel_for(n, threads, [&](std::size_t k) {
            traces[k] = encode_long_audio_traced(dataset.examples[batch[k]].audio, params, config.windows);
        });

        std::vector<std::vector<double>> raw(n);
        std::vector<Embedding> vision;
        std::vector<Embedding> text;
        for (std::size_t k = 0; k < n; ++k) {
            raw[k] = traces[k].pooled_raw;
            vision.push_back(frozen.vision[batch[k]]);
            text.push_back(frozen.text[batch[k]]);
        }

        LossGradient lg;
        try {
            lg = total_loss_gradient(raw, vision, text, options);
        } catch (const Error& e) {
            if (e.code() == ErrorCode::ZeroVector) {
                throw Error(ErrorCode::NonFiniteLoss, "step " + std::to_string(step) + ": " + e.what());
            }
            throw;
        }
        if (!finite(lg.loss)) {
            throw Error(ErrorCode::NonFiniteLoss, "step " + std::to_string(step) + ": loss is not finite");
        }
        report.loss_curve.push_back(lg.loss);
        report.batch_order.push_back(batch);

        // Per-example gradients, then a fixed-order reduction.
        std::vector<StudentEncoderParams> per_example(n);
        parallel_for(n, threads, [&](std::size_t k) {
            per_example[k] = params.zeros_like();
            backward_long_audio(params, traces[k], lg.d_raw_audio[k], per_example[k]);
        });
        StudentEncoderParams grads = params.zeros_like();
        for (const auto& g : per_example) {
            for (std::size_t l = 0; l < grads.layers.size(); ++l) {
                kernels::axpy(1.0, g.layers[l].weights, grads.layers[l].weights);
                kernels::axpy(1.0, g.layers[l].bias, grads.layers[l].bias);
            }
        }
        try {
            adam_step(params, grads, adam, hyper);
        } catch (const Error& e) {
            if (e.code() == ErrorCode::NonFiniteGradient) {
                throw Error(ErrorCode::NonFiniteLoss, "step " + std::to_string(step) + ": " + e.what());
            }
            throw;
        }

        if (config.eval_every > 0 && (step + 1) % config.eval_every == 0 && !test_idx.empty()) {
            report.snapshots.push_back({step + 1, held_out_loss(params, dataset, test_idx, config, threads)});
        }
    }

    report.vision_fingerprint_after = dataset.towers.vision.fingerprint();
    report.text_fingerprint_after = dataset.towers.text.fingerprint();
    report.wall_clock_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return result;
}

void write_loss_curve_csv(const std::vector<LossBreakdown>& curve, const fs::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot open for writing: " + path.string());
    out << "step,con_a2v,con_v2a,distill,total\n";
    out.precision(17);
    for (std::size_t i = 0; i < curve.size(); ++i) {
        const auto& l = curve[i];
        out << i << ',' << l.con_audio_to_ct << ',' << l.con_ct_to_audio << ',' << l.distill << ',' << l.total
            << '\n';
    }
    if (!out) throw Error(ErrorCode::IoError, "failed writing " + path.string());
}

TrainResult train(const TrainConfig& config, const Dataset& dataset, const fs::path& out_dir, unsigned threads) {
    TrainResult result = train(config, dataset, threads);
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw Error(ErrorCode::IoError, "cannot create " + out_dir.string() + ": " + ec.message());

    const fs::path checkpoint = out_dir / "checkpoint.xmdt";
    save_checkpoint(result.params, checkpoint);
    result.report.checkpoint_path = checkpoint;
    write_loss_curve_csv(result.report.loss_curve, out_dir / "loss_curve.csv");

    std::ofstream out(out_dir / "train_report.json", std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot write train_report.json");
    out << to_json(result.report).dump(2) << '\n';
    if (!out) throw Error(ErrorCode::IoError, "failed writing train_report.json");
    return result;
}

}  // namespace voxalign
