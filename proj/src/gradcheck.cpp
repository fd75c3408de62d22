#include "voxalign/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <optional>

#include "voxalign/encoders.hpp"
#include "voxalign/losses.hpp"
#include "voxalign/rng.hpp"
#include "voxalign/windowing.hpp"

namespace voxalign {
namespace {

struct GridPoint {
    std::size_t n;
    std::size_t d;
    double lambda;
};

std::vector<GridPoint> grid() {
    std::vector<GridPoint> g;
    for (std::size_t n : {2, 4, 8})
        for (std::size_t d : {8, 16})
            for (double lambda : {0.0, 0.5, 1.0}) g.push_back({n, d, lambda});
    return g;
}

std::vector<double> gaussian(Rng& rng, std::size_t n) {
    std::vector<double> v(n);
    for (double& x : v) x = rng.normal();
    return v;
}

struct Worst {
    double error = 0.0;
    std::string where;
    double analytic = 0.0;
    double numeric = 0.0;

    void offer(double err, std::string location, double a, double f) {
        if (err > error || where.empty()) {
            error = err;
            where = std::move(location);
            analytic = a;
            numeric = f;
        }
    }
};

// Loss-level check: perturb each raw audio coordinate.
Worst check_embeddings(Rng& rng, const GridPoint& p, double temperature, const GradcheckOptions& opt) {
    std::vector<std::vector<double>> raw(p.n);
    std::vector<Embedding> vision;
    std::vector<Embedding> text;
    for (std::size_t i = 0; i < p.n; ++i) {
        raw[i] = gaussian(rng, p.d);
        vision.push_back(l2_normalize(gaussian(rng, p.d)));
        text.push_back(l2_normalize(gaussian(rng, p.d)));
    }
    const LossOptions options{p.lambda, temperature};
    const LossGradient lg = total_loss_gradient(raw, vision, text, options);

    Worst worst;
    for (std::size_t i = 0; i < p.n; ++i) {
        for (std::size_t k = 0; k < p.d; ++k) {
            auto shifted = raw;
            shifted[i][k] = raw[i][k] + opt.step;
            const double up = total_loss_gradient(shifted, vision, text, options).loss.total;
            shifted[i][k] = raw[i][k] - opt.step;
            const double down = total_loss_gradient(shifted, vision, text, options).loss.total;
            const double numeric = (up - down) / (2.0 * opt.step);
            const double analytic = opt.flip_sign ? -lg.d_raw_audio[i][k] : lg.d_raw_audio[i][k];
            worst.offer(relative_error(analytic, numeric, opt.floor),
                        "audio[" + std::to_string(i) + "][" + std::to_string(k) + "]", analytic, numeric);
        }
    }
    return worst;
}

// End-to-end check: perturb every student parameter; the loss sees audio only
// through windowing, the student, pooling and normalization.
Worst check_parameters(Rng& rng, const GridPoint& p, double temperature, const GradcheckOptions& opt) {
    constexpr std::size_t kFeatures = 6;
    constexpr std::size_t kFrames = 7;
    const WindowSettings windows{4.0, 1.0};  // windows [0,4) and [3,7) at 1 Hz

    StudentArchitecture arch{kFeatures, {5}, p.d, Activation::Tanh};
    StudentEncoderParams params = init_student(arch, rng.next_u64());
    for (auto& layer : params.layers)
        for (double& b : layer.bias) b = 0.1 * rng.normal();

    std::vector<AudioSignal> audio(p.n);
    std::vector<Embedding> vision;
    std::vector<Embedding> text;
    for (std::size_t i = 0; i < p.n; ++i) {
        audio[i] = AudioSignal{kFeatures, 1.0, gaussian(rng, kFrames * kFeatures)};
        vision.push_back(l2_normalize(gaussian(rng, p.d)));
        text.push_back(l2_normalize(gaussian(rng, p.d)));
    }
    const LossOptions options{p.lambda, temperature};

    auto loss_at = [&](const StudentEncoderParams& w) {
        std::vector<std::vector<double>> raw;
        for (const auto& a : audio) raw.push_back(encode_long_audio_traced(a, w, windows).pooled_raw);
        return total_loss_gradient(raw, vision, text, options).loss.total;
    };

    std::vector<LongAudioTrace> traces;
    std::vector<std::vector<double>> raw;
    for (const auto& a : audio) {
        traces.push_back(encode_long_audio_traced(a, params, windows));
        raw.push_back(traces.back().pooled_raw);
    }
    const LossGradient lg = total_loss_gradient(raw, vision, text, options);
    StudentEncoderParams grads = params.zeros_like();
    for (std::size_t i = 0; i < p.n; ++i) backward_long_audio(params, traces[i], lg.d_raw_audio[i], grads);

    Worst worst;
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
        for (int which = 0; which < 2; ++which) {
            const std::size_t count = which == 0 ? params.layers[l].weights.size() : params.layers[l].bias.size();
            for (std::size_t k = 0; k < count; ++k) {
                StudentEncoderParams shifted = params;
                double& slot = which == 0 ? shifted.layers[l].weights[k] : shifted.layers[l].bias[k];
                const double base = slot;
                slot = base + opt.step;
                const double up = loss_at(shifted);
                slot = base - opt.step;
                const double down = loss_at(shifted);
                const double numeric = (up - down) / (2.0 * opt.step);
                double analytic = which == 0 ? grads.layers[l].weights[k] : grads.layers[l].bias[k];
                if (opt.flip_sign) analytic = -analytic;
                worst.offer(relative_error(analytic, numeric, opt.floor),
                            "layer" + std::to_string(l) + (which == 0 ? ".weights[" : ".bias[") + std::to_string(k) + "]",
                            analytic, numeric);
            }
        }
    }
    return worst;
}

}  // namespace

double relative_error(double analytic, double numeric, double floor) {
    const double scale = std::max({std::abs(analytic), std::abs(numeric), floor});
    return std::abs(analytic - numeric) / scale;
}

GradcheckReport run_gradcheck(const GradcheckOptions& options) {
    const auto points = grid();
    GradcheckReport report;
    for (std::size_t t = 0; t < options.trials; ++t) {
        Rng rng(derive_seed(options.seed, t));
        const GridPoint p = points[t % points.size()];
        const double temperature = t < points.size() ? 1.0 : 0.5 + 1.5 * rng.uniform();

        const Worst emb = check_embeddings(rng, p, temperature, options);
        const Worst par = check_parameters(rng, p, temperature, options);

        GradcheckTrial trial;
        trial.batch_size = p.n;
        trial.embed_dim = p.d;
        trial.lambda = p.lambda;
        trial.temperature = temperature;
        trial.embedding_max_rel_error = emb.error;
        trial.parameter_max_rel_error = par.error;
        const Worst& w = emb.error >= par.error ? emb : par;
        trial.worst_coordinate = w.where;
        trial.worst_analytic = w.analytic;
        trial.worst_numeric = w.numeric;

        const double err = std::max(emb.error, par.error);
        if (t == 0 || err > report.max_rel_error) {
            report.max_rel_error = err;
            report.worst_trial = t;
        }
        report.trials.push_back(std::move(trial));
    }
    report.passed = !report.trials.empty() && report.max_rel_error < options.tolerance;
    return report;
}

}  // namespace voxalign
