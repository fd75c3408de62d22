#include <atomic>
#include <string>

#include "voxalign/error.hpp"
#include "voxalign/kernels.hpp"

namespace voxalign::kernels {
namespace {

bool cpu_has_avx2() noexcept {
#if defined(VOXALIGN_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
    __builtin_cpu_init();
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

std::atomic<const KernelTable*>& active_slot() {
    static std::atomic<const KernelTable*> slot{&table_for(detect_backend())};
    return slot;
}

std::atomic<Backend>& active_backend_slot() {
    static std::atomic<Backend> slot{detect_backend()};
    return slot;
}

void check_same_size(std::size_t a, std::size_t b, const char* what) {
    if (a != b) {
        throw Error(ErrorCode::DimensionMismatch,
                    std::string(what) + ": " + std::to_string(a) + " vs " + std::to_string(b));
    }
}

}  // namespace

const char* backend_name(Backend backend) noexcept {
    switch (backend) {
        case Backend::Scalar: return "scalar";
        case Backend::Avx2: return "avx2";
    }
    return "unknown";
}

bool backend_supported(Backend backend) noexcept {
    switch (backend) {
        case Backend::Scalar: return true;
        case Backend::Avx2: return cpu_has_avx2();
    }
    return false;
}

Backend detect_backend() noexcept {
    return backend_supported(Backend::Avx2) ? Backend::Avx2 : Backend::Scalar;
}

Backend active_backend() noexcept { return active_backend_slot().load(); }

void select_backend(Backend backend) {
    if (!backend_supported(backend)) {
        throw Error(ErrorCode::InvalidConfig, std::string("kernel backend not supported on this CPU: ") +
                                                  backend_name(backend));
    }
    active_slot().store(&table_for(backend));
    active_backend_slot().store(backend);
}

const KernelTable& table_for(Backend backend) {
    switch (backend) {
        case Backend::Scalar: return detail::scalar_table;
        case Backend::Avx2:
#if defined(VOXALIGN_HAVE_AVX2)
            if (cpu_has_avx2()) return detail::avx2_table;
#endif
            break;
    }
    throw Error(ErrorCode::InvalidConfig, std::string("kernel backend unavailable: ") + backend_name(backend));
}

const KernelTable& active() { return *active_slot().load(std::memory_order_relaxed); }

double dot(std::span<const double> a, std::span<const double> b) {
    check_same_size(a.size(), b.size(), "dot");
    return active().dot(a.data(), b.data(), a.size());
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
    check_same_size(x.size(), y.size(), "axpy");
    active().axpy(alpha, x.data(), y.data(), x.size());
}

void scale(double alpha, std::span<double> x) { active().scale(alpha, x.data(), x.size()); }

void gemv(std::span<const double> w, std::size_t rows, std::size_t cols, std::span<const double> x,
          std::span<const double> bias, std::span<double> y) {
    check_same_size(w.size(), rows * cols, "gemv weights");
    check_same_size(x.size(), cols, "gemv input");
    check_same_size(y.size(), rows, "gemv output");
    if (!bias.empty()) check_same_size(bias.size(), rows, "gemv bias");
    const KernelTable& k = active();
    for (std::size_t r = 0; r < rows; ++r) {
        const double acc = k.dot(w.data() + r * cols, x.data(), cols);
        y[r] = bias.empty() ? acc : acc + bias[r];
    }
}

void gemv_transpose_accumulate(std::span<const double> w, std::size_t rows, std::size_t cols,
                               std::span<const double> g, std::span<double> x_grad) {
    check_same_size(w.size(), rows * cols, "gemv_t weights");
    check_same_size(g.size(), rows, "gemv_t upstream");
    check_same_size(x_grad.size(), cols, "gemv_t output");
    const KernelTable& k = active();
    for (std::size_t r = 0; r < rows; ++r) {
        k.axpy(g[r], w.data() + r * cols, x_grad.data(), cols);
    }
}

void rank1_accumulate(std::span<const double> u, std::span<const double> x, std::span<double> w_grad) {
    check_same_size(w_grad.size(), u.size() * x.size(), "rank1 target");
    const KernelTable& k = active();
    const std::size_t cols = x.size();
    for (std::size_t r = 0; r < u.size(); ++r) {
        k.axpy(u[r], x.data(), w_grad.data() + r * cols, cols);
    }
}

}  // namespace voxalign::kernels
