#pragma once

// Data-parallel inner loops used by every latent-space and encoder routine.
//
// Each kernel has a portable scalar reference and, on x86-64, an AVX2/FMA
// variant compiled into its own translation unit. The active variant is picked
// once at startup from CPUID and can be overridden with select_backend().
//
// Elementwise kernels (axpy, scale, adam_update) perform the same IEEE
// operations in the same order on every backend and are bit-identical.
// Reductions (dot) use lane-parallel partial sums and agree to rounding only.

#include <cstddef>
#include <span>
#include <vector>

namespace voxalign::kernels {

enum class Backend { Scalar, Avx2 };

struct AdamCoefficients {
    double learning_rate;
    double beta1;
    double beta2;
    double epsilon;
    double bias_correction1;  // 1 - beta1^t
    double bias_correction2;  // 1 - beta2^t
};

struct KernelTable {
    double (*dot)(const double* a, const double* b, std::size_t n);
    // y += alpha * x
    void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
    // x *= alpha
    void (*scale)(double alpha, double* x, std::size_t n);
    void (*adam_update)(double* param, const double* grad, double* m, double* v, std::size_t n,
                        const AdamCoefficients& c);
};

const char* backend_name(Backend backend) noexcept;
bool backend_supported(Backend backend) noexcept;
/// Best backend this CPU supports.
Backend detect_backend() noexcept;
Backend active_backend() noexcept;
/// Throws voxalign::Error(InvalidConfig) if the backend is not available.
void select_backend(Backend backend);
/// Kernel table for a specific backend; used by equivalence tests.
const KernelTable& table_for(Backend backend);
const KernelTable& active();

// Span conveniences over the active table.
double dot(std::span<const double> a, std::span<const double> b);
void axpy(double alpha, std::span<const double> x, std::span<double> y);
void scale(double alpha, std::span<double> x);

/// y = W x + bias, W row-major rows x cols. bias may be empty.
void gemv(std::span<const double> w, std::size_t rows, std::size_t cols, std::span<const double> x,
          std::span<const double> bias, std::span<double> y);
/// x_grad += W^T g
void gemv_transpose_accumulate(std::span<const double> w, std::size_t rows, std::size_t cols,
                               std::span<const double> g, std::span<double> x_grad);
/// W_grad += u x^T
void rank1_accumulate(std::span<const double> u, std::span<const double> x, std::span<double> w_grad);

namespace detail {
extern const KernelTable scalar_table;
#if defined(VOXALIGN_HAVE_AVX2)
extern const KernelTable avx2_table;
#endif
}  // namespace detail

}  // namespace voxalign::kernels
