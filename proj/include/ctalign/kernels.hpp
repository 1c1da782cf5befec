#pragma once

// Dense inner-loop kernels. Every kernel has a scalar reference
// implementation; vectorized variants are picked once at startup from what
// the CPU reports, and can be overridden with CTALIGN_KERNELS=scalar|avx2|neon
// or force_backend().

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

namespace ctalign::kernels {

enum class Backend { kScalar, kAvx2, kNeon };

std::string_view backend_name(Backend backend);

// Backends compiled in and supported by the running CPU. kScalar is always
// first.
std::vector<Backend> available_backends();

Backend active_backend();

// Throws ConfigError when the backend is unavailable on this machine.
void force_backend(Backend backend);

double dot(std::span<const double> a, std::span<const double> b);

// y += alpha * x
void axpy(double alpha, std::span<const double> x, std::span<double> y);

// Sum of elements.
double sum(std::span<const double> x);

namespace scalar {
double dot(const double* a, const double* b, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
double sum(const double* x, std::size_t n);
}  // namespace scalar

#if defined(CTALIGN_HAVE_AVX2)
namespace avx2 {
double dot(const double* a, const double* b, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
double sum(const double* x, std::size_t n);
}  // namespace avx2
#endif

#if defined(CTALIGN_HAVE_NEON)
namespace neon {
double dot(const double* a, const double* b, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
double sum(const double* x, std::size_t n);
}  // namespace neon
#endif

}  // namespace ctalign::kernels
