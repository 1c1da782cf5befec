#include <atomic>
#include <cstdlib>
#include <string>

#include "ctalign/error.hpp"
#include "ctalign/kernels.hpp"

namespace ctalign::kernels {

namespace {

struct Table {
  Backend backend;
  double (*dot)(const double*, const double*, std::size_t);
  void (*axpy)(double, const double*, double*, std::size_t);
  double (*sum)(const double*, std::size_t);
};

constexpr Table kScalarTable{Backend::kScalar, &scalar::dot, &scalar::axpy,
                             &scalar::sum};
#if defined(CTALIGN_HAVE_AVX2)
constexpr Table kAvx2Table{Backend::kAvx2, &avx2::dot, &avx2::axpy,
                           &avx2::sum};
#endif
#if defined(CTALIGN_HAVE_NEON)
constexpr Table kNeonTable{Backend::kNeon, &neon::dot, &neon::axpy,
                           &neon::sum};
#endif

bool cpu_supports(Backend backend) {
  switch (backend) {
    case Backend::kScalar:
      return true;
    case Backend::kAvx2:
#if defined(CTALIGN_HAVE_AVX2)
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
      return false;
#endif
    case Backend::kNeon:
#if defined(CTALIGN_HAVE_NEON)
      return true;
#else
      return false;
#endif
  }
  return false;
}

const Table* table_for(Backend backend) {
  switch (backend) {
    case Backend::kScalar:
      return &kScalarTable;
    case Backend::kAvx2:
#if defined(CTALIGN_HAVE_AVX2)
      return &kAvx2Table;
#else
      return nullptr;
#endif
    case Backend::kNeon:
#if defined(CTALIGN_HAVE_NEON)
      return &kNeonTable;
#else
      return nullptr;
#endif
  }
  return nullptr;
}

const Table* detect() {
  if (const char* env = std::getenv("CTALIGN_KERNELS")) {
    const std::string want(env);
    for (Backend b : available_backends()) {
      if (backend_name(b) == want) return table_for(b);
    }
  }
  return table_for(available_backends().back());
}

std::atomic<const Table*>& current() {
  static std::atomic<const Table*> table{detect()};
  return table;
}

void check_sizes(std::size_t a, std::size_t b) {
  if (a != b) {
    throw ShapeError("kernel operands differ in length: " + std::to_string(a) +
                     " vs " + std::to_string(b));
  }
}

}  // namespace

std::string_view backend_name(Backend backend) {
  switch (backend) {
    case Backend::kScalar:
      return "scalar";
    case Backend::kAvx2:
      return "avx2";
    case Backend::kNeon:
      return "neon";
  }
  return "unknown";
}

std::vector<Backend> available_backends() {
  std::vector<Backend> out;
  for (Backend b : {Backend::kScalar, Backend::kAvx2, Backend::kNeon}) {
    if (table_for(b) != nullptr && cpu_supports(b)) out.push_back(b);
  }
  return out;
}

Backend active_backend() { return current().load()->backend; }

void force_backend(Backend backend) {
  if (table_for(backend) == nullptr || !cpu_supports(backend)) {
    throw ConfigError("kernel backend '" + std::string(backend_name(backend)) +
                      "' is not available on this machine");
  }
  current().store(table_for(backend));
}

double dot(std::span<const double> a, std::span<const double> b) {
  check_sizes(a.size(), b.size());
  return current().load()->dot(a.data(), b.data(), a.size());
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  check_sizes(x.size(), y.size());
  current().load()->axpy(alpha, x.data(), y.data(), x.size());
}

double sum(std::span<const double> x) {
  return current().load()->sum(x.data(), x.size());
}

}  // namespace ctalign::kernels
