#include "microkd/kernels.hpp"

#include <cmath>
#include <cstdlib>
#include <cstring>

#include "microkd/util.hpp"

#if defined(__x86_64__) || defined(_M_X64)
#define MKD_X86 1
#include <immintrin.h>
#else
#define MKD_X86 0
#endif

namespace mkd::kern {

namespace scalar {

double dot(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

void axpy(double a, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

void scal(double a, double* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) x[i] *= a;
}

double vsum(const double* x, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += x[i];
  return s;
}

double vmax(const double* x, std::size_t n) {
  double m = x[0];
  for (std::size_t i = 1; i < n; ++i)
    if (x[i] > m) m = x[i];
  return m;
}

void adam_step(double* p, double* m, double* v, const double* g, std::size_t n,
               double lr, double b1, double b2, double eps, double bc1, double bc2) {
  for (std::size_t i = 0; i < n; ++i) {
    m[i] = b1 * m[i] + (1.0 - b1) * g[i];
    v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
    double mhat = m[i] * bc1;
    double vhat = v[i] * bc2;
    p[i] -= lr * mhat / (std::sqrt(vhat) + eps);
  }
}

}  // namespace scalar

#if MKD_X86

namespace avx2 {

__attribute__((target("avx2,fma"))) static double hsum4(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d shuf = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, shuf));
}

__attribute__((target("avx2,fma"))) double dot(const double* a, const double* b,
                                               std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    acc = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc);
  }
  double s = hsum4(acc);
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

__attribute__((target("avx2,fma"))) void axpy(double a, const double* x, double* y,
                                              std::size_t n) {
  __m256d va = _mm256_set1_pd(a);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d vy = _mm256_loadu_pd(y + i);
    vy = _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), vy);
    _mm256_storeu_pd(y + i, vy);
  }
  for (; i < n; ++i) y[i] += a * x[i];
}

__attribute__((target("avx2,fma"))) void scal(double a, double* x, std::size_t n) {
  __m256d va = _mm256_set1_pd(a);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(x + i, _mm256_mul_pd(va, _mm256_loadu_pd(x + i)));
  }
  for (; i < n; ++i) x[i] *= a;
}

__attribute__((target("avx2,fma"))) double vsum(const double* x, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) acc = _mm256_add_pd(acc, _mm256_loadu_pd(x + i));
  double s = hsum4(acc);
  for (; i < n; ++i) s += x[i];
  return s;
}

__attribute__((target("avx2,fma"))) double vmax(const double* x, std::size_t n) {
  std::size_t i = 0;
  double m = x[0];
  if (n >= 4) {
    __m256d vm = _mm256_loadu_pd(x);
    for (i = 4; i + 4 <= n; i += 4) vm = _mm256_max_pd(vm, _mm256_loadu_pd(x + i));
    __m128d lo = _mm256_castpd256_pd128(vm);
    __m128d hi = _mm256_extractf128_pd(vm, 1);
    lo = _mm_max_pd(lo, hi);
    __m128d shuf = _mm_unpackhi_pd(lo, lo);
    m = _mm_cvtsd_f64(_mm_max_sd(lo, shuf));
  }
  for (; i < n; ++i)
    if (x[i] > m) m = x[i];
  return m;
}

__attribute__((target("avx2,fma"))) void adam_step(double* p, double* m, double* v,
                                                   const double* g, std::size_t n,
                                                   double lr, double b1, double b2,
                                                   double eps, double bc1, double bc2) {
  __m256d vb1 = _mm256_set1_pd(b1);
  __m256d vb2 = _mm256_set1_pd(b2);
  __m256d vq1 = _mm256_set1_pd(1.0 - b1);
  __m256d vq2 = _mm256_set1_pd(1.0 - b2);
  __m256d vlr = _mm256_set1_pd(lr);
  __m256d veps = _mm256_set1_pd(eps);
  __m256d vbc1 = _mm256_set1_pd(bc1);
  __m256d vbc2 = _mm256_set1_pd(bc2);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d vg = _mm256_loadu_pd(g + i);
    __m256d vm = _mm256_fmadd_pd(vb1, _mm256_loadu_pd(m + i), _mm256_mul_pd(vq1, vg));
    __m256d vv = _mm256_fmadd_pd(vb2, _mm256_loadu_pd(v + i),
                                 _mm256_mul_pd(vq2, _mm256_mul_pd(vg, vg)));
    _mm256_storeu_pd(m + i, vm);
    _mm256_storeu_pd(v + i, vv);
    __m256d mhat = _mm256_mul_pd(vm, vbc1);
    __m256d vhat = _mm256_mul_pd(vv, vbc2);
    __m256d denom = _mm256_add_pd(_mm256_sqrt_pd(vhat), veps);
    __m256d upd = _mm256_div_pd(_mm256_mul_pd(vlr, mhat), denom);
    _mm256_storeu_pd(p + i, _mm256_sub_pd(_mm256_loadu_pd(p + i), upd));
  }
  scalar::adam_step(p + i, m + i, v + i, g + i, n - i, lr, b1, b2, eps, bc1, bc2);
}

}  // namespace avx2

#endif  // MKD_X86

namespace {

struct Table {
  double (*dot)(const double*, const double*, std::size_t);
  void (*axpy)(double, const double*, double*, std::size_t);
  void (*scal)(double, double*, std::size_t);
  double (*vsum)(const double*, std::size_t);
  double (*vmax)(const double*, std::size_t);
  void (*adam)(double*, double*, double*, const double*, std::size_t, double, double,
               double, double, double, double);
};

constexpr Table kScalarTable{scalar::dot, scalar::axpy, scalar::scal,
                             scalar::vsum, scalar::vmax, scalar::adam_step};

#if MKD_X86
const Table kAvx2Table{avx2::dot, avx2::axpy, avx2::scal,
                       avx2::vsum, avx2::vmax, avx2::adam_step};
#endif

Backend g_backend = Backend::scalar;
const Table* g_table = &kScalarTable;
bool g_initialized = false;

void apply_backend(Backend b) {
  g_backend = b;
#if MKD_X86
  g_table = (b == Backend::avx2) ? &kAvx2Table : &kScalarTable;
#else
  g_table = &kScalarTable;
#endif
}

void init_once() {
  if (g_initialized) return;
  g_initialized = true;
  Backend pick = avx2_supported() ? Backend::avx2 : Backend::scalar;
  if (const char* env = std::getenv("MICROKD_KERNELS")) {
    if (std::strcmp(env, "scalar") == 0) pick = Backend::scalar;
    else if (std::strcmp(env, "avx2") == 0) {
      if (!avx2_supported()) throw ConfigError("MICROKD_KERNELS=avx2 unsupported on this cpu");
      pick = Backend::avx2;
    } else if (std::strcmp(env, "auto") != 0) {
      throw ConfigError(std::string("MICROKD_KERNELS: unknown backend '") + env + "'");
    }
  }
  apply_backend(pick);
}

}  // namespace

bool avx2_supported() {
#if MKD_X86
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Backend active_backend() {
  init_once();
  return g_backend;
}

const char* backend_name(Backend b) {
  return b == Backend::avx2 ? "avx2" : "scalar";
}

void set_backend(Backend b) {
  init_once();
  if (b == Backend::avx2 && !avx2_supported())
    throw ConfigError("avx2 backend unsupported on this cpu");
  apply_backend(b);
}

double dot(const double* a, const double* b, std::size_t n) {
  init_once();
  return g_table->dot(a, b, n);
}

void axpy(double a, const double* x, double* y, std::size_t n) {
  init_once();
  g_table->axpy(a, x, y, n);
}

void scal(double a, double* x, std::size_t n) {
  init_once();
  g_table->scal(a, x, n);
}

double vsum(const double* x, std::size_t n) {
  init_once();
  return g_table->vsum(x, n);
}

double vmax(const double* x, std::size_t n) {
  init_once();
  if (n == 0) throw ContractError("vmax over empty range");
  return g_table->vmax(x, n);
}

void adam_step(double* p, double* m, double* v, const double* g, std::size_t n,
               double lr, double b1, double b2, double eps, double bc1, double bc2) {
  init_once();
  g_table->adam(p, m, v, g, n, lr, b1, b2, eps, bc1, bc2);
}

}  // namespace mkd::kern
