#pragma once

#include <cstddef>
#include <string>

namespace mkd::kern {

enum class Backend { scalar, avx2 };

/// Backend in effect (auto-detected on first use; honors MICROKD_KERNELS
/// env var, values "scalar" / "avx2" / "auto").
Backend active_backend();
const char* backend_name(Backend b);

/// Overrides the backend. Throws ConfigError if the requested backend is
/// not supported on this machine.
void set_backend(Backend b);

bool avx2_supported();

/// sum_i a[i] * b[i]
double dot(const double* a, const double* b, std::size_t n);

/// y[i] += a * x[i]
void axpy(double a, const double* x, double* y, std::size_t n);

/// x[i] *= a
void scal(double a, double* x, std::size_t n);

double vsum(const double* x, std::size_t n);

/// Largest element; n must be >= 1.
double vmax(const double* x, std::size_t n);

/// One fused Adam update over a parameter block.
/// m <- b1*m + (1-b1)*g ; v <- b2*v + (1-b2)*g^2 ;
/// p <- p - lr * (m*bc1) / (sqrt(v*bc2) + eps)
/// where bc1 = 1/(1-b1^t), bc2 = 1/(1-b2^t) are passed in precomputed.
void adam_step(double* p, double* m, double* v, const double* g, std::size_t n,
               double lr, double b1, double b2, double eps, double bc1, double bc2);

// Scalar reference implementations, always available (used by the
// equivalence tests as the oracle).
namespace scalar {
double dot(const double* a, const double* b, std::size_t n);
void axpy(double a, const double* x, double* y, std::size_t n);
void scal(double a, double* x, std::size_t n);
double vsum(const double* x, std::size_t n);
double vmax(const double* x, std::size_t n);
void adam_step(double* p, double* m, double* v, const double* g, std::size_t n,
               double lr, double b1, double b2, double eps, double bc1, double bc2);
}  // namespace scalar

}  // namespace mkd::kern
