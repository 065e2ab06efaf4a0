#pragma once

// Data-parallel signal kernels.
//
// Every kernel has a plain serial reference implementation and an OpenMP
// implementation. Each output element is computed by exactly the same
// arithmetic in both, so the two agree bit-for-bit; the serial versions exist
// for testing and benchmarking. The FFT correlator is the exception: it is a
// different algorithm and is checked against the direct form to a tolerance.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <span>
#include <vector>

namespace usm::kernels {

using cplx = std::complex<double>;

enum class Exec { Serial, Parallel };

// Below this many outputs the OpenMP variants stay single-threaded.
inline constexpr std::ptrdiff_t kParallelThreshold = 4096;

// ---------------------------------------------------------------------------
// FIR evaluated at selected output indices.
//
//   y[k] = sum_m h[m] * x[first + k*step - m],   x = 0 outside its range
//
// With first = 0, step = 1 and y.size() = x.size() + h.size() - 1 this is the
// full linear convolution.
// ---------------------------------------------------------------------------

template <class T>
void fir_at_serial(std::span<const T> x, std::span<const double> h, std::ptrdiff_t first,
                   std::ptrdiff_t step, std::span<T> y) {
  const auto nx = static_cast<std::ptrdiff_t>(x.size());
  const auto nh = static_cast<std::ptrdiff_t>(h.size());
  const auto ny = static_cast<std::ptrdiff_t>(y.size());
  for (std::ptrdiff_t k = 0; k < ny; ++k) {
    const std::ptrdiff_t n = first + k * step;
    const std::ptrdiff_t m_lo = std::max<std::ptrdiff_t>(0, n - nx + 1);
    const std::ptrdiff_t m_hi = std::min<std::ptrdiff_t>(nh - 1, n);
    T acc{};
    for (std::ptrdiff_t m = m_lo; m <= m_hi; ++m) acc += h[m] * x[n - m];
    y[k] = acc;
  }
}

template <class T>
void fir_at_omp(std::span<const T> x, std::span<const double> h, std::ptrdiff_t first,
                std::ptrdiff_t step, std::span<T> y) {
  const auto nx = static_cast<std::ptrdiff_t>(x.size());
  const auto nh = static_cast<std::ptrdiff_t>(h.size());
  const auto ny = static_cast<std::ptrdiff_t>(y.size());
#pragma omp parallel for schedule(static) if (ny > kParallelThreshold)
  for (std::ptrdiff_t k = 0; k < ny; ++k) {
    const std::ptrdiff_t n = first + k * step;
    const std::ptrdiff_t m_lo = std::max<std::ptrdiff_t>(0, n - nx + 1);
    const std::ptrdiff_t m_hi = std::min<std::ptrdiff_t>(nh - 1, n);
    T acc{};
    for (std::ptrdiff_t m = m_lo; m <= m_hi; ++m) acc += h[m] * x[n - m];
    y[k] = acc;
  }
}

template <class T>
void fir_at(std::span<const T> x, std::span<const double> h, std::ptrdiff_t first,
            std::ptrdiff_t step, std::span<T> y, Exec exec = Exec::Parallel) {
  if (exec == Exec::Serial)
    fir_at_serial(x, h, first, step, y);
  else
    fir_at_omp(x, h, first, step, y);
}

template <class T>
std::vector<T> convolve(std::span<const T> x, std::span<const double> h,
                        Exec exec = Exec::Parallel) {
  if (x.empty() || h.empty()) return {};
  std::vector<T> y(x.size() + h.size() - 1);
  fir_at<T>(x, h, 0, 1, y, exec);
  return y;
}

// ---------------------------------------------------------------------------
// Zero-stuffing interpolator (polyphase form).
//
//   y = (x upsampled by L with L-1 zeros between samples) * h
//   y.size() = x.size()*L + h.size() - 1
// ---------------------------------------------------------------------------

template <class T>
void interpolate_serial(std::span<const T> x, std::span<const double> h, int L, std::span<T> y) {
  const auto nx = static_cast<std::ptrdiff_t>(x.size());
  const auto nh = static_cast<std::ptrdiff_t>(h.size());
  const auto ny = static_cast<std::ptrdiff_t>(y.size());
  for (std::ptrdiff_t n = 0; n < ny; ++n) {
    T acc{};
    // input index j contributes h[n - j*L]
    std::ptrdiff_t j_hi = std::min<std::ptrdiff_t>(nx - 1, n / L);
    for (std::ptrdiff_t j = j_hi; j >= 0; --j) {
      const std::ptrdiff_t m = n - j * L;
      if (m >= nh) break;
      acc += h[m] * x[j];
    }
    y[n] = acc;
  }
}

template <class T>
void interpolate_omp(std::span<const T> x, std::span<const double> h, int L, std::span<T> y) {
  const auto nx = static_cast<std::ptrdiff_t>(x.size());
  const auto nh = static_cast<std::ptrdiff_t>(h.size());
  const auto ny = static_cast<std::ptrdiff_t>(y.size());
#pragma omp parallel for schedule(static) if (ny > kParallelThreshold)
  for (std::ptrdiff_t n = 0; n < ny; ++n) {
    T acc{};
    std::ptrdiff_t j_hi = std::min<std::ptrdiff_t>(nx - 1, n / L);
    for (std::ptrdiff_t j = j_hi; j >= 0; --j) {
      const std::ptrdiff_t m = n - j * L;
      if (m >= nh) break;
      acc += h[m] * x[j];
    }
    y[n] = acc;
  }
}

template <class T>
std::vector<T> interpolate(std::span<const T> x, std::span<const double> h, int L,
                           Exec exec = Exec::Parallel) {
  if (x.empty() || h.empty()) return {};
  std::vector<T> y(x.size() * static_cast<std::size_t>(L) + h.size() - 1);
  if (exec == Exec::Serial)
    interpolate_serial<T>(x, h, L, y);
  else
    interpolate_omp<T>(x, h, L, y);
  return y;
}

// ---------------------------------------------------------------------------
// Sliding cross-correlation of a real signal against a complex template.
//
//   c[lag] = sum_m x[lag + m] * conj(t[m]),   lag in [0, c.size())
//
// x is treated as zero past its end.
// ---------------------------------------------------------------------------

void xcorr_direct_serial(std::span<const double> x, std::span<const cplx> t, std::span<cplx> c);
void xcorr_direct_omp(std::span<const double> x, std::span<const cplx> t, std::span<cplx> c);
/// Overlap-save FFT correlation (FFTW). Blocks are processed in parallel.
void xcorr_fft(std::span<const double> x, std::span<const cplx> t, std::span<cplx> c);

/// Picks the direct form for short problems and the FFT form otherwise.
std::vector<cplx> xcorr(std::span<const double> x, std::span<const cplx> t, std::size_t n_lags);

/// e[lag] = sum_{m < window} x[lag + m]^2 for lag in [0, n_lags).
std::vector<double> window_energy(std::span<const double> x, std::size_t window,
                                  std::size_t n_lags);

// ---------------------------------------------------------------------------
// Band-limited (Kaiser-windowed sinc, 31 taps) interpolation.
//
//   y[n] = x(t0 + n * step)
//
// Positions outside the input read as zero.
// ---------------------------------------------------------------------------

class SincTable {
 public:
  static constexpr int kHalfWidth = 15;  // taps -15..15
  static constexpr int kTaps = 2 * kHalfWidth + 1;
  static constexpr double kBeta = 12.0;
  static constexpr int kPhases = 2048;   // table resolution over [-0.5, 0.5]

  static const SincTable& instance();

  /// Fills w[0..kTaps) with the weights for samples round(t)-15 .. round(t)+15,
  /// where d = t - round(t) in [-0.5, 0.5].
  void weights(double d, double* w) const;

  /// Exact (untabulated) kernel value, used to build the table and in tests.
  static double kernel(double x);

 private:
  SincTable();
  std::vector<double> table_;  // (kPhases + 1) x kTaps
};

template <class T>
T sample_at(std::span<const T> x, double t, const SincTable& table) {
  const double r = std::round(t);
  const auto center = static_cast<std::ptrdiff_t>(r);
  const auto n = static_cast<std::ptrdiff_t>(x.size());
  double w[SincTable::kTaps];
  if (t - r == 0.0) return (center >= 0 && center < n) ? x[center] : T{};
  table.weights(t - r, w);
  T acc{};
  for (int m = -SincTable::kHalfWidth; m <= SincTable::kHalfWidth; ++m) {
    const std::ptrdiff_t i = center + m;
    if (i < 0 || i >= n) continue;
    acc += w[m + SincTable::kHalfWidth] * x[i];
  }
  return acc;
}

template <class T>
void resample_serial(std::span<const T> x, double t0, double step, std::span<T> y) {
  const auto& table = SincTable::instance();
  const auto ny = static_cast<std::ptrdiff_t>(y.size());
  for (std::ptrdiff_t k = 0; k < ny; ++k) y[k] = sample_at(x, t0 + static_cast<double>(k) * step, table);
}

template <class T>
void resample_omp(std::span<const T> x, double t0, double step, std::span<T> y) {
  const auto& table = SincTable::instance();
  const auto ny = static_cast<std::ptrdiff_t>(y.size());
#pragma omp parallel for schedule(static) if (ny > kParallelThreshold)
  for (std::ptrdiff_t k = 0; k < ny; ++k) y[k] = sample_at(x, t0 + static_cast<double>(k) * step, table);
}

template <class T>
void resample(std::span<const T> x, double t0, double step, std::span<T> y,
              Exec exec = Exec::Parallel) {
  if (exec == Exec::Serial)
    resample_serial(x, t0, step, y);
  else
    resample_omp(x, t0, step, y);
}

// ---------------------------------------------------------------------------
// Dense Hermitian linear algebra used by the RLS recursion. P is row-major
// n x n.
// ---------------------------------------------------------------------------

/// y = P v
void matvec_serial(std::span<const cplx> P, std::size_t n, std::span<const cplx> v, std::span<cplx> y);
void matvec_omp(std::span<const cplx> P, std::size_t n, std::span<const cplx> v, std::span<cplx> y);

/// P <- (P - scale * pi pi^H) * inv_lambda over the full matrix. The outer
/// product is formed so that entries (i,j) and (j,i) are exact conjugates,
/// keeping P exactly Hermitian without mirroring.
void hermitian_downdate_serial(std::span<cplx> P, std::size_t n, std::span<const cplx> pi, double scale,
                               double inv_lambda);
void hermitian_downdate_omp(std::span<cplx> P, std::size_t n, std::span<const cplx> pi, double scale,
                            double inv_lambda);

/// hermitian_downdate followed by y = P v on the updated matrix.
void downdate_matvec_serial(std::span<cplx> P, std::size_t n, std::span<const cplx> pi, double scale,
                            double inv_lambda, std::span<const cplx> v, std::span<cplx> y);
void downdate_matvec_omp(std::span<cplx> P, std::size_t n, std::span<const cplx> pi, double scale,
                         double inv_lambda, std::span<const cplx> v, std::span<cplx> y);

}  // namespace usm::kernels
