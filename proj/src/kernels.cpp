#include "usm/kernels.hpp"

#include <fftw3.h>

#include <cmath>
#include <mutex>
#include <stdexcept>

namespace usm::kernels {

void xcorr_direct_serial(std::span<const double> x, std::span<const cplx> t, std::span<cplx> c) {
  const std::size_t nx = x.size();
  const std::size_t nt = t.size();
  for (std::size_t lag = 0; lag < c.size(); ++lag) {
    cplx acc{};
    const std::size_t m_hi = lag < nx ? std::min(nt, nx - lag) : 0;
    for (std::size_t m = 0; m < m_hi; ++m) acc += x[lag + m] * std::conj(t[m]);
    c[lag] = acc;
  }
}

void xcorr_direct_omp(std::span<const double> x, std::span<const cplx> t, std::span<cplx> c) {
  const std::size_t nx = x.size();
  const std::size_t nt = t.size();
  const auto nc = static_cast<std::ptrdiff_t>(c.size());
#pragma omp parallel for schedule(static) if (nc > 256)
  for (std::ptrdiff_t l = 0; l < nc; ++l) {
    const auto lag = static_cast<std::size_t>(l);
    cplx acc{};
    const std::size_t m_hi = lag < nx ? std::min(nt, nx - lag) : 0;
    for (std::size_t m = 0; m < m_hi; ++m) acc += x[lag + m] * std::conj(t[m]);
    c[lag] = acc;
  }
}

namespace {

// FFTW planning is not thread-safe; execution on distinct arrays is.
std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

struct FftwBuffer {
  explicit FftwBuffer(std::size_t n)
      : data(static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * n))) {
    if (!data) throw std::bad_alloc();
  }
  ~FftwBuffer() { fftw_free(data); }
  FftwBuffer(const FftwBuffer&) = delete;
  FftwBuffer& operator=(const FftwBuffer&) = delete;
  fftw_complex* data;
};

struct FftwPlan {
  fftw_plan plan = nullptr;
  ~FftwPlan() {
    if (plan) {
      std::lock_guard lock(fftw_planner_mutex());
      fftw_destroy_plan(plan);
    }
  }
};

std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

}  // namespace

void xcorr_fft(std::span<const double> x, std::span<const cplx> t, std::span<cplx> c) {
  if (c.empty()) return;
  const std::size_t nt = t.size();
  if (nt == 0) {
    std::fill(c.begin(), c.end(), cplx{});
    return;
  }
  const std::size_t nfft = std::max<std::size_t>(1u << 14, next_pow2(4 * nt));
  const std::size_t block = nfft - nt + 1;  // valid lags per block
  const std::size_t n_blocks = (c.size() + block - 1) / block;
  const double scale = 1.0 / static_cast<double>(nfft);

  FftwBuffer tspec(nfft), a(nfft);
  FftwPlan fwd, inv;
  {
    std::lock_guard lock(fftw_planner_mutex());
    fwd.plan = fftw_plan_dft_1d(static_cast<int>(nfft), a.data, a.data, FFTW_FORWARD, FFTW_ESTIMATE);
    inv.plan = fftw_plan_dft_1d(static_cast<int>(nfft), a.data, a.data, FFTW_BACKWARD, FFTW_ESTIMATE);
  }
  for (std::size_t i = 0; i < nfft; ++i) {
    tspec.data[i][0] = i < nt ? t[i].real() : 0.0;
    tspec.data[i][1] = i < nt ? t[i].imag() : 0.0;
  }
  fftw_execute_dft(fwd.plan, tspec.data, tspec.data);

  const auto nb = static_cast<std::ptrdiff_t>(n_blocks);
#pragma omp parallel
  {
    FftwBuffer buf(nfft);
#pragma omp for schedule(static)
    for (std::ptrdiff_t b = 0; b < nb; ++b) {
      const std::size_t start = static_cast<std::size_t>(b) * block;
      for (std::size_t i = 0; i < nfft; ++i) {
        const std::size_t idx = start + i;
        buf.data[i][0] = idx < x.size() ? x[idx] : 0.0;
        buf.data[i][1] = 0.0;
      }
      fftw_execute_dft(fwd.plan, buf.data, buf.data);
      for (std::size_t i = 0; i < nfft; ++i) {
        // X * conj(T)
        const double xr = buf.data[i][0], xi = buf.data[i][1];
        const double tr = tspec.data[i][0], ti = tspec.data[i][1];
        buf.data[i][0] = xr * tr + xi * ti;
        buf.data[i][1] = xi * tr - xr * ti;
      }
      fftw_execute_dft(inv.plan, buf.data, buf.data);
      const std::size_t n_out = std::min(block, c.size() - start);
      for (std::size_t j = 0; j < n_out; ++j)
        c[start + j] = cplx(buf.data[j][0] * scale, buf.data[j][1] * scale);
    }
  }
}

std::vector<cplx> xcorr(std::span<const double> x, std::span<const cplx> t, std::size_t n_lags) {
  std::vector<cplx> c(n_lags);
  // Direct cost n_lags * |t| against roughly 40 FFT flops per output.
  if (static_cast<double>(n_lags) * static_cast<double>(t.size()) < 2e6 || t.size() < 64)
    xcorr_direct_omp(x, t, c);
  else
    xcorr_fft(x, t, c);
  return c;
}

std::vector<double> window_energy(std::span<const double> x, std::size_t window,
                                  std::size_t n_lags) {
  std::vector<double> prefix(x.size() + 1, 0.0);
  for (std::size_t i = 0; i < x.size(); ++i) prefix[i + 1] = prefix[i] + x[i] * x[i];
  std::vector<double> e(n_lags);
  for (std::size_t lag = 0; lag < n_lags; ++lag) {
    const std::size_t lo = std::min(lag, x.size());
    const std::size_t hi = std::min(lag + window, x.size());
    e[lag] = std::max(0.0, prefix[hi] - prefix[lo]);
  }
  return e;
}

double SincTable::kernel(double x) {
  constexpr double kSupport = kHalfWidth + 1.0;
  if (std::abs(x) >= kSupport) return 0.0;
  const double r = x / kSupport;
  const double window = std::cyl_bessel_i(0.0, kBeta * std::sqrt(1.0 - r * r)) /
                        std::cyl_bessel_i(0.0, kBeta);
  const double sinc = x == 0.0 ? 1.0 : std::sin(M_PI * x) / (M_PI * x);
  return sinc * window;
}

SincTable::SincTable() : table_(static_cast<std::size_t>(kPhases + 1) * kTaps) {
  for (int p = 0; p <= kPhases; ++p) {
    const double d = -0.5 + static_cast<double>(p) / kPhases;
    for (int m = -kHalfWidth; m <= kHalfWidth; ++m)
      table_[static_cast<std::size_t>(p) * kTaps + (m + kHalfWidth)] = kernel(d - m);
  }
}

const SincTable& SincTable::instance() {
  static const SincTable table;
  return table;
}

void SincTable::weights(double d, double* w) const {
  const double pos = (d + 0.5) * kPhases;
  int p = static_cast<int>(std::floor(pos));
  p = std::clamp(p, 0, kPhases - 1);
  const double frac = pos - p;
  const double* a = &table_[static_cast<std::size_t>(p) * kTaps];
  const double* b = a + kTaps;
  for (int i = 0; i < kTaps; ++i) w[i] = a[i] + frac * (b[i] - a[i]);
}

void matvec_serial(std::span<const cplx> P, std::size_t n, std::span<const cplx> v,
                   std::span<cplx> y) {
  for (std::size_t i = 0; i < n; ++i) {
    const cplx* row = &P[i * n];
    cplx acc{};
    for (std::size_t j = 0; j < n; ++j) acc += row[j] * v[j];
    y[i] = acc;
  }
}

namespace {

// Complex products over interleaved (re, im) doubles, written as contiguous
// real loops: with q = (v_re, -v_im, ...) and w = (v_im, v_re, ...),
//   sum a * v = (sum a[k] q[k], sum a[k] w[k]).
// Both vectors are built once per call so the row loops vectorize.
struct Folded {
  std::vector<double> q, w;
  void build(const cplx* v, std::size_t n) {
    q.resize(2 * n);
    w.resize(2 * n);
    const double* d = reinterpret_cast<const double*>(v);
    for (std::size_t j = 0; j < n; ++j) {
      q[2 * j] = d[2 * j];
      q[2 * j + 1] = -d[2 * j + 1];
      w[2 * j] = d[2 * j + 1];
      w[2 * j + 1] = d[2 * j];
    }
  }
};

thread_local Folded tl_fold;
thread_local Folded tl_fold2;

inline cplx dot_row(const double* a, const double* q, const double* w, std::size_t n2) {
  double re = 0.0, im = 0.0;
#pragma omp simd reduction(+ : re, im)
  for (std::size_t k = 0; k < n2; ++k) {
    re += a[k] * q[k];
    im += a[k] * w[k];
  }
  return {re, im};
}

// row -= scale * pi_i * conj(pi)^T, then row *= inv_lambda. With
// q = (p_re, -p_im, ...) and w = (p_im, p_re, ...) as above, the k-th double
// of pi_i * conj(pi_j) is re(pi_i) q[k] + im(pi_i) w[k]. The outer product
// is formed before scaling so entries (i, j) and (j, i) round identically.
inline void downdate_row(double* row, std::size_t n2, cplx pi_i, const double* q, const double* w, double scale,
                         double inv_lambda) {
  const double a = pi_i.real(), b = pi_i.imag();
#pragma omp simd
  for (std::size_t k = 0; k < n2; ++k) row[k] = (row[k] - scale * (a * q[k] + b * w[k])) * inv_lambda;
}

}  // namespace

void matvec_omp(std::span<const cplx> P, std::size_t n, std::span<const cplx> v,
                std::span<cplx> y) {
  auto& f = tl_fold;
  f.build(v.data(), n);
  const double* base = reinterpret_cast<const double*>(P.data());
  const auto nn = static_cast<std::ptrdiff_t>(n);
  if (nn <= 256) {
    for (std::size_t i = 0; i < n; ++i) y[i] = dot_row(base + 2 * i * n, f.q.data(), f.w.data(), 2 * n);
    return;
  }
  const double* q = f.q.data();
  const double* w = f.w.data();
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < nn; ++i)
    y[static_cast<std::size_t>(i)] = dot_row(base + 2 * static_cast<std::size_t>(i) * n, q, w, 2 * n);
}

void hermitian_downdate_serial(std::span<cplx> P, std::size_t n, std::span<const cplx> pi, double scale,
                               double inv_lambda) {
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const cplx outer(pi[i].real() * pi[j].real() + pi[i].imag() * pi[j].imag(),
                       pi[i].imag() * pi[j].real() - pi[i].real() * pi[j].imag());
      P[i * n + j] = (P[i * n + j] - scale * outer) * inv_lambda;
    }
  }
}

void hermitian_downdate_omp(std::span<cplx> P, std::size_t n, std::span<const cplx> pi, double scale,
                            double inv_lambda) {
  auto& f = tl_fold;
  f.build(pi.data(), n);
  double* base = reinterpret_cast<double*>(P.data());
  const double* q = f.q.data();
  const double* w = f.w.data();
  const auto nn = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(static) if (nn > 256)
  for (std::ptrdiff_t i = 0; i < nn; ++i) {
    const auto r = static_cast<std::size_t>(i);
    downdate_row(base + 2 * r * n, 2 * n, pi[r], q, w, scale, inv_lambda);
  }
}

void downdate_matvec_serial(std::span<cplx> P, std::size_t n, std::span<const cplx> pi, double scale,
                            double inv_lambda, std::span<const cplx> v, std::span<cplx> y) {
  hermitian_downdate_serial(P, n, pi, scale, inv_lambda);
  matvec_serial(P, n, v, y);
}

// One pass over P: each row is downdated and then dotted while still in cache.
void downdate_matvec_omp(std::span<cplx> P, std::size_t n, std::span<const cplx> pi, double scale,
                         double inv_lambda, std::span<const cplx> v, std::span<cplx> y) {
  auto& fp = tl_fold;
  auto& fv = tl_fold2;
  fp.build(pi.data(), n);
  fv.build(v.data(), n);
  double* base = reinterpret_cast<double*>(P.data());
  const double *pq = fp.q.data(), *pw = fp.w.data(), *vq = fv.q.data(), *vw = fv.w.data();
  const auto nn = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(static) if (nn > 256)
  for (std::ptrdiff_t i = 0; i < nn; ++i) {
    const auto r = static_cast<std::size_t>(i);
    double* row = base + 2 * r * n;
    downdate_row(row, 2 * n, pi[r], pq, pw, scale, inv_lambda);
    y[r] = dot_row(row, vq, vw, 2 * n);
  }
}

}  // namespace usm::kernels
