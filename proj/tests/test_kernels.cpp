#include <omp.h>

#include <cmath>
#include <random>

#include "doctest.h"
#include "usm/kernels.hpp"

using namespace usm;
using namespace usm::kernels;

namespace {

std::vector<double> rand_real(std::size_t n, unsigned seed) {
  std::mt19937 g(seed);
  std::normal_distribution<double> d;
  std::vector<double> v(n);
  for (auto& x : v) x = d(g);
  return v;
}

std::vector<cplx> rand_cplx(std::size_t n, unsigned seed) {
  std::mt19937 g(seed);
  std::normal_distribution<double> d;
  std::vector<cplx> v(n);
  for (auto& x : v) x = {d(g), d(g)};
  return v;
}

// Run the OpenMP variants with several threads even on a 1-core box.
struct Threads {
  int saved;
  explicit Threads(int n) : saved(omp_get_max_threads()) { omp_set_num_threads(n); }
  ~Threads() { omp_set_num_threads(saved); }
};

}  // namespace

TEST_CASE("convolve matches the textbook sum") {
  auto x = rand_cplx(300, 1);
  auto h = rand_real(41, 2);
  auto y = convolve<cplx>(x, h, Exec::Serial);
  REQUIRE(y.size() == 340);
  for (std::size_t n = 0; n < y.size(); ++n) {
    cplx acc{};
    for (std::size_t m = 0; m < h.size(); ++m)
      if (n >= m && n - m < x.size()) acc += h[m] * x[n - m];
    CHECK(std::abs(acc - y[n]) < 1e-12);
  }
}

TEST_CASE("fir_at with stride picks convolution outputs") {
  auto x = rand_real(500, 3);
  auto h = rand_real(25, 4);
  auto full = convolve<double>(x, h, Exec::Serial);
  std::vector<double> y(40);
  fir_at<double>(x, h, 7, 11, y, Exec::Serial);
  for (std::size_t k = 0; k < y.size(); ++k) CHECK(y[k] == full[7 + 11 * k]);
}

TEST_CASE("interpolate equals zero-stuff then convolve") {
  auto x = rand_cplx(50, 5);
  auto h = rand_real(33, 6);
  const int L = 4;
  std::vector<cplx> up(x.size() * L);
  for (std::size_t i = 0; i < x.size(); ++i) up[i * L] = x[i];
  auto ref = convolve<cplx>(up, h, Exec::Serial);
  auto y = interpolate<cplx>(x, h, L, Exec::Serial);
  REQUIRE(y.size() == x.size() * L + h.size() - 1);
  for (std::size_t n = 0; n < ref.size(); ++n) CHECK(std::abs(ref[n] - y[n]) < 1e-12);
}

TEST_CASE("serial and OpenMP variants agree bit for bit") {
  Threads t(4);
  auto xr = rand_real(20000, 7);
  auto xc = rand_cplx(20000, 8);
  auto h = rand_real(161, 9);

  SUBCASE("fir_at") {
    std::vector<cplx> a(9000), b(9000);
    fir_at_serial<cplx>(xc, h, 3, 2, a);
    fir_at_omp<cplx>(xc, h, 3, 2, b);
    CHECK(a == b);
  }
  SUBCASE("interpolate") {
    auto a = interpolate<double>(std::span(xr).first(2000), h, 10, Exec::Serial);
    auto b = interpolate<double>(std::span(xr).first(2000), h, 10, Exec::Parallel);
    CHECK(a == b);
  }
  SUBCASE("xcorr direct") {
    auto tmpl = rand_cplx(500, 10);
    std::vector<cplx> a(6000), b(6000);
    xcorr_direct_serial(xr, tmpl, a);
    xcorr_direct_omp(xr, tmpl, b);
    CHECK(a == b);
  }
  SUBCASE("resample") {
    std::vector<double> a(15000), b(15000);
    resample_serial<double>(xr, 12.3, 1.0004, a);
    resample_omp<double>(xr, 12.3, 1.0004, b);
    CHECK(a == b);
  }
  SUBCASE("matvec") {
    const std::size_t n = 300;
    auto P = rand_cplx(n * n, 11);
    auto v = rand_cplx(n, 12);
    std::vector<cplx> a(n), b(n);
    matvec_serial(P, n, v, a);
    matvec_omp(P, n, v, b);
    for (std::size_t i = 0; i < n; ++i) CHECK(std::abs(a[i] - b[i]) <= 1e-12 * (1 + std::abs(a[i])));
  }
  SUBCASE("downdate") {
    const std::size_t n = 270;
    auto pi = rand_cplx(n, 13);
    std::vector<cplx> A(n * n), B;
    for (std::size_t i = 0; i < n; ++i) A[i * n + i] = 1.0;
    B = A;
    hermitian_downdate_serial(A, n, pi, 0.01, 1.0 / 0.997);
    hermitian_downdate_omp(B, n, pi, 0.01, 1.0 / 0.997);
    for (std::size_t i = 0; i < n * n; ++i) CHECK(std::abs(A[i] - B[i]) <= 1e-14);
  }
}

TEST_CASE("downdate keeps P exactly Hermitian") {
  const std::size_t n = 64;
  std::vector<cplx> P(n * n);
  for (std::size_t i = 0; i < n; ++i) P[i * n + i] = 100.0;
  for (int it = 0; it < 50; ++it) {
    auto pi = rand_cplx(n, 100 + it);
    hermitian_downdate_omp(P, n, pi, 1e-3, 1.0 / 0.997);
  }
  for (std::size_t i = 0; i < n; ++i) {
    CHECK(P[i * n + i].imag() == 0.0);
    for (std::size_t j = 0; j < n; ++j) CHECK(P[i * n + j] == std::conj(P[j * n + i]));
  }
}

TEST_CASE("downdate matches the formula") {
  const std::size_t n = 9;
  auto P0 = rand_cplx(n * n, 20);
  auto pi = rand_cplx(n, 21);
  auto P = P0;
  hermitian_downdate_serial(P, n, pi, 0.3, 2.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      cplx ref = (P0[i * n + j] - 0.3 * pi[i] * std::conj(pi[j])) * 2.0;
      CHECK(std::abs(ref - P[i * n + j]) < 1e-12);
    }
}

TEST_CASE("FFT correlator matches direct form") {
  auto x = rand_real(50000, 30);
  auto t = rand_cplx(3000, 31);
  const std::size_t n_lags = x.size() - t.size() + 1;
  std::vector<cplx> d(n_lags), f(n_lags);
  xcorr_direct_serial(x, t, d);
  xcorr_fft(x, t, f);
  double peak = 0, err = 0;
  for (std::size_t i = 0; i < n_lags; ++i) {
    peak = std::max(peak, std::abs(d[i]));
    err = std::max(err, std::abs(d[i] - f[i]));
  }
  CHECK(err < 1e-9 * peak);
  auto auto_pick = xcorr(x, t, n_lags);
  REQUIRE(auto_pick.size() == n_lags);
  CHECK(std::abs(auto_pick[1234] - d[1234]) < 1e-9 * peak);
}

TEST_CASE("window energy") {
  auto x = rand_real(1000, 40);
  auto e = window_energy(x, 50, 900);
  for (std::size_t lag : {0ul, 17ul, 899ul}) {
    double s = 0;
    for (std::size_t m = 0; m < 50; ++m) s += x[lag + m] * x[lag + m];
    CHECK(e[lag] == doctest::Approx(s).epsilon(1e-10));
  }
}

TEST_CASE("sinc kernel") {
  CHECK(SincTable::kernel(0.0) == doctest::Approx(1.0));
  for (int k = 1; k <= 15; ++k) CHECK(std::abs(SincTable::kernel(k)) < 1e-15);
  CHECK(SincTable::kernel(16.0) == 0.0);
  CHECK(SincTable::kernel(2.5) == doctest::Approx(SincTable::kernel(-2.5)));
}

TEST_CASE("resample at integer positions is a copy") {
  auto x = rand_real(400, 41);
  std::vector<double> y(300);
  resample<double>(x, 50.0, 1.0, y, Exec::Serial);
  for (std::size_t k = 0; k < y.size(); ++k) CHECK(y[k] == x[50 + k]);
}

TEST_CASE("resample reconstructs a band-limited tone") {
  // tone at 0.1 cycles/sample, evaluated at fractional positions
  std::vector<double> x(2000);
  for (std::size_t n = 0; n < x.size(); ++n) x[n] = std::cos(2 * M_PI * 0.1 * n + 0.3);
  std::vector<double> y(1000);
  resample<double>(x, 500.37, 0.731, y, Exec::Serial);
  double err = 0;
  for (std::size_t k = 0; k < y.size(); ++k) {
    double t = 500.37 + 0.731 * k;
    err = std::max(err, std::abs(y[k] - std::cos(2 * M_PI * 0.1 * t + 0.3)));
  }
  CHECK(err < 1e-4);
}
