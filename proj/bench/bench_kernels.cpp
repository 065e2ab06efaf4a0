// Serial reference vs OpenMP kernels. Sizes follow the receiver: a 1 ms
// chirp window, the matched filter on a frame segment, and the RLS at the
// full and sparse tap counts.

#include <benchmark/benchmark.h>

#include <random>

#include "usm/kernels.hpp"
#include "usm/rls.hpp"

using namespace usm;

namespace {

std::vector<double> real_noise(std::size_t n, unsigned seed) {
  std::mt19937 g(seed);
  std::normal_distribution<double> nd;
  std::vector<double> v(n);
  for (auto& x : v) x = nd(g);
  return v;
}

std::vector<cplx> complex_noise(std::size_t n, unsigned seed) {
  std::mt19937 g(seed);
  std::normal_distribution<double> nd;
  std::vector<cplx> v(n);
  for (auto& x : v) x = {nd(g), nd(g)};
  return v;
}

// Scaled identity; with a tiny downdate scale it stays positive definite
// across benchmark iterations.
std::vector<cplx> spd(std::size_t n) {
  std::vector<cplx> P(n * n);
  for (std::size_t i = 0; i < n; ++i) P[i * n + i] = 100.0;
  return P;
}

template <kernels::Exec E>
void BM_fir_at(benchmark::State& st) {
  const auto n = static_cast<std::size_t>(st.range(0));
  auto x = complex_noise(n, 1);
  auto h = real_noise(321, 2);
  std::vector<cplx> y(n / 5);
  for (auto _ : st) {
    kernels::fir_at<cplx>(x, h, 0, 5, y, E);
    benchmark::DoNotOptimize(y.data());
  }
  st.SetItemsProcessed(static_cast<std::int64_t>(st.iterations() * y.size()));
}

void BM_xcorr_direct_serial(benchmark::State& st) {
  auto x = real_noise(static_cast<std::size_t>(st.range(0)), 3);
  auto t = complex_noise(2000, 4);
  std::vector<cplx> c(x.size() - t.size() + 1);
  for (auto _ : st) {
    kernels::xcorr_direct_serial(x, t, c);
    benchmark::DoNotOptimize(c.data());
  }
}

void BM_xcorr_direct_omp(benchmark::State& st) {
  auto x = real_noise(static_cast<std::size_t>(st.range(0)), 3);
  auto t = complex_noise(2000, 4);
  std::vector<cplx> c(x.size() - t.size() + 1);
  for (auto _ : st) {
    kernels::xcorr_direct_omp(x, t, c);
    benchmark::DoNotOptimize(c.data());
  }
}

void BM_xcorr_fft(benchmark::State& st) {
  auto x = real_noise(static_cast<std::size_t>(st.range(0)), 3);
  auto t = complex_noise(2000, 4);
  std::vector<cplx> c(x.size() - t.size() + 1);
  for (auto _ : st) {
    kernels::xcorr_fft(x, t, c);
    benchmark::DoNotOptimize(c.data());
  }
}

template <kernels::Exec E>
void BM_resample(benchmark::State& st) {
  auto x = real_noise(static_cast<std::size_t>(st.range(0)), 5);
  std::vector<double> y(x.size() - 64);
  for (auto _ : st) {
    kernels::resample<double>(x, 16.0, 1.0 / 1.0005, y, E);
    benchmark::DoNotOptimize(y.data());
  }
  st.SetItemsProcessed(static_cast<std::int64_t>(st.iterations() * y.size()));
}

void BM_matvec_serial(benchmark::State& st) {
  const auto n = static_cast<std::size_t>(st.range(0));
  auto P = complex_noise(n * n, 6);
  auto v = complex_noise(n, 7);
  std::vector<cplx> y(n);
  for (auto _ : st) {
    kernels::matvec_serial(P, n, v, y);
    benchmark::DoNotOptimize(y.data());
  }
}

void BM_matvec_omp(benchmark::State& st) {
  const auto n = static_cast<std::size_t>(st.range(0));
  auto P = complex_noise(n * n, 6);
  auto v = complex_noise(n, 7);
  std::vector<cplx> y(n);
  for (auto _ : st) {
    kernels::matvec_omp(P, n, v, y);
    benchmark::DoNotOptimize(y.data());
  }
}

void BM_downdate_serial(benchmark::State& st) {
  const auto n = static_cast<std::size_t>(st.range(0));
  auto P = spd(n);
  auto pi = complex_noise(n, 8);
  for (auto _ : st) {
    kernels::hermitian_downdate_serial(P, n, pi, 1e-9, 1.0);
    benchmark::DoNotOptimize(P.data());
  }
}

void BM_downdate_omp(benchmark::State& st) {
  const auto n = static_cast<std::size_t>(st.range(0));
  auto P = spd(n);
  auto pi = complex_noise(n, 8);
  for (auto _ : st) {
    kernels::hermitian_downdate_omp(P, n, pi, 1e-9, 1.0);
    benchmark::DoNotOptimize(P.data());
  }
}

template <kernels::Exec E>
void BM_rls_update(benchmark::State& st) {
  const auto n = static_cast<std::size_t>(st.range(0));
  Rls rls(n, 0.997, 1e-2, E);
  auto u = complex_noise(n, 9);
  std::mt19937 g(10);
  std::normal_distribution<double> nd;
  std::size_t i = 0;
  for (auto _ : st) {
    u[i++ % n] = {nd(g), nd(g)};
    benchmark::DoNotOptimize(rls.update(u, cplx(1.0, 0.0)));
  }
}

}  // namespace

BENCHMARK(BM_fir_at<kernels::Exec::Serial>)->Arg(1 << 16)->Arg(1 << 20);
BENCHMARK(BM_fir_at<kernels::Exec::Parallel>)->Arg(1 << 16)->Arg(1 << 20);
BENCHMARK(BM_xcorr_direct_serial)->Arg(20000);
BENCHMARK(BM_xcorr_direct_omp)->Arg(20000);
BENCHMARK(BM_xcorr_fft)->Arg(20000);
BENCHMARK(BM_resample<kernels::Exec::Serial>)->Arg(1 << 18);
BENCHMARK(BM_resample<kernels::Exec::Parallel>)->Arg(1 << 18);
BENCHMARK(BM_matvec_serial)->Arg(96)->Arg(128)->Arg(281);
BENCHMARK(BM_matvec_omp)->Arg(96)->Arg(128)->Arg(281);
BENCHMARK(BM_downdate_serial)->Arg(96)->Arg(128)->Arg(281);
BENCHMARK(BM_downdate_omp)->Arg(96)->Arg(128)->Arg(281);
BENCHMARK(BM_rls_update<kernels::Exec::Serial>)->Arg(96)->Arg(128)->Arg(281);
BENCHMARK(BM_rls_update<kernels::Exec::Parallel>)->Arg(96)->Arg(128)->Arg(281);

BENCHMARK_MAIN();
