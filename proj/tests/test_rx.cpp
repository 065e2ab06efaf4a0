#include <cmath>
#include <random>

#include "doctest.h"
#include "usm/kernels.hpp"
#include "usm/rx.hpp"
#include "usm/tx.hpp"

using namespace usm;

namespace {

constexpr double kFs = 1e7;

// Sum of complex tones inside +-max_hz; strictly band-limited baseband.
BasebandBuffer tones(std::size_t n, double max_hz, unsigned seed) {
  std::mt19937 g(seed);
  std::uniform_real_distribution<double> fr(-max_hz, max_hz), ph(0, 2 * M_PI);
  BasebandBuffer x{std::vector<cplx>(n), kFs};
  for (int k = 0; k < 16; ++k) {
    const double f = fr(g), p = ph(g);
    for (std::size_t i = 0; i < n; ++i) x.samples[i] += std::polar(1.0 / 16, 2 * M_PI * f * i / kFs + p);
  }
  return x;
}

SymbolBlock random_symbols(Modulation m, std::size_t n, unsigned seed) {
  std::mt19937 g(seed);
  SymbolBlock b;
  const unsigned mask = m == Modulation::QPSK ? 3u : 15u;
  for (std::size_t i = 0; i < n; ++i) b.push_back(map_label(m, g() & mask), SymbolRole::Data);
  return b;
}

}  // namespace

TEST_CASE("mix_down leaves the baseband plus its 2 fc image") {
  auto x = tones(3000, 5e5, 1);
  const double fc = 1.2e6;
  auto p = tx::upconvert(x, fc);
  auto m = rx::mix_down(p, fc);
  REQUIRE(m.samples.size() == x.samples.size());
  double err = 0;
  for (std::size_t n = 0; n < x.samples.size(); ++n) {
    const cplx image = std::conj(x.samples[n]) * std::polar(1.0, -2 * M_PI * 2 * fc * n / kFs);
    err = std::max(err, std::abs(m.samples[n] - x.samples[n] - image));
  }
  CHECK(err < 1e-9);
}

TEST_CASE("upconvert then downconvert recovers the filtered baseband") {
  // Oracle: the same baseband through the matched filter with no carrier at
  // all. Band-limited inputs only (see the fold-over note in the tx tests).
  for (auto [fc, fb] : {std::pair{1.2e6, 5e5}, std::pair{1.13e6, 1e6}, std::pair{1.2e6, 1e6}}) {
    CAPTURE(fc);
    CAPTURE(fb);
    auto cfg = make_link_config(fc, fb, Modulation::QAM16);
    auto f = tx::make_rrc(cfg);
    auto x = tones(20000, 0.6 * fb, 2);
    auto y = rx::downconvert(tx::upconvert(x, fc), fc, f);
    auto ref = kernels::convolve<cplx>(x.samples, f.taps, kernels::Exec::Serial);
    double err = 0, peak = 0;
    for (std::size_t n = 1000; n + 1000 < x.samples.size(); ++n) {
      err = std::max(err, std::abs(y.samples[n] - ref[n + f.delay()]));
      peak = std::max(peak, std::abs(ref[n + f.delay()]));
    }
    CHECK(err < 1e-3 * peak);
  }
}

TEST_CASE("DC passband input is rejected") {
  auto cfg = make_link_config(1.2e6, 5e5, Modulation::QAM16);
  PassbandBuffer dc{std::vector<double>(20000, 1.0), kFs};
  auto y = rx::downconvert(dc, cfg.carrier_freq_hz, tx::make_rrc(cfg));
  double worst = 0;
  for (std::size_t n = 2000; n < 18000; ++n) worst = std::max(worst, std::abs(y.samples[n]));
  CHECK(worst < 1e-4);
}

TEST_CASE("downconvert_symbols lands symbol k at index 2k") {
  for (auto [fc, fb] : {std::pair{1.2e6, 5e5}, std::pair{1.13e6, 1e6}}) {
    auto cfg = make_link_config(fc, fb, Modulation::QAM16);
    auto f = tx::make_rrc(cfg);
    auto b = random_symbols(Modulation::QAM16, 1500, 3);
    auto shaped = tx::pulse_shape(b, f, kFs);
    auto p = tx::upconvert(shaped, fc);
    // pad with an offset to exercise data_start
    PassbandBuffer rx{std::vector<double>(777, 0.0), kFs};
    rx.samples.insert(rx.samples.end(), p.samples.begin(), p.samples.end());
    auto y = rx::downconvert_symbols(rx, fc, f, 777, b.size());
    REQUIRE(y.samples.size() == 2 * b.size());
    CHECK(y.sample_rate_hz == doctest::Approx(2 * fb));
    double worst = 0;
    for (std::size_t k = 0; k < b.size(); ++k) worst = std::max(worst, std::abs(y.samples[2 * k] - b.symbols[k]));
    CHECK(worst < 1e-2);
    // and it agrees with the full-rate path
    auto full = rx::downconvert(rx, fc, f, 777);
    const auto L = static_cast<std::size_t>(samples_per_symbol(cfg));
    for (std::size_t k = 0; k < 200; ++k)
      CHECK(std::abs(y.samples[k] - full.samples[777 + f.delay() + k * L / 2]) < 1e-12);
  }
}

TEST_CASE("downconvert_symbols past the end reads zeros") {
  auto cfg = make_link_config(1.2e6, 5e5, Modulation::QPSK);
  PassbandBuffer rx{std::vector<double>(1000, 0.0), kFs};
  auto y = rx::downconvert_symbols(rx, cfg.carrier_freq_hz, tx::make_rrc(cfg), 5000, 10);
  REQUIRE(y.samples.size() == 20);
  for (auto v : y.samples) CHECK(v == cplx(0, 0));
}

TEST_CASE("demap inverts map_bits and keeps Data only") {
  for (auto m : {Modulation::QPSK, Modulation::QAM16}) {
    std::mt19937 g(4);
    std::vector<std::uint8_t> bits(4 * 500);
    for (auto& b : bits) b = g() & 1u;
    auto block = tx::map_bits(bits, m);
    SymbolBlock mixed;
    mixed.push_back(header_continue_symbol(m), SymbolRole::Header);
    mixed.push_back(map_label(m, 1), SymbolRole::Training);
    mixed.append(block);
    mixed.push_back(header_eof_symbol(m), SymbolRole::Eof);
    CHECK(rx::demap(mixed, m) == bits);
  }
}

TEST_CASE("compute_ber") {
  std::vector<std::uint8_t> a(1'000'000, 0), b = a;
  auto r = rx::compute_ber(a, b);
  CHECK(r.errors == 0);
  CHECK(r.ber == 0.0);
  b[123456] = 1;
  r = rx::compute_ber(a, b);
  CHECK(r.errors == 1);
  CHECK(r.total == 1'000'000);
  CHECK(r.ber == doctest::Approx(1e-6));
  b.pop_back();
  CHECK_THROWS_AS(rx::compute_ber(a, b), rx::LengthMismatch);
  // 7e-6 over 9.54e6 bits is about 67 errors
  CHECK(std::lround(7e-6 * 9'540'000) == 67);
}
