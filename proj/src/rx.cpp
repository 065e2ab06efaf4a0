#include "usm/rx.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "usm/kernels.hpp"

namespace usm::rx {

namespace {

void mix_into(std::span<const double> x, double cycles_per_sample, std::ptrdiff_t phase_index0,
              std::span<cplx> out) {
  const auto n = static_cast<std::ptrdiff_t>(x.size());
#pragma omp parallel for schedule(static) if (n > kernels::kParallelThreshold)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const double cyc = cycles_per_sample * static_cast<double>(i + phase_index0);
    const double ph = 2.0 * M_PI * (cyc - std::floor(cyc));
    const double v = 2.0 * x[static_cast<std::size_t>(i)];
    out[static_cast<std::size_t>(i)] = cplx(v * std::cos(ph), -v * std::sin(ph));
  }
}

// Kaiser lowpass that passes the signal band and stops everything from f_c
// up (the 2 f_c mixing image and anything at passband DC), folded into the
// matched filter. The RRC alone only reaches about -60 dB there (truncation
// sidelobes), which is visible at L = 10.
struct ReceiveFilter {
  std::vector<double> taps;
  std::size_t delay = 0;
};

ReceiveFilter receive_filter(const tx::RrcFilter& p, double carrier_freq_hz, double fs) {
  const double fb = fs / p.samples_per_symbol;
  const double edge = (1.0 + p.rolloff) * fb / 2.0;
  const double stop = carrier_freq_hz;
  const double width = (stop - edge) / fs;  // cycles/sample
  const double cutoff = 0.5 * (edge + stop) / fs;
  constexpr double kAtten = 100.0;
  const double beta = 0.1102 * (kAtten - 8.7);
  int half = static_cast<int>(std::ceil((kAtten - 8.0) / (2.285 * 2.0 * M_PI * width) / 2.0));
  half = std::clamp(half, 4, 200);
  std::vector<double> h(static_cast<std::size_t>(2 * half + 1));
  const double i0b = std::cyl_bessel_i(0.0, beta);
  for (int m = -half; m <= half; ++m) {
    const double r = static_cast<double>(m) / half;
    const double w = std::cyl_bessel_i(0.0, beta * std::sqrt(std::max(0.0, 1.0 - r * r))) / i0b;
    const double x = 2.0 * cutoff * m;
    h[static_cast<std::size_t>(m + half)] = 2.0 * cutoff * (m == 0 ? 1.0 : std::sin(M_PI * x) / (M_PI * x)) * w;
  }
  double dc = 0.0;
  for (double v : h) dc += v;
  for (double& v : h) v /= dc;
  ReceiveFilter r;
  r.taps = kernels::convolve<double>(p.taps, h, kernels::Exec::Serial);
  r.delay = p.delay() + static_cast<std::size_t>(half);
  return r;
}

}  // namespace

BasebandBuffer mix_down(const PassbandBuffer& rx, double carrier_freq_hz, std::size_t origin) {
  BasebandBuffer out;
  out.sample_rate_hz = rx.sample_rate_hz;
  out.samples.resize(rx.samples.size());
  mix_into(rx.samples, carrier_freq_hz / rx.sample_rate_hz, -static_cast<std::ptrdiff_t>(origin), out.samples);
  return out;
}

BasebandBuffer downconvert(const PassbandBuffer& rx, double carrier_freq_hz, const tx::RrcFilter& filter,
                           std::size_t origin) {
  const auto mixed = mix_down(rx, carrier_freq_hz, origin);
  const auto mf = receive_filter(filter, carrier_freq_hz, rx.sample_rate_hz);
  BasebandBuffer out;
  out.sample_rate_hz = rx.sample_rate_hz;
  out.samples.resize(rx.samples.size());
  kernels::fir_at<cplx>(mixed.samples, mf.taps, static_cast<std::ptrdiff_t>(mf.delay), 1, out.samples);
  return out;
}

BasebandBuffer downconvert_symbols(const PassbandBuffer& rx, double carrier_freq_hz,
                                   const tx::RrcFilter& filter, std::size_t data_start,
                                   std::size_t n_symbols) {
  const auto L = static_cast<std::size_t>(filter.samples_per_symbol);
  const std::size_t n_out = 2 * n_symbols;
  const auto mf = receive_filter(filter, carrier_freq_hz, rx.sample_rate_hz);
  const std::size_t first = filter.delay() + mf.delay;
  // Last input sample any requested output touches.
  const std::size_t need = n_out ? first + (n_out - 1) * (L / 2) + 1 : 0;
  const std::size_t avail = data_start < rx.samples.size() ? rx.samples.size() - data_start : 0;
  const std::size_t len = std::min(need, avail);

  std::vector<cplx> mixed(len);
  mix_into(std::span<const double>(rx.samples.data() + data_start, len), carrier_freq_hz / rx.sample_rate_hz, 0,
           mixed);
  BasebandBuffer out;
  out.sample_rate_hz = rx.sample_rate_hz * 2.0 / static_cast<double>(L);
  out.samples.resize(n_out);
  kernels::fir_at<cplx>(mixed, mf.taps, static_cast<std::ptrdiff_t>(first),
                        static_cast<std::ptrdiff_t>(L / 2), out.samples);
  return out;
}

std::vector<std::uint8_t> demap(const SymbolBlock& decided, Modulation modulation) {
  const int bps = bits_per_symbol(modulation);
  std::vector<std::uint8_t> bits;
  bits.reserve(decided.size() * static_cast<std::size_t>(bps));
  for (std::size_t i = 0; i < decided.size(); ++i) {
    if (decided.roles[i] != SymbolRole::Data) continue;
    const unsigned label = demap_label(modulation, decided.symbols[i]);
    for (int b = bps - 1; b >= 0; --b) bits.push_back(static_cast<std::uint8_t>((label >> b) & 1u));
  }
  return bits;
}

BerResult compute_ber(std::span<const std::uint8_t> tx_bits, std::span<const std::uint8_t> rx_bits) {
  if (tx_bits.size() != rx_bits.size())
    throw LengthMismatch("bit sequences differ in length: " + std::to_string(tx_bits.size()) + " vs " +
                         std::to_string(rx_bits.size()));
  BerResult r;
  r.total = tx_bits.size();
  for (std::size_t i = 0; i < tx_bits.size(); ++i) r.errors += ((tx_bits[i] ^ rx_bits[i]) & 1u);
  r.ber = r.total ? static_cast<double>(r.errors) / static_cast<double>(r.total) : 0.0;
  return r;
}

}  // namespace usm::rx
