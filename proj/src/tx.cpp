#include "usm/tx.hpp"

#include <cmath>
#include <string>

#include "usm/kernels.hpp"

namespace usm::tx {

namespace {

double rrc_value(double t, double beta) {
  constexpr double kEps = 1e-12;
  if (std::abs(t) < kEps) return 1.0 - beta + 4.0 * beta / M_PI;
  if (std::abs(std::abs(t) - 1.0 / (4.0 * beta)) < kEps) {
    const double a = M_PI / (4.0 * beta);
    return beta / std::sqrt(2.0) *
           ((1.0 + 2.0 / M_PI) * std::sin(a) + (1.0 - 2.0 / M_PI) * std::cos(a));
  }
  const double num = std::sin(M_PI * t * (1.0 - beta)) + 4.0 * beta * t * std::cos(M_PI * t * (1.0 + beta));
  const double den = M_PI * t * (1.0 - (4.0 * beta * t) * (4.0 * beta * t));
  return num / den;
}

double chirp_phase(const ChirpSpec& spec, double t) {
  const double k = (spec.end_freq_hz - spec.start_freq_hz) / spec.duration_s;
  return 2.0 * M_PI * (spec.start_freq_hz * t + 0.5 * k * t * t);
}

}  // namespace

RrcFilter make_rrc(double rolloff, int span_symbols, int samples_per_symbol) {
  RrcFilter f;
  f.rolloff = rolloff;
  f.span_symbols = span_symbols;
  f.samples_per_symbol = samples_per_symbol;
  const int half = span_symbols * samples_per_symbol;
  f.taps.resize(static_cast<std::size_t>(2 * half + 1));
  double energy = 0.0;
  for (int n = 0; n <= 2 * half; ++n) {
    const double t = static_cast<double>(n - half) / samples_per_symbol;
    f.taps[static_cast<std::size_t>(n)] = rrc_value(t, rolloff);
  }
  // Enforce exact symmetry before normalizing.
  for (int n = 0; n < half; ++n) f.taps[static_cast<std::size_t>(2 * half - n)] = f.taps[static_cast<std::size_t>(n)];
  for (double v : f.taps) energy += v * v;
  const double s = 1.0 / std::sqrt(energy);
  for (double& v : f.taps) v *= s;
  return f;
}

RrcFilter make_rrc(const LinkConfig& cfg) {
  return make_rrc(cfg.rrc_rolloff, cfg.rrc_span_symbols, samples_per_symbol(cfg));
}

SymbolBlock map_bits(std::span<const std::uint8_t> bits, Modulation m) {
  const auto bps = static_cast<std::size_t>(bits_per_symbol(m));
  const std::size_t n_sym = (bits.size() + bps - 1) / bps;
  SymbolBlock block;
  block.symbols.reserve(n_sym);
  block.roles.reserve(n_sym);
  for (std::size_t s = 0; s < n_sym; ++s) {
    unsigned label = 0;
    for (std::size_t b = 0; b < bps; ++b) {
      const std::size_t i = s * bps + b;
      label = (label << 1) | (i < bits.size() ? (bits[i] & 1u) : 0u);
    }
    block.push_back(map_label(m, label), SymbolRole::Data);
  }
  return block;
}

BasebandBuffer pulse_shape(const SymbolBlock& block, const RrcFilter& filter, double sample_rate_hz) {
  BasebandBuffer out;
  out.sample_rate_hz = sample_rate_hz;
  out.samples = kernels::interpolate<cplx>(block.symbols, filter.taps, filter.samples_per_symbol);
  return out;
}

PassbandBuffer generate_chirp(const ChirpSpec& spec, double sample_rate_hz) {
  const auto n = static_cast<std::size_t>(std::lround(spec.duration_s * sample_rate_hz));
  PassbandBuffer out;
  out.sample_rate_hz = sample_rate_hz;
  out.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i)
    out.samples[i] = std::cos(chirp_phase(spec, static_cast<double>(i) / sample_rate_hz));
  return out;
}

std::vector<cplx> analytic_chirp(const ChirpSpec& spec, double sample_rate_hz) {
  const auto n = static_cast<std::size_t>(std::lround(spec.duration_s * sample_rate_hz));
  std::vector<cplx> out(n);
  for (std::size_t i = 0; i < n; ++i)
    out[i] = std::polar(1.0, chirp_phase(spec, static_cast<double>(i) / sample_rate_hz));
  return out;
}

PassbandBuffer upconvert(const BasebandBuffer& baseband, double carrier_freq_hz) {
  PassbandBuffer out;
  out.sample_rate_hz = baseband.sample_rate_hz;
  out.samples.resize(baseband.samples.size());
  const double cycles_per_sample = carrier_freq_hz / baseband.sample_rate_hz;
  const auto n = static_cast<std::ptrdiff_t>(baseband.samples.size());
#pragma omp parallel for schedule(static) if (n > kernels::kParallelThreshold)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const double cyc = cycles_per_sample * static_cast<double>(i);
    const double ph = 2.0 * M_PI * (cyc - std::floor(cyc));
    const cplx& b = baseband.samples[static_cast<std::size_t>(i)];
    out.samples[static_cast<std::size_t>(i)] = b.real() * std::cos(ph) - b.imag() * std::sin(ph);
  }
  return out;
}

std::vector<cplx> known_symbols(const LinkConfig& cfg, std::size_t n_packets) {
  TrainingSequence seq(cfg.modulation);
  return seq.take(static_cast<std::size_t>(cfg.training_symbols_per_frame) +
                  n_packets * static_cast<std::size_t>(cfg.retrain_symbols_per_packet));
}

SymbolBlock training_block(const LinkConfig& cfg) {
  SymbolBlock b;
  for (const cplx& s : known_symbols(cfg, 0)) b.push_back(s, SymbolRole::Training);
  return b;
}

FrameSymbols assemble_frame(const LinkConfig& cfg, const SymbolBlock& training,
                            std::span<const SymbolBlock> packets) {
  const auto interval = static_cast<std::size_t>(cfg.header_interval_symbols);
  for (std::size_t i = 0; i < packets.size(); ++i) {
    const std::size_t len = packets[i].size();
    const bool last = i + 1 == packets.size();
    if ((!last && len != interval) || (last && (len == 0 || len > interval)))
      throw LayoutError("packet " + std::to_string(i) + " has " + std::to_string(len) +
                        " symbols; expected " + std::to_string(interval) +
                        (last ? " or fewer (nonzero) for the last packet" : ""));
  }

  FrameSymbols frame;
  frame.layout = nominal_layout(cfg, packets.size());
  frame.layout.training_len = training.size();
  frame.layout.last_packet_len = packets.empty() ? 0 : packets.back().size();

  const std::size_t retrain = frame.layout.retrain_len;
  TrainingSequence seq(cfg.modulation);
  // Retraining continues the shared sequence after the standard training block.
  for (int i = 0; i < cfg.training_symbols_per_frame; ++i) seq.next();

  auto& out = frame.symbols;
  out.symbols.reserve(frame.layout.total_symbols());
  out.roles.reserve(frame.layout.total_symbols());
  for (std::size_t i = 0; i < training.size(); ++i) out.push_back(training.symbols[i], SymbolRole::Training);
  const cplx cont = header_continue_symbol(cfg.modulation);
  for (const auto& p : packets) {
    out.push_back(cont, SymbolRole::Header);
    for (std::size_t r = 0; r < retrain; ++r) out.push_back(seq.next(), SymbolRole::Training);
    for (std::size_t i = 0; i < p.size(); ++i) out.push_back(p.symbols[i], SymbolRole::Data);
  }
  out.push_back(header_eof_symbol(cfg.modulation), SymbolRole::Eof);
  return frame;
}

double data_amplitude(const LinkConfig& cfg) {
  // Unit-power symbols through a unit-energy pulse give baseband power 1/L.
  return std::sqrt(static_cast<double>(samples_per_symbol(cfg)));
}

PassbandBuffer modulate_frame(const LinkConfig& cfg, const FrameSymbols& frame) {
  const auto rrc = make_rrc(cfg);
  auto shaped = pulse_shape(frame.symbols, rrc, cfg.sample_rate_hz);
  const double amp = data_amplitude(cfg);
  for (auto& s : shaped.samples) s *= amp;
  const auto data = upconvert(shaped, cfg.carrier_freq_hz);
  const auto chirp = generate_chirp(cfg.chirp, cfg.sample_rate_hz);

  PassbandBuffer out;
  out.sample_rate_hz = cfg.sample_rate_hz;
  out.samples.reserve(chirp.samples.size() + static_cast<std::size_t>(cfg.guard_samples) + data.samples.size());
  out.samples.insert(out.samples.end(), chirp.samples.begin(), chirp.samples.end());
  out.samples.insert(out.samples.end(), static_cast<std::size_t>(cfg.guard_samples), 0.0);
  out.samples.insert(out.samples.end(), data.samples.begin(), data.samples.end());
  return out;
}

}  // namespace usm::tx
