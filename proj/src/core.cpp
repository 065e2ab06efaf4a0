#include "usm/core.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <sstream>

namespace usm {

namespace {

std::string join_lines(const std::vector<std::string>& lines) {
  std::ostringstream os;
  os << "invalid configuration:";
  for (const auto& l : lines) os << "\n  - " << l;
  return os.str();
}

constexpr double kInvSqrt2 = 0.70710678118654752440;
const double kInvSqrt10 = 1.0 / std::sqrt(10.0);

// Gray-coded 4-PAM level for two bits (MSB first): 00,01,11,10 -> -3,-1,1,3.
double pam4_level(unsigned two_bits) {
  switch (two_bits & 3u) {
    case 0b00: return -3.0;
    case 0b01: return -1.0;
    case 0b11: return 1.0;
    default: return 3.0;
  }
}

unsigned pam4_slice(double v) {
  if (v < -2.0) return 0b00;
  if (v < 0.0) return 0b01;
  if (v < 2.0) return 0b11;
  return 0b10;
}

bool near_integer(double v, double rel = 1e-9) {
  return std::abs(v - std::round(v)) <= rel * std::max(1.0, std::abs(v));
}

}  // namespace

ConfigError::ConfigError(std::vector<std::string> violations)
    : Error(join_lines(violations)), violations_(std::move(violations)) {}

std::string_view to_string(Modulation m) {
  return m == Modulation::QPSK ? "QPSK" : "QAM16";
}

Modulation parse_modulation(std::string_view text) {
  std::string t(text);
  std::transform(t.begin(), t.end(), t.begin(), [](unsigned char c) { return std::toupper(c); });
  t.erase(std::remove(t.begin(), t.end(), '-'), t.end());
  if (t == "QPSK") return Modulation::QPSK;
  if (t == "QAM16" || t == "16QAM") return Modulation::QAM16;
  throw ConfigError({"unknown modulation '" + std::string(text) + "' (expected QPSK or QAM16)"});
}

ChirpSpec default_chirp(double carrier_freq_hz, double symbol_rate_hz) {
  return {carrier_freq_hz - symbol_rate_hz / 2.0, carrier_freq_hz + symbol_rate_hz / 2.0, 1e-3};
}

LinkConfig make_link_config(double carrier_freq_hz, double symbol_rate_hz, Modulation modulation,
                            double sample_rate_hz) {
  LinkConfig cfg;
  cfg.carrier_freq_hz = carrier_freq_hz;
  cfg.symbol_rate_hz = symbol_rate_hz;
  cfg.sample_rate_hz = sample_rate_hz;
  cfg.modulation = modulation;
  cfg.chirp = default_chirp(carrier_freq_hz, symbol_rate_hz);
  cfg.guard_samples = static_cast<int>(std::lround(0.5e-3 * sample_rate_hz));
  cfg.frame_gap_samples = cfg.guard_samples;
  return cfg;
}

LinkConfig validate_config(const LinkConfig& cfg) {
  std::vector<std::string> v;
  const double fs = cfg.sample_rate_hz;
  const double fb = cfg.symbol_rate_hz;
  const double fc = cfg.carrier_freq_hz;

  if (!(fc > 0.0)) v.emplace_back("carrier_freq_hz must be positive");
  if (!(fb > 0.0)) v.emplace_back("symbol_rate_hz must be positive");
  if (!(fs > 0.0)) v.emplace_back("sample_rate_hz must be positive");

  if (fb > 0.0 && fs > 0.0) {
    const double L = fs / fb;
    if (!near_integer(L)) {
      v.emplace_back("sample_rate_hz must be an integer multiple of symbol_rate_hz (L = " +
                     std::to_string(L) + ")");
    } else {
      const long Li = std::lround(L);
      if (Li < 4) v.emplace_back("oversampling L = f_s/f_b = " + std::to_string(Li) + " < 4");
      if (Li % 2 != 0)
        v.emplace_back("oversampling L = " + std::to_string(Li) +
                       " must be even for 2 samples/symbol decimation");
    }
  }

  if (!(cfg.rrc_rolloff > 0.0 && cfg.rrc_rolloff <= 1.0))
    v.emplace_back("rrc_rolloff must lie in (0, 1]");
  if (cfg.rrc_span_symbols <= 0) v.emplace_back("rrc_span_symbols must be positive");

  if (fc > 0.0 && fb > 0.0 && fs > 0.0) {
    const double half_bw = (1.0 + cfg.rrc_rolloff) * fb / 2.0;
    if (!(fc + half_bw < fs / 2.0))
      v.emplace_back("passband edge f_c + (1+rolloff) f_b/2 must lie below Nyquist f_s/2");
    if (!(fc - half_bw > 0.0))
      v.emplace_back("passband lower edge f_c - (1+rolloff) f_b/2 must be above 0 Hz");
  }

  const auto& ch = cfg.chirp;
  if (!(ch.duration_s > 0.0)) {
    v.emplace_back("chirp.duration_s must be positive");
  } else if (fs > 0.0 && !near_integer(ch.duration_s * fs)) {
    v.emplace_back("chirp.duration_s * sample_rate_hz must be an integer");
  }
  if (fs > 0.0) {
    for (double f : {ch.start_freq_hz, ch.end_freq_hz}) {
      if (!(f > 0.0 && f < fs / 2.0)) {
        v.emplace_back("chirp sweep must lie within (0, f_s/2)");
        break;
      }
    }
  }

  if (cfg.guard_samples < 0) v.emplace_back("guard_samples must be nonnegative");
  if (cfg.frame_gap_samples < 0) v.emplace_back("frame_gap_samples must be nonnegative");
  if (cfg.training_symbols_per_frame <= 0)
    v.emplace_back("training_symbols_per_frame must be positive");
  if (cfg.header_interval_symbols <= 0) v.emplace_back("header_interval_symbols must be positive");
  if (cfg.retrain_symbols_per_packet < 0)
    v.emplace_back("retrain_symbols_per_packet must be nonnegative");
  if (cfg.ingest_chunk_bytes <= 0) {
    v.emplace_back("ingest_chunk_bytes must be positive");
  } else if (cfg.frame_max_bytes <= 0 || cfg.frame_max_bytes % cfg.ingest_chunk_bytes != 0) {
    v.emplace_back("frame_max_bytes must be a positive multiple of ingest_chunk_bytes");
  }

  if (!v.empty()) throw ConfigError(std::move(v));
  return cfg;
}

int samples_per_symbol(const LinkConfig& cfg) {
  return static_cast<int>(std::lround(cfg.sample_rate_hz / cfg.symbol_rate_hz));
}

int bits_per_symbol(Modulation m) { return m == Modulation::QPSK ? 2 : 4; }

int chirp_samples(const LinkConfig& cfg) {
  return static_cast<int>(std::lround(cfg.chirp.duration_s * cfg.sample_rate_hz));
}

double data_rate(const LinkConfig& cfg) {
  return bits_per_symbol(cfg.modulation) * cfg.symbol_rate_hz;
}

cplx map_label(Modulation m, unsigned label) {
  if (m == Modulation::QPSK) {
    const double i = (label & 2u) ? -1.0 : 1.0;
    const double q = (label & 1u) ? -1.0 : 1.0;
    return {i * kInvSqrt2, q * kInvSqrt2};
  }
  return {pam4_level(label >> 2) * kInvSqrt10, pam4_level(label) * kInvSqrt10};
}

unsigned demap_label(Modulation m, cplx y) {
  if (m == Modulation::QPSK) {
    return (y.real() < 0.0 ? 2u : 0u) | (y.imag() < 0.0 ? 1u : 0u);
  }
  const double s = std::sqrt(10.0);
  return (pam4_slice(y.real() * s) << 2) | pam4_slice(y.imag() * s);
}

cplx nearest_point(Modulation m, cplx y) { return map_label(m, demap_label(m, y)); }

std::vector<ConstellationPoint> constellation(Modulation m) {
  const unsigned n = 1u << bits_per_symbol(m);
  std::vector<ConstellationPoint> pts;
  pts.reserve(n);
  for (unsigned label = 0; label < n; ++label) pts.push_back({map_label(m, label), label});
  return pts;
}

cplx header_continue_symbol(Modulation m) {
  return m == Modulation::QPSK ? map_label(m, 0b00) : map_label(m, 0b1010);
}

cplx header_eof_symbol(Modulation m) {
  return m == Modulation::QPSK ? map_label(m, 0b11) : map_label(m, 0b0000);
}

void SymbolBlock::append(const SymbolBlock& other) {
  symbols.insert(symbols.end(), other.symbols.begin(), other.symbols.end());
  roles.insert(roles.end(), other.roles.begin(), other.roles.end());
}

std::size_t FrameLayout::data_symbols() const noexcept {
  if (n_packets == 0) return 0;
  return (n_packets - 1) * packet_len + last_packet_len;
}

std::size_t FrameLayout::known_symbols() const noexcept {
  return training_len + n_packets * retrain_len;
}

std::size_t FrameLayout::header_symbols() const noexcept {
  return n_packets + (has_eof ? 1 : 0);
}

std::size_t FrameLayout::total_symbols() const noexcept {
  return known_symbols() + header_symbols() + data_symbols();
}

double FrameLayout::training_fraction() const noexcept {
  const auto total = total_symbols();
  return total == 0 ? 0.0 : static_cast<double>(known_symbols()) / static_cast<double>(total);
}

FrameLayout nominal_layout(const LinkConfig& cfg, std::size_t n_packets) {
  FrameLayout l;
  l.chirp_len = static_cast<std::size_t>(chirp_samples(cfg));
  l.guard_len = static_cast<std::size_t>(cfg.guard_samples);
  l.training_len = static_cast<std::size_t>(cfg.training_symbols_per_frame);
  l.packet_len = static_cast<std::size_t>(cfg.header_interval_symbols);
  l.retrain_len = static_cast<std::size_t>(cfg.retrain_symbols_per_packet);
  l.n_packets = n_packets;
  l.last_packet_len = n_packets == 0 ? 0 : l.packet_len;
  l.has_eof = true;
  return l;
}

Lfsr::Lfsr(unsigned degree, unsigned tap, std::uint32_t seed)
    : degree_(degree), tap_(tap), state_(seed & ((1u << degree) - 1u)) {
  if (degree == 0 || degree > 31 || tap == 0 || tap >= degree)
    throw Error("Lfsr: invalid polynomial");
  if (state_ == 0) throw Error("Lfsr: seed must be nonzero in the low degree bits");
}

unsigned Lfsr::next_bit() {
  const unsigned fb = ((state_ >> (degree_ - 1)) ^ (state_ >> (tap_ - 1))) & 1u;
  state_ = ((state_ << 1) | fb) & ((1u << degree_) - 1u);
  return fb;
}

TrainingSequence::TrainingSequence(Modulation m, std::uint32_t seed)
    : modulation_(m), lfsr_(23, 18, seed) {}

cplx TrainingSequence::next() {
  unsigned label = 0;
  for (int b = 0; b < bits_per_symbol(modulation_); ++b) label = (label << 1) | lfsr_.next_bit();
  return map_label(modulation_, label);
}

std::vector<cplx> TrainingSequence::take(std::size_t n) {
  std::vector<cplx> out(n);
  for (auto& s : out) s = next();
  return out;
}

void whiten(std::span<std::uint8_t> bits, std::uint32_t seed) {
  Lfsr lfsr(15, 14, seed);
  for (auto& b : bits) b = static_cast<std::uint8_t>((b ^ lfsr.next_bit()) & 1u);
}

}  // namespace usm
