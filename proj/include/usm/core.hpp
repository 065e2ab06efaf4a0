#pragma once

#include <complex>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace usm {

using cplx = std::complex<double>;

// ---------------------------------------------------------------------------
// Errors. Every failure surfaced to callers derives from usm::Error so the CLI
// can map categories onto exit codes.
// ---------------------------------------------------------------------------

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when a configuration violates one or more invariants. The message
/// lists every violation, one per line.
class ConfigError : public Error {
 public:
  explicit ConfigError(std::vector<std::string> violations);
  const std::vector<std::string>& violations() const noexcept { return violations_; }

 private:
  std::vector<std::string> violations_;
};

class LayoutError : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Link configuration
// ---------------------------------------------------------------------------

enum class Modulation { QPSK, QAM16 };

std::string_view to_string(Modulation m);
Modulation parse_modulation(std::string_view text);

struct ChirpSpec {
  double start_freq_hz = 0.0;
  double end_freq_hz = 0.0;
  double duration_s = 1e-3;
};

struct LinkConfig {
  double carrier_freq_hz = 1.2e6;
  double symbol_rate_hz = 5e5;
  double sample_rate_hz = 1e7;
  Modulation modulation = Modulation::QAM16;
  double rrc_rolloff = 0.25;
  int rrc_span_symbols = 8;
  ChirpSpec chirp{};
  int guard_samples = 5000;
  int training_symbols_per_frame = 4000;
  int header_interval_symbols = 2048;
  int ingest_chunk_bytes = 1024;

  // Known symbols inserted after every packet header (periodic retraining).
  int retrain_symbols_per_packet = 0;
  // Upper bound on stream bytes carried by one frame; a multiple of
  // ingest_chunk_bytes.
  int frame_max_bytes = 65536;
  // Silence between consecutive frames in a multi-frame signal.
  int frame_gap_samples = 5000;
};

/// Sweep across [f_c - f_b/2, f_c + f_b/2] for 1 ms.
ChirpSpec default_chirp(double carrier_freq_hz, double symbol_rate_hz);

/// Builds a config with every derived default filled in (chirp band, 0.5 ms
/// guard) for the given carrier, symbol rate and modulation at f_s = 10 MHz.
LinkConfig make_link_config(double carrier_freq_hz, double symbol_rate_hz,
                            Modulation modulation, double sample_rate_hz = 1e7);

/// Returns the config unchanged if every invariant holds, throws ConfigError
/// listing all violations otherwise.
LinkConfig validate_config(const LinkConfig& cfg);

/// Oversampling factor f_s / f_b. Assumes a validated config.
int samples_per_symbol(const LinkConfig& cfg);
int bits_per_symbol(Modulation m);
int chirp_samples(const LinkConfig& cfg);

/// Gross bit rate: log2(M) * f_b. Training overhead is not subtracted.
double data_rate(const LinkConfig& cfg);

// ---------------------------------------------------------------------------
// Constellations
// ---------------------------------------------------------------------------

struct ConstellationPoint {
  cplx point;
  unsigned label;  // bits, MSB first
};

/// Gray-labelled, unit average power. Index i of the result has label i.
std::vector<ConstellationPoint> constellation(Modulation m);

cplx map_label(Modulation m, unsigned label);
/// Nearest-point label (per-axis slicing).
unsigned demap_label(Modulation m, cplx y);
cplx nearest_point(Modulation m, cplx y);

/// Header symbols: CONTINUE and EOF are diagonally opposite corner points.
cplx header_continue_symbol(Modulation m);
cplx header_eof_symbol(Modulation m);

// ---------------------------------------------------------------------------
// Symbols and signals
// ---------------------------------------------------------------------------

enum class SymbolRole : std::uint8_t { Training, Data, Header, Eof };

struct SymbolBlock {
  std::vector<cplx> symbols;
  std::vector<SymbolRole> roles;

  std::size_t size() const noexcept { return symbols.size(); }
  bool empty() const noexcept { return symbols.empty(); }
  void push_back(cplx s, SymbolRole r) {
    symbols.push_back(s);
    roles.push_back(r);
  }
  void append(const SymbolBlock& other);
};

/// Real-valued signal at the carrier.
struct PassbandBuffer {
  std::vector<double> samples;
  double sample_rate_hz = 0.0;
};

/// Complex envelope.
struct BasebandBuffer {
  std::vector<cplx> samples;
  double sample_rate_hz = 0.0;
};

// ---------------------------------------------------------------------------
// Frame layout
//
//   [chirp][guard][training][header|retrain|packet] x N [EOF]
//
// Lengths of chirp and guard are in passband samples, everything after the
// guard is in symbols.
// ---------------------------------------------------------------------------

struct FrameLayout {
  std::size_t chirp_len = 0;
  std::size_t guard_len = 0;
  std::size_t training_len = 0;
  std::size_t packet_len = 0;      // header interval (data symbols per packet)
  std::size_t retrain_len = 0;     // known symbols following each header
  std::size_t n_packets = 0;
  std::size_t last_packet_len = 0; // == packet_len unless the last one is short
  bool has_eof = true;

  std::size_t data_symbols() const noexcept;
  std::size_t known_symbols() const noexcept;  // training + retraining
  std::size_t header_symbols() const noexcept; // CONTINUE headers + EOF
  std::size_t total_symbols() const noexcept;
  /// Offset in passband samples from frame start to the first symbol.
  std::size_t symbol_offset_samples() const noexcept { return chirp_len + guard_len; }
  double training_fraction() const noexcept;
};

/// Expected layout of a frame carrying n_packets full packets.
FrameLayout nominal_layout(const LinkConfig& cfg, std::size_t n_packets);

// ---------------------------------------------------------------------------
// Pseudo-random sequences
// ---------------------------------------------------------------------------

/// Fibonacci LFSR producing a maximal-length bit sequence.
class Lfsr {
 public:
  /// Feedback polynomial x^degree + x^tap + 1, e.g. (23, 18). The seed is
  /// masked to `degree` bits and must be nonzero.
  Lfsr(unsigned degree, unsigned tap, std::uint32_t seed);
  unsigned next_bit();

 private:
  unsigned degree_;
  unsigned tap_;
  std::uint32_t state_;
};

/// PRBS23 seed for the training/retraining sequence.
inline constexpr std::uint32_t kTrainingSeed = 0x5A5A5Au;
/// PRBS15 seed for the data whitener.
inline constexpr std::uint32_t kWhitenerSeed = 0x1D2Bu;

/// Known symbol sequence shared by both ends: the first training_len symbols
/// are the frame preamble training, retraining blocks continue the sequence.
class TrainingSequence {
 public:
  explicit TrainingSequence(Modulation m, std::uint32_t seed = kTrainingSeed);
  cplx next();
  std::vector<cplx> take(std::size_t n);

 private:
  Modulation modulation_;
  Lfsr lfsr_;
};

/// XORs the PRBS15 whitening sequence into bits (self-inverse).
void whiten(std::span<std::uint8_t> bits, std::uint32_t seed = kWhitenerSeed);

}  // namespace usm
