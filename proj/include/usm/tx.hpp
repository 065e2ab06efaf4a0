#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "usm/core.hpp"

namespace usm::tx {

/// Root-raised-cosine pulse sampled at L samples/symbol. The filter covers
/// +-span_symbols symbols (2*span*L + 1 taps, symmetric) and is scaled so the
/// matched pair p * p has center value 1.
struct RrcFilter {
  std::vector<double> taps;
  double rolloff = 0.25;
  int span_symbols = 8;
  int samples_per_symbol = 0;

  /// Group delay in samples (the index of the center tap).
  std::size_t delay() const noexcept { return taps.size() / 2; }
};

RrcFilter make_rrc(double rolloff, int span_symbols, int samples_per_symbol);
RrcFilter make_rrc(const LinkConfig& cfg);

/// One symbol per bits_per_symbol() bits (0/1 values, MSB first). A partial
/// final group is padded with zero bits.
SymbolBlock map_bits(std::span<const std::uint8_t> bits, Modulation m);

/// Zero-stuffs by L and filters with p. Output length is N*L + taps - 1.
BasebandBuffer pulse_shape(const SymbolBlock& block, const RrcFilter& filter, double sample_rate_hz);

/// Real linear-FM sweep with unit peak amplitude.
PassbandBuffer generate_chirp(const ChirpSpec& spec, double sample_rate_hz);
/// exp(j*phase) of the same sweep; the matched-filter template at the receiver.
std::vector<cplx> analytic_chirp(const ChirpSpec& spec, double sample_rate_hz);

/// Re{ x[n] exp(j 2 pi f_c n / f_s) }.
PassbandBuffer upconvert(const BasebandBuffer& baseband, double carrier_freq_hz);

/// Symbols of one frame in transmission order plus their layout.
struct FrameSymbols {
  SymbolBlock symbols;  // training, then (header, retrain, packet) x N, then EOF
  FrameLayout layout;
};

/// Lays out one frame. Every packet must hold header_interval_symbols data
/// symbols except the last, which may be shorter but not empty. Retraining
/// blocks continue the shared known sequence after the training block.
FrameSymbols assemble_frame(const LinkConfig& cfg, const SymbolBlock& training,
                            std::span<const SymbolBlock> packets);

/// Known symbols of a frame in order: the training block followed by the
/// retraining block of every packet.
std::vector<cplx> known_symbols(const LinkConfig& cfg, std::size_t n_packets);

/// The frame training block (first training_symbols_per_frame known symbols).
SymbolBlock training_block(const LinkConfig& cfg);

/// [chirp][guard][upconverted data]. The data is scaled so its mean power
/// matches the chirp (1/2).
PassbandBuffer modulate_frame(const LinkConfig& cfg, const FrameSymbols& frame);

/// Scale applied to the shaped baseband before upconversion.
double data_amplitude(const LinkConfig& cfg);

}  // namespace usm::tx
