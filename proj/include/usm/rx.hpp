#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "usm/core.hpp"
#include "usm/tx.hpp"

namespace usm::rx {

class LengthMismatch : public Error {
 public:
  using Error::Error;
};

/// 2 x[n] exp(-j 2 pi f_c (n - origin) / f_s) at the full sample rate. The
/// factor 2 restores the baseband amplitude; the 2 f_c image remains.
BasebandBuffer mix_down(const PassbandBuffer& rx, double carrier_freq_hz, std::size_t origin = 0);

/// Mixes to baseband and applies the RRC matched filter at the full rate.
/// Output index n is aligned with the transmit baseband sample n (the
/// matched-filter delay is removed), so a symbol shaped by the same filter
/// peaks at k L + filter.delay().
BasebandBuffer downconvert(const PassbandBuffer& rx, double carrier_freq_hz, const tx::RrcFilter& filter,
                           std::size_t origin = 0);

/// Mix, matched filter and decimate to 2 samples/symbol. Symbol k of data that
/// starts at passband sample `data_start` lands at output index 2k. Only the
/// n_symbols * 2 requested outputs are computed.
BasebandBuffer downconvert_symbols(const PassbandBuffer& rx, double carrier_freq_hz,
                                   const tx::RrcFilter& filter, std::size_t data_start,
                                   std::size_t n_symbols);

/// Bits (0/1, MSB first per symbol) of the Data-role symbols only.
std::vector<std::uint8_t> demap(const SymbolBlock& decided, Modulation modulation);

struct BerResult {
  std::size_t errors = 0;
  std::size_t total = 0;
  double ber = 0.0;
};

/// Hamming distance over equal-length bit sequences. Throws LengthMismatch.
BerResult compute_ber(std::span<const std::uint8_t> tx_bits, std::span<const std::uint8_t> rx_bits);

}  // namespace usm::rx
