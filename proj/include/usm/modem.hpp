#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "usm/channel.hpp"
#include "usm/core.hpp"
#include "usm/dfe.hpp"
#include "usm/framer.hpp"
#include "usm/rx.hpp"
#include "usm/sync.hpp"

namespace usm::modem {

/// Everything both ends need to agree on, plus receiver tuning.
struct ModemConfig {
  std::string name = "custom";
  LinkConfig link;
  rx::EqualizerConfig eq;
  rx::DopplerGrid doppler;
  rx::SyncOptions sync;
};

/// rabbit | porcine-hd | endoscopy
ModemConfig preset(std::string_view name);
std::vector<std::string> preset_names();

/// Validates link and equalizer settings together. Throws ConfigError.
ModemConfig validate(const ModemConfig& cfg);

struct TxResult {
  PassbandBuffer signal;
  framer::StreamMeta meta;
  std::vector<FrameLayout> layouts;
  std::vector<std::size_t> frame_starts;  // sample index of each chirp
  std::vector<std::size_t> frame_ends;    // one past the last sample of each frame
  std::vector<std::size_t> frame_bytes;   // stream bytes per frame (prologue included)
  std::vector<std::uint8_t> payload_bits;
};

/// [gap][frame 0][gap][frame 1]...[gap]; gaps are frame_gap_samples of
/// silence.
TxResult modulate_bytes(std::span<const std::uint8_t> payload, const ModemConfig& cfg);

struct FrameReport {
  rx::SyncResult sync;
  rx::DopplerEstimate doppler;
  FrameLayout layout;             // decoded (packets read, EOF seen)
  std::size_t training_symbols = 0;
  std::size_t symbols = 0;
  double mse_training_db = 0.0;   // last 512 training symbols
  double mse_data_db = 0.0;       // decision-directed symbols
  double worst_window_mse_db = 0.0;  // worst 512-symbol window after training
  std::size_t active_taps = 0;
  std::vector<std::string> warnings;
};

struct RxResult {
  std::vector<std::uint8_t> payload;
  framer::StreamMeta meta;
  std::vector<FrameReport> frames;
  std::vector<framer::DecodedFrame> decoded;
  std::vector<std::string> warnings;
};

/// Full receiver. Throws rx::NoFrameFound, rx::DivergenceError,
/// framer::MissingEOF or framer::ChecksumMismatch. With
/// `keep_decoded`, RxResult::decoded keeps the per-frame decisions.
RxResult demodulate(const PassbandBuffer& signal, const ModemConfig& cfg, bool keep_decoded = false);

/// Decodes frames only (no reassembly); used when decode errors must be
/// counted rather than thrown.
RxResult demodulate_frames(const PassbandBuffer& signal, const ModemConfig& cfg);

// ---------------------------------------------------------------------------
// Simulation and reporting
// ---------------------------------------------------------------------------

struct SimResult {
  bool ok = false;
  std::string error;               // failure description when !ok
  std::vector<std::uint8_t> payload;
  RxResult rx;
  std::optional<rx::BerResult> ber;  // data bits, computed from decisions
  TxResult tx;
  double runtime_s = 0.0;
};

/// modulate -> channel -> demodulate. BER is measured on the dewhitened data
/// bits of every decoded frame against the transmitted payload, so it is
/// available even when the checksum fails.
SimResult simulate(std::span<const std::uint8_t> payload, const ModemConfig& cfg,
                   const channel::ChannelModel& channel);

/// BER of the payload bits recovered from decoded frames (dewhitened, prologue
/// skipped) against `truth`. Bits that were never decoded count as errors.
rx::BerResult payload_ber(std::span<const framer::DecodedFrame> decoded, std::span<const std::uint8_t> truth,
                          const LinkConfig& link);

/// Channel SNR (signal power over full-band noise power) for a given Eb/N0.
double snr_db_from_ebn0(double ebn0_db, const LinkConfig& cfg);
/// Closed-form AWGN BER: Q(sqrt(2 Eb/N0)) for QPSK, (3/4) Q(sqrt(4 Eb/(5 N0)))
/// for Gray 16-QAM.
double theoretical_ber(Modulation m, double ebn0_db);
/// Eb/N0 (dB) at which theoretical_ber equals `ber`.
double ebn0_for_ber(Modulation m, double ber);

struct SweepPoint {
  double ebn0_db = 0.0;
  double snr_db = 0.0;
  std::size_t bits = 0;
  std::size_t bit_errors = 0;
  std::size_t symbol_errors = 0;
  double ber = 0.0;
  double theory_ber = 0.0;
};

struct SweepOptions {
  std::size_t bits_per_point = 2'000'000;
  std::uint64_t seed = 1;
  // Run the adaptive equalizer. Otherwise the receiver samples the matched
  // filter at the known symbol instants and removes one complex gain fitted
  // on the training block.
  bool equalize = false;
};

/// BER at each Eb/N0 through the passband chain (upconvert, channel with its
/// taps and Doppler, noise at the derived SNR, downconvert). Points run in
/// parallel with seeds seed + index.
std::vector<SweepPoint> ber_sweep(const ModemConfig& cfg, const channel::ChannelModel& channel,
                                  std::span<const double> ebn0_db, const SweepOptions& opts);

/// Structured run report as a JSON document.
std::string metrics_json(const ModemConfig& cfg, const SimResult& sim,
                         std::optional<channel::ChannelModel> channel = std::nullopt);
std::string metrics_json(const ModemConfig& cfg, const RxResult& rx, double runtime_s,
                         std::optional<rx::BerResult> ber = std::nullopt);

/// Decode-side time the feedforward filter reaches ahead: n_ff / 2 * T_b.
double noncausal_latency_s(const ModemConfig& cfg);

/// Times at which each frame's bytes are available to the receiver buffer
/// (end of the frame on air), for simulate_buffering.
std::vector<framer::ProducerEvent> frame_schedule(const TxResult& tx, const ModemConfig& cfg);

}  // namespace usm::modem
