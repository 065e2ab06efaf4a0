#pragma once

#include <condition_variable>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <istream>
#include <mutex>
#include <optional>
#include <span>
#include <vector>

#include "usm/core.hpp"
#include "usm/tx.hpp"

namespace usm::framer {

/// Checksum over the reassembled payload did not match the prologue.
class ChecksumMismatch : public Error {
 public:
  ChecksumMismatch(const std::string& what, double estimated_byte_errors)
      : Error(what), estimated_byte_errors_(estimated_byte_errors) {}
  /// Expected number of corrupted bytes, never below 1.
  double estimated_byte_errors() const noexcept { return estimated_byte_errors_; }

 private:
  double estimated_byte_errors_;
};

class MissingEOF : public Error {
 public:
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Stream prologue: 16 bytes, little endian, at the start of frame 0.
// ---------------------------------------------------------------------------

struct StreamMeta {
  std::uint32_t payload_length_bytes = 0;
  std::uint32_t checksum = 0;  // CRC-32 (zlib polynomial) of the payload
  std::uint32_t chunk_bytes = 1024;
  std::uint32_t frame_count = 0;

  bool operator==(const StreamMeta&) const = default;
};

inline constexpr std::size_t kPrologueBytes = 16;

std::uint32_t crc32(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_prologue(const StreamMeta& meta);
/// Throws FormatError on fewer than 16 bytes or a zero chunk size.
StreamMeta decode_prologue(std::span<const std::uint8_t> bytes);

/// Number of frames needed for a payload (the prologue counts toward frame 0).
std::size_t frame_count_for(std::size_t payload_bytes, const LinkConfig& cfg);

// ---------------------------------------------------------------------------
// Ingestion
// ---------------------------------------------------------------------------

struct Chunk {
  std::vector<std::uint8_t> bytes;
  bool tail = false;  // the short remainder at the end of the source
};

/// Splits the source into full chunks followed by one short tail chunk when
/// the length is not a multiple of chunk_bytes.
std::vector<Chunk> ingest(std::span<const std::uint8_t> source, std::size_t chunk_bytes);

/// Same split, reading from a stream on a producer thread through a bounded
/// queue holding at most `capacity` chunks.
std::vector<Chunk> ingest_stream(std::istream& in, std::size_t chunk_bytes, std::size_t capacity = 64);

// ---------------------------------------------------------------------------
// Packetization
// ---------------------------------------------------------------------------

struct PacketizedStream {
  StreamMeta meta;
  std::vector<tx::FrameSymbols> frames;
  std::vector<std::size_t> frame_bytes;  // stream bytes (prologue included) per frame
  std::vector<std::uint8_t> payload_bits;  // payload bits before whitening, for BER
};

/// Prefixes the prologue, splits the stream into frames of at most
/// frame_max_bytes, whitens each frame's bits, maps them to symbols and cuts
/// the symbols into header_interval_symbols packets. The last packet of a
/// frame is filled out with whitened zero bits. An empty payload still
/// produces one frame (carrying the prologue).
PacketizedStream packetize(std::span<const Chunk> chunks, const LinkConfig& cfg);

/// Data bits of one frame: whitened bits for `n_bytes` stream bytes plus
/// padding up to whole packets.
std::vector<std::uint8_t> frame_bits(std::span<const std::uint8_t> stream_bytes, const LinkConfig& cfg);

// ---------------------------------------------------------------------------
// Reassembly
// ---------------------------------------------------------------------------

struct DecodedFrame {
  SymbolBlock decided;     // with roles, as produced by the equalizer
  std::vector<cplx> soft;  // optional; used for the error estimate on mismatch
};

/// Strips headers, training and EOF, dewhitens, removes padding using the
/// prologue length and verifies the checksum.
/// Throws MissingEOF when a frame lacks its EOF symbol, frames are missing or
/// a frame is too short for its share of the stream; ChecksumMismatch when
/// the CRC fails.
std::vector<std::uint8_t> reassemble(std::span<const DecodedFrame> frames, const LinkConfig& cfg,
                                     StreamMeta* meta_out = nullptr);

// ---------------------------------------------------------------------------
// Buffering
// ---------------------------------------------------------------------------

/// Bytes that become available to the receiver-side buffer at time_s.
struct ProducerEvent {
  double time_s = 0.0;
  std::size_t bytes = 0;
};

enum class BufferAction { Fill, Drain, Underflow };

struct BufferEvent {
  double time_s = 0.0;
  std::size_t fill = 0;
  std::size_t produced = 0;
  std::size_t consumed = 0;
  BufferAction action = BufferAction::Fill;
};

struct BufferTrace {
  std::vector<BufferEvent> events;
  double pipeline_delay_s = 0.0;  // first production time
  double latency_s = 0.0;         // consumer start time, measured from t = 0
  std::size_t underflows = 0;
};

struct BufferOptions {
  std::size_t fill_threshold = 0;  // bytes buffered before the consumer starts
  double drain_rate_bytes_per_s = 0.0;
  std::size_t drain_quantum = 1024;  // bytes taken per consumer tick
  std::optional<std::size_t> capacity;
};

/// Event-driven producer/consumer simulation. The consumer starts once the
/// fill reaches the threshold (or production ends), then takes one quantum
/// per tick; a tick that finds less than a quantum is an underflow and
/// takes what is there. Throws ConfigError when threshold > capacity.
BufferTrace simulate_buffering(std::span<const ProducerEvent> schedule, const BufferOptions& opts);

/// One JSON object per line.
std::string to_jsonl(const BufferTrace& trace);

// ---------------------------------------------------------------------------
// Single-producer / single-consumer bounded queue.
// ---------------------------------------------------------------------------

template <class T>
class BoundedQueue {
 public:
  explicit BoundedQueue(std::size_t capacity) : capacity_(capacity ? capacity : 1) {}

  /// Blocks while full. Returns false if the queue was closed.
  bool push(T item) {
    std::unique_lock lock(mu_);
    not_full_.wait(lock, [&] { return closed_ || items_.size() < capacity_; });
    if (closed_) return false;
    items_.push_back(std::move(item));
    not_empty_.notify_one();
    return true;
  }

  /// Blocks while empty. Returns nullopt once closed and drained.
  std::optional<T> pop() {
    std::unique_lock lock(mu_);
    not_empty_.wait(lock, [&] { return closed_ || !items_.empty(); });
    if (items_.empty()) return std::nullopt;
    T item = std::move(items_.front());
    items_.pop_front();
    not_full_.notify_one();
    return item;
  }

  void close() {
    std::lock_guard lock(mu_);
    closed_ = true;
    not_empty_.notify_all();
    not_full_.notify_all();
  }

  std::size_t capacity() const noexcept { return capacity_; }

 private:
  std::size_t capacity_;
  std::mutex mu_;
  std::condition_variable not_full_, not_empty_;
  std::deque<T> items_;
  bool closed_ = false;
};

}  // namespace usm::framer
