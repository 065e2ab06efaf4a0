#include "usm/framer.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <thread>

#include "usm/rx.hpp"

namespace usm::framer {

std::uint32_t crc32(std::span<const std::uint8_t> bytes) {
  uLong c = ::crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed in pieces for very large inputs.
  std::size_t off = 0;
  while (off < bytes.size()) {
    const auto n = static_cast<uInt>(std::min<std::size_t>(bytes.size() - off, 1u << 30));
    c = ::crc32(c, bytes.data() + off, n);
    off += n;
  }
  return static_cast<std::uint32_t>(c);
}

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(std::span<const std::uint8_t> b, std::size_t off) {
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | b[off + static_cast<std::size_t>(i)];
  return v;
}

std::vector<std::uint8_t> bytes_to_bits(std::span<const std::uint8_t> bytes) {
  std::vector<std::uint8_t> bits(bytes.size() * 8);
  for (std::size_t i = 0; i < bytes.size(); ++i)
    for (int b = 0; b < 8; ++b) bits[i * 8 + static_cast<std::size_t>(b)] = (bytes[i] >> (7 - b)) & 1u;
  return bits;
}

std::vector<std::uint8_t> bits_to_bytes(std::span<const std::uint8_t> bits, std::size_t n_bytes) {
  std::vector<std::uint8_t> out(n_bytes, 0);
  for (std::size_t i = 0; i < n_bytes; ++i) {
    std::uint8_t v = 0;
    for (std::size_t b = 0; b < 8; ++b) v = static_cast<std::uint8_t>((v << 1) | (bits[i * 8 + b] & 1u));
    out[i] = v;
  }
  return out;
}

std::size_t symbols_for_bytes(std::size_t n_bytes, Modulation m) {
  const auto bps = static_cast<std::size_t>(bits_per_symbol(m));
  return (n_bytes * 8 + bps - 1) / bps;
}

double q_function(double x) { return 0.5 * std::erfc(x / std::sqrt(2.0)); }

}  // namespace

std::vector<std::uint8_t> encode_prologue(const StreamMeta& meta) {
  std::vector<std::uint8_t> out;
  out.reserve(kPrologueBytes);
  put_u32(out, meta.payload_length_bytes);
  put_u32(out, meta.checksum);
  put_u32(out, meta.chunk_bytes);
  put_u32(out, meta.frame_count);
  return out;
}

StreamMeta decode_prologue(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kPrologueBytes) throw FormatError("stream prologue needs 16 bytes");
  StreamMeta m;
  m.payload_length_bytes = get_u32(bytes, 0);
  m.checksum = get_u32(bytes, 4);
  m.chunk_bytes = get_u32(bytes, 8);
  m.frame_count = get_u32(bytes, 12);
  if (m.chunk_bytes == 0) throw FormatError("stream prologue has a zero chunk size");
  return m;
}

std::size_t frame_count_for(std::size_t payload_bytes, const LinkConfig& cfg) {
  const auto f = static_cast<std::size_t>(cfg.frame_max_bytes);
  return (kPrologueBytes + payload_bytes + f - 1) / f;
}

std::vector<Chunk> ingest(std::span<const std::uint8_t> source, std::size_t chunk_bytes) {
  if (chunk_bytes == 0) throw ConfigError({"chunk_bytes must be positive"});
  std::vector<Chunk> out;
  out.reserve(source.size() / chunk_bytes + 1);
  std::size_t off = 0;
  for (; off + chunk_bytes <= source.size(); off += chunk_bytes)
    out.push_back({std::vector<std::uint8_t>(source.begin() + static_cast<std::ptrdiff_t>(off),
                                             source.begin() + static_cast<std::ptrdiff_t>(off + chunk_bytes)),
                   false});
  if (off < source.size())
    out.push_back({std::vector<std::uint8_t>(source.begin() + static_cast<std::ptrdiff_t>(off), source.end()), true});
  return out;
}

std::vector<Chunk> ingest_stream(std::istream& in, std::size_t chunk_bytes, std::size_t capacity) {
  if (chunk_bytes == 0) throw ConfigError({"chunk_bytes must be positive"});
  BoundedQueue<Chunk> queue(capacity);
  std::thread producer([&] {
    for (;;) {
      Chunk c;
      c.bytes.resize(chunk_bytes);
      in.read(reinterpret_cast<char*>(c.bytes.data()), static_cast<std::streamsize>(chunk_bytes));
      const auto got = static_cast<std::size_t>(in.gcount());
      if (got == 0) break;
      c.bytes.resize(got);
      c.tail = got < chunk_bytes;
      queue.push(std::move(c));
      if (got < chunk_bytes) break;
    }
    queue.close();
  });
  std::vector<Chunk> out;
  while (auto c = queue.pop()) out.push_back(std::move(*c));
  producer.join();
  return out;
}

std::vector<std::uint8_t> frame_bits(std::span<const std::uint8_t> stream_bytes, const LinkConfig& cfg) {
  const auto bps = static_cast<std::size_t>(bits_per_symbol(cfg.modulation));
  const auto interval = static_cast<std::size_t>(cfg.header_interval_symbols);
  const std::size_t n_sym = symbols_for_bytes(stream_bytes.size(), cfg.modulation);
  const std::size_t n_packets = std::max<std::size_t>(1, (n_sym + interval - 1) / interval);
  auto bits = bytes_to_bits(stream_bytes);
  bits.resize(n_packets * interval * bps, 0);
  whiten(bits);
  return bits;
}

PacketizedStream packetize(std::span<const Chunk> chunks, const LinkConfig& cfg) {
  validate_config(cfg);
  std::vector<std::uint8_t> payload;
  for (const auto& c : chunks) payload.insert(payload.end(), c.bytes.begin(), c.bytes.end());
  if (payload.size() > std::numeric_limits<std::uint32_t>::max() - kPrologueBytes)
    throw ConfigError({"payload too large for the 32-bit length field"});

  PacketizedStream out;
  out.meta.payload_length_bytes = static_cast<std::uint32_t>(payload.size());
  out.meta.checksum = crc32(payload);
  out.meta.chunk_bytes = static_cast<std::uint32_t>(cfg.ingest_chunk_bytes);
  out.meta.frame_count = static_cast<std::uint32_t>(frame_count_for(payload.size(), cfg));
  out.payload_bits = bytes_to_bits(payload);

  std::vector<std::uint8_t> stream = encode_prologue(out.meta);
  stream.insert(stream.end(), payload.begin(), payload.end());

  const auto F = static_cast<std::size_t>(cfg.frame_max_bytes);
  const auto interval = static_cast<std::size_t>(cfg.header_interval_symbols);
  const auto training = tx::training_block(cfg);
  out.frames.reserve(out.meta.frame_count);
  for (std::size_t f = 0; f < out.meta.frame_count; ++f) {
    const std::size_t lo = f * F;
    const std::size_t n = std::min(F, stream.size() - lo);
    const auto bits = frame_bits(std::span(stream).subspan(lo, n), cfg);
    const auto symbols = tx::map_bits(bits, cfg.modulation);
    std::vector<SymbolBlock> packets(symbols.size() / interval);
    for (std::size_t p = 0; p < packets.size(); ++p) {
      auto& blk = packets[p];
      blk.symbols.assign(symbols.symbols.begin() + static_cast<std::ptrdiff_t>(p * interval),
                         symbols.symbols.begin() + static_cast<std::ptrdiff_t>((p + 1) * interval));
      blk.roles.assign(interval, SymbolRole::Data);
    }
    out.frames.push_back(tx::assemble_frame(cfg, training, packets));
    out.frame_bytes.push_back(n);
  }
  return out;
}

namespace {

double estimate_byte_errors(std::span<const DecodedFrame> frames, Modulation m, std::size_t n_bytes) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& fr : frames) {
    if (fr.soft.size() != fr.decided.size()) continue;
    for (std::size_t i = 0; i < fr.soft.size(); ++i) {
      if (fr.decided.roles[i] != SymbolRole::Data) continue;
      sum += std::norm(fr.soft[i] - fr.decided.symbols[i]);
      ++n;
    }
  }
  double est = 0.0;
  if (n > 0 && sum > 0.0) {
    const double s = std::sqrt(sum / static_cast<double>(n) / 2.0);  // per-axis noise
    const double d = m == Modulation::QPSK ? 1.0 / std::sqrt(2.0) : 1.0 / std::sqrt(10.0);
    const double ber = (m == Modulation::QPSK ? 1.0 : 0.75) * q_function(d / s);
    est = static_cast<double>(n_bytes) * (1.0 - std::pow(1.0 - ber, 8.0));
  }
  return std::max(1.0, est);
}

}  // namespace

std::vector<std::uint8_t> reassemble(std::span<const DecodedFrame> frames, const LinkConfig& cfg,
                                     StreamMeta* meta_out) {
  if (frames.empty()) throw MissingEOF("no frames decoded");
  for (std::size_t f = 0; f < frames.size(); ++f) {
    const auto& roles = frames[f].decided.roles;
    if (roles.empty() || roles.back() != SymbolRole::Eof)
      throw MissingEOF("frame " + std::to_string(f) + " ended without an EOF symbol");
  }

  const auto F = static_cast<std::size_t>(cfg.frame_max_bytes);
  auto frame_stream_bytes = [&](std::size_t f, std::size_t n_bytes) {
    auto bits = rx::demap(frames[f].decided, cfg.modulation);
    whiten(bits);
    if (bits.size() < n_bytes * 8)
      throw MissingEOF("frame " + std::to_string(f) + " carries " + std::to_string(bits.size() / 8) +
                       " bytes, expected " + std::to_string(n_bytes));
    return bits_to_bytes(bits, n_bytes);
  };

  // The prologue sits at the start of frame 0.
  const auto head = frame_stream_bytes(0, std::min(F, kPrologueBytes));
  const StreamMeta meta = decode_prologue(head);
  if (meta_out) *meta_out = meta;
  const std::size_t total = kPrologueBytes + meta.payload_length_bytes;
  const std::size_t expect_frames = (total + F - 1) / F;
  if (meta.frame_count != expect_frames)
    throw FormatError("prologue frame count " + std::to_string(meta.frame_count) + " inconsistent with length " +
                      std::to_string(meta.payload_length_bytes));
  if (frames.size() < expect_frames)
    throw MissingEOF("received " + std::to_string(frames.size()) + " of " + std::to_string(expect_frames) +
                     " frames");

  std::vector<std::uint8_t> stream;
  stream.reserve(total);
  for (std::size_t f = 0; f < expect_frames; ++f) {
    const std::size_t n = std::min(F, total - f * F);
    const auto b = frame_stream_bytes(f, n);
    stream.insert(stream.end(), b.begin(), b.end());
  }
  std::vector<std::uint8_t> payload(stream.begin() + static_cast<std::ptrdiff_t>(kPrologueBytes), stream.end());
  const std::uint32_t crc = crc32(payload);
  if (crc != meta.checksum) {
    const double est = estimate_byte_errors(frames.first(expect_frames), cfg.modulation, total);
    std::ostringstream msg;
    msg << "checksum mismatch (got " << std::hex << crc << ", expected " << meta.checksum << std::dec
        << "); estimated byte errors " << est;
    throw ChecksumMismatch(msg.str(), est);
  }
  return payload;
}

BufferTrace simulate_buffering(std::span<const ProducerEvent> schedule, const BufferOptions& opts) {
  if (opts.capacity && opts.fill_threshold > *opts.capacity)
    throw ConfigError({"fill_threshold exceeds buffer capacity"});
  if (!(opts.drain_rate_bytes_per_s > 0.0)) throw ConfigError({"drain_rate must be positive"});
  if (opts.drain_quantum == 0) throw ConfigError({"drain_quantum must be positive"});

  std::vector<ProducerEvent> prod(schedule.begin(), schedule.end());
  std::stable_sort(prod.begin(), prod.end(),
                   [](const ProducerEvent& a, const ProducerEvent& b) { return a.time_s < b.time_s; });
  std::size_t total = 0;
  for (const auto& e : prod) total += e.bytes;

  BufferTrace trace;
  trace.pipeline_delay_s = prod.empty() ? 0.0 : prod.front().time_s;
  std::size_t produced = 0, consumed = 0;
  const double tick = static_cast<double>(opts.drain_quantum) / opts.drain_rate_bytes_per_s;
  bool started = false;
  double next_tick = 0.0;
  std::size_t pi = 0;

  auto record = [&](double t, BufferAction a) {
    trace.events.push_back({t, produced - consumed, produced, consumed, a});
  };

  while (consumed < total) {
    const bool have_prod = pi < prod.size();
    // Producer events at or before the next consumer tick go first.
    if (have_prod && (!started || prod[pi].time_s <= next_tick)) {
      const double t = prod[pi].time_s;
      std::size_t add = prod[pi].bytes;
      if (opts.capacity) add = std::min(add, *opts.capacity - (produced - consumed));
      // Overflow is dropped and never counts as produced.
      total -= prod[pi].bytes - add;
      produced += add;
      ++pi;
      record(t, BufferAction::Fill);
      if (!started && (produced - consumed >= opts.fill_threshold || pi == prod.size())) {
        started = true;
        trace.latency_s = t;
        next_tick = t;
      }
      continue;
    }
    if (!started) break;  // nothing left to produce
    const std::size_t fill = produced - consumed;
    if (fill >= opts.drain_quantum) {
      consumed += opts.drain_quantum;
      record(next_tick, BufferAction::Drain);
    } else {
      consumed += fill;
      ++trace.underflows;
      record(next_tick, BufferAction::Underflow);
    }
    next_tick += tick;
  }
  return trace;
}

std::string to_jsonl(const BufferTrace& trace) {
  std::ostringstream os;
  os.precision(9);
  for (const auto& e : trace.events) {
    const char* a = e.action == BufferAction::Fill ? "fill" : e.action == BufferAction::Drain ? "drain" : "underflow";
    os << "{\"time_s\":" << e.time_s << ",\"fill\":" << e.fill << ",\"produced\":" << e.produced
       << ",\"consumed\":" << e.consumed << ",\"action\":\"" << a << "\"}\n";
  }
  return os.str();
}

}  // namespace usm::framer
