#include "usm/modem.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <exception>
#include <random>

#include "json.hpp"

#include "usm/rx.hpp"
#include "usm/tx.hpp"

namespace usm::modem {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Presets
// ---------------------------------------------------------------------------

ModemConfig preset(std::string_view name) {
  ModemConfig c;
  c.name = std::string(name);
  if (name == "rabbit") {
    // 16-QAM, 500 kHz symbols on a 1.2 MHz carrier.
    c.link = make_link_config(1.2e6, 5e5, Modulation::QAM16);
    c.eq.sparse_keep = 128;
  } else if (name == "porcine-hd") {
    // QPSK, 1 MHz symbols on 1.2 MHz; ~16% known symbols.
    c.link = make_link_config(1.2e6, 1e6, Modulation::QPSK);
    c.link.retrain_symbols_per_packet = 320;
    c.eq.n_fb = 211;
    c.eq.sparse_keep = 96;  // twice the symbols per byte of the 16-QAM presets
  } else if (name == "endoscopy") {
    // 16-QAM, 1 MHz symbols on 1.13 MHz; ~5% known symbols. 79 chunks per
    // frame split the 642,832-byte clip into 8 frames.
    c.link = make_link_config(1.13e6, 1e6, Modulation::QAM16);
    c.link.retrain_symbols_per_packet = 64;
    c.link.frame_max_bytes = 79 * 1024;
    c.eq.sparse_keep = 128;
  } else {
    throw ConfigError({"unknown preset '" + std::string(name) + "' (rabbit, porcine-hd, endoscopy)"});
  }
  return c;
}

std::vector<std::string> preset_names() { return {"rabbit", "porcine-hd", "endoscopy"}; }

ModemConfig validate(const ModemConfig& cfg) {
  std::vector<std::string> v;
  try {
    validate_config(cfg.link);
  } catch (const ConfigError& e) {
    v = e.violations();
  }
  try {
    rx::validate(cfg.eq);
  } catch (const ConfigError& e) {
    v.insert(v.end(), e.violations().begin(), e.violations().end());
  }
  const int taps = cfg.eq.n_ff + cfg.eq.n_fb;
  if (cfg.eq.sparse_keep && *cfg.eq.sparse_keep > taps)
    v.push_back("sparse_keep exceeds n_ff + n_fb");
  if (!(cfg.doppler.step > 0.0) || !(cfg.doppler.min_scale <= 1.0) || !(cfg.doppler.max_scale >= 1.0))
    v.push_back("doppler grid must bracket 1 with a positive step");
  if (!(cfg.sync.confidence_threshold >= 0.0 && cfg.sync.confidence_threshold <= 1.0))
    v.push_back("sync confidence threshold must lie in [0, 1]");
  if (!v.empty()) throw ConfigError(std::move(v));
  return cfg;
}

// ---------------------------------------------------------------------------
// Transmit
// ---------------------------------------------------------------------------

TxResult modulate_bytes(std::span<const std::uint8_t> payload, const ModemConfig& cfg) {
  validate(cfg);
  const auto& link = cfg.link;
  const auto chunks = framer::ingest(payload, static_cast<std::size_t>(link.ingest_chunk_bytes));
  auto ps = framer::packetize(chunks, link);

  TxResult out;
  out.meta = ps.meta;
  out.payload_bits = std::move(ps.payload_bits);
  out.frame_bytes = ps.frame_bytes;
  out.signal.sample_rate_hz = link.sample_rate_hz;

  const auto gap = static_cast<std::size_t>(link.frame_gap_samples);
  const auto L = static_cast<std::size_t>(samples_per_symbol(link));
  const auto rrc_len = static_cast<std::size_t>(2 * link.rrc_span_symbols) * L + 1;
  std::size_t total = gap;
  for (const auto& f : ps.frames)
    total += f.layout.symbol_offset_samples() + f.symbols.size() * L + rrc_len + gap;
  out.signal.samples.reserve(total);
  out.signal.samples.assign(gap, 0.0);

  for (const auto& f : ps.frames) {
    const auto s = tx::modulate_frame(link, f);
    out.frame_starts.push_back(out.signal.samples.size());
    out.signal.samples.insert(out.signal.samples.end(), s.samples.begin(), s.samples.end());
    out.frame_ends.push_back(out.signal.samples.size());
    out.signal.samples.insert(out.signal.samples.end(), gap, 0.0);
    out.layouts.push_back(f.layout);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Receive
// ---------------------------------------------------------------------------

namespace {

double to_db(double x) { return x > 0.0 ? std::max(-300.0, 10.0 * std::log10(x)) : -300.0; }

double mean_range(const std::vector<double>& v, std::size_t lo, std::size_t hi) {
  hi = std::min(hi, v.size());
  if (lo >= hi) return 0.0;
  double s = 0.0;
  for (std::size_t i = lo; i < hi; ++i) s += v[i];
  return s / static_cast<double>(hi - lo);
}

// Below this the residual drift over a 64 KB frame is a small fraction of a
// sample and a second resampling pass costs more than it gains.
constexpr double kMinRefine = 2e-8;

struct FrameOutcome {
  FrameReport report;
  framer::DecodedFrame decoded;
};

/// Aligns, Doppler-corrects and equalizes one frame whose chirp was detected
/// at `det.frame_start_sample`; `region_end` bounds the samples it may use.
FrameOutcome decode_frame(const PassbandBuffer& signal, const rx::SyncResult& det, std::size_t region_end,
                          const ModemConfig& cfg, const std::vector<cplx>& tmpl) {
  const auto& link = cfg.link;
  FrameOutcome out;
  auto& rep = out.report;
  rep.sync = det;
  rep.doppler = rx::estimate_doppler(signal, link.chirp, det.frame_start_sample, cfg.doppler);

  // Work on a copy of the frame region, Doppler corrected when needed.
  constexpr std::size_t kPad = 64;
  const std::size_t lo = det.frame_start_sample > kPad ? det.frame_start_sample - kPad : 0;
  const std::size_t hi = std::min(region_end, signal.samples.size());
  PassbandBuffer seg;
  seg.sample_rate_hz = signal.sample_rate_hz;
  seg.samples.assign(signal.samples.begin() + static_cast<std::ptrdiff_t>(lo),
                     signal.samples.begin() + static_cast<std::ptrdiff_t>(hi));
  const std::size_t chirp_len = static_cast<std::size_t>(chirp_samples(link));
  const std::size_t head = chirp_len + static_cast<std::size_t>(link.guard_samples);
  std::size_t start = det.frame_start_sample - lo;
  const PassbandBuffer raw = seg;
  // Resamples the raw region by `scale` and re-aligns on the corrected chirp.
  auto correct = [&](double scale) {
    seg = rx::correct_doppler(raw, scale);
    const std::size_t probe = std::min(seg.samples.size(), tmpl.size() + 4 * kPad);
    const auto ncc = rx::normalized_correlation(std::span(seg.samples).first(probe), tmpl);
    if (!ncc.empty()) start = static_cast<std::size_t>(std::max_element(ncc.begin(), ncc.end()) - ncc.begin());
  };
  if (rep.doppler.scale != 1.0) correct(rep.doppler.scale);

  // The chirp barely resolves time scale; refine on the training block.
  const double max_dev = std::max(cfg.doppler.max_scale - 1.0, 1.0 - cfg.doppler.min_scale);
  const auto fine = rx::training_doppler(seg, link, start + head, max_dev);
  if (std::abs(fine.scale - 1.0) > kMinRefine) {
    rep.doppler.scale *= fine.scale;
    correct(rep.doppler.scale);
  }
  rep.sync.doppler_scale = rep.doppler.scale;

  const auto L = static_cast<std::size_t>(samples_per_symbol(link));
  const std::size_t data_start = start + head;
  const std::size_t avail_symbols = seg.samples.size() > data_start ? (seg.samples.size() - data_start) / L : 0;
  const FrameLayout base = nominal_layout(link, 0);
  const std::size_t per_packet = 1 + base.retrain_len + base.packet_len;
  const std::size_t max_packets =
      avail_symbols > base.training_len + 1 ? (avail_symbols - base.training_len - 1) / per_packet : 0;
  const FrameLayout layout = nominal_layout(link, max_packets);

  const auto rrc = tx::make_rrc(link);
  const std::size_t n_sym = std::min(layout.total_symbols(), avail_symbols) +
                            static_cast<std::size_t>(cfg.eq.n_ff) / 2 + 8;
  const auto z = rx::downconvert_symbols(seg, link.carrier_freq_hz, rrc, data_start, n_sym);
  const auto known = tx::known_symbols(link, max_packets);
  auto res = rx::dfe_run(z.samples, cfg.eq, link.modulation, known, layout);

  rep.layout = res.layout;
  rep.training_symbols = res.training_symbols;
  rep.symbols = res.decided.size();
  rep.active_taps = res.state.rls.active_size();
  rep.warnings = std::move(res.warnings);
  const auto& tr = res.state.error_trace;
  const std::size_t T = layout.training_len;
  rep.mse_training_db = to_db(mean_range(tr, T > 512 ? T - 512 : 0, T));
  double data_sum = 0.0, worst = 0.0;
  std::size_t data_n = 0;
  for (std::size_t i = 0; i < tr.size(); ++i) {
    if (res.decided.roles[i] != SymbolRole::Data) continue;
    data_sum += tr[i];
    ++data_n;
  }
  for (std::size_t w = T; w + 512 <= tr.size(); w += 512) worst = std::max(worst, mean_range(tr, w, w + 512));
  rep.mse_data_db = data_n ? to_db(data_sum / static_cast<double>(data_n)) : -300.0;
  rep.worst_window_mse_db = to_db(worst);
  out.decoded.decided = std::move(res.decided);
  out.decoded.soft = std::move(res.soft);
  return out;
}

}  // namespace

RxResult demodulate_frames(const PassbandBuffer& signal, const ModemConfig& cfg) {
  validate(cfg);
  const auto& link = cfg.link;
  const auto tmpl = tx::analytic_chirp(link.chirp, link.sample_rate_hz);
  const double bw = std::abs(link.chirp.end_freq_hz - link.chirp.start_freq_hz);
  const std::size_t min_sep = tmpl.size() + static_cast<std::size_t>(link.guard_samples);
  const auto dets = rx::detect_frames(signal, tmpl, bw, min_sep, cfg.sync);
  if (dets.empty()) throw rx::NoFrameFound("no chirp preamble found in the signal");

  const std::size_t n = dets.size();
  std::vector<FrameOutcome> outcomes(n);
  std::vector<std::exception_ptr> errors(n);
  const auto nn = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t i = 0; i < nn; ++i) {
    const auto k = static_cast<std::size_t>(i);
    try {
      const std::size_t end = k + 1 < n ? dets[k + 1].frame_start_sample : signal.samples.size();
      outcomes[k] = decode_frame(signal, dets[k], end, cfg, tmpl);
    } catch (...) {
      errors[k] = std::current_exception();
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  RxResult out;
  for (std::size_t k = 0; k < n; ++k) {
    for (const auto& w : outcomes[k].report.warnings) out.warnings.push_back("frame " + std::to_string(k) + ": " + w);
    out.frames.push_back(std::move(outcomes[k].report));
    out.decoded.push_back(std::move(outcomes[k].decoded));
  }
  return out;
}

RxResult demodulate(const PassbandBuffer& signal, const ModemConfig& cfg, bool keep_decoded) {
  auto out = demodulate_frames(signal, cfg);
  out.payload = framer::reassemble(out.decoded, cfg.link, &out.meta);
  if (!keep_decoded) {
    out.decoded.clear();
    out.decoded.shrink_to_fit();
  }
  return out;
}

// ---------------------------------------------------------------------------
// Simulation
// ---------------------------------------------------------------------------

rx::BerResult payload_ber(std::span<const framer::DecodedFrame> decoded, std::span<const std::uint8_t> truth,
                          const LinkConfig& link) {
  const auto F = static_cast<std::size_t>(link.frame_max_bytes);
  const std::size_t total = framer::kPrologueBytes + truth.size();
  std::vector<std::uint8_t> got;
  got.reserve(total * 8);
  for (std::size_t f = 0; f < decoded.size() && f * F < total; ++f) {
    const std::size_t want_bits = std::min(F, total - f * F) * 8;
    auto bits = rx::demap(decoded[f].decided, link.modulation);
    whiten(bits);
    bits.resize(std::min(bits.size(), want_bits));
    got.insert(got.end(), bits.begin(), bits.end());
    if (bits.size() < want_bits) break;  // later frames would land at the wrong offset
  }
  std::vector<std::uint8_t> want(truth.size() * 8);
  for (std::size_t i = 0; i < truth.size(); ++i)
    for (std::size_t b = 0; b < 8; ++b) want[i * 8 + b] = (truth[i] >> (7 - b)) & 1u;

  const std::size_t skip = framer::kPrologueBytes * 8;
  const std::size_t have = std::min(got.size() > skip ? got.size() - skip : 0, want.size());
  rx::BerResult r = have ? rx::compute_ber(std::span(want).first(have), std::span(got).subspan(skip, have))
                         : rx::BerResult{};
  // Bits never decoded count as errors.
  r.errors += want.size() - have;
  r.total = want.size();
  r.ber = r.total ? static_cast<double>(r.errors) / static_cast<double>(r.total) : 0.0;
  return r;
}

SimResult simulate(std::span<const std::uint8_t> payload, const ModemConfig& cfg,
                   const channel::ChannelModel& model) {
  const auto t0 = std::chrono::steady_clock::now();
  SimResult sim;
  sim.tx = modulate_bytes(payload, cfg);
  // SNR is referred to the transmitted data power (1/2 at passband).
  const auto received = channel::apply(model, sim.tx.signal, cfg.link.carrier_freq_hz, 0.5);
  try {
    sim.rx = demodulate_frames(received, cfg);
    sim.ber = payload_ber(sim.rx.decoded, payload, cfg.link);
    sim.payload = framer::reassemble(sim.rx.decoded, cfg.link, &sim.rx.meta);
    sim.rx.payload = sim.payload;
    sim.ok = true;
  } catch (const Error& e) {
    sim.ok = false;
    sim.error = e.what();
  }
  sim.runtime_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return sim;
}

double snr_db_from_ebn0(double ebn0_db, const LinkConfig& cfg) {
  // Passband data power 1/2, real noise variance s2 over f_s/2:
  // Es/N0 = (1/2 T_b) / (2 s2 / f_s) = SNR * L / 2.
  const double L = samples_per_symbol(cfg);
  const double bps = bits_per_symbol(cfg.modulation);
  return ebn0_db + 10.0 * std::log10(2.0 * bps / L);
}

namespace {
double q_function(double x) { return 0.5 * std::erfc(x / std::sqrt(2.0)); }
}  // namespace

double theoretical_ber(Modulation m, double ebn0_db) {
  const double g = std::pow(10.0, ebn0_db / 10.0);
  if (m == Modulation::QPSK) return q_function(std::sqrt(2.0 * g));
  return 0.75 * q_function(std::sqrt(0.8 * g));
}

double ebn0_for_ber(Modulation m, double ber) {
  double lo = -10.0, hi = 40.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (theoretical_ber(m, mid) > ber)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

std::vector<SweepPoint> ber_sweep(const ModemConfig& cfg, const channel::ChannelModel& channel_model,
                                  std::span<const double> ebn0_db, const SweepOptions& opts) {
  validate(cfg);
  const auto& link = cfg.link;
  const Modulation mod = link.modulation;
  const auto bps = static_cast<std::size_t>(bits_per_symbol(mod));
  const auto interval = static_cast<std::size_t>(link.header_interval_symbols);
  constexpr std::size_t kBlockPackets = 64;
  const auto tmpl = tx::analytic_chirp(link.chirp, link.sample_rate_hz);
  const double bw = std::abs(link.chirp.end_freq_hz - link.chirp.start_freq_hz);
  const auto rrc = tx::make_rrc(link);
  const auto training = tx::training_block(link);

  std::vector<SweepPoint> points(ebn0_db.size());
  std::vector<std::exception_ptr> errors(ebn0_db.size());
  const auto np = static_cast<std::ptrdiff_t>(ebn0_db.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t pi = 0; pi < np; ++pi) {
    const auto p = static_cast<std::size_t>(pi);
    try {
      SweepPoint& pt = points[p];
      pt.ebn0_db = ebn0_db[p];
      pt.snr_db = std::isinf(pt.ebn0_db) ? pt.ebn0_db : snr_db_from_ebn0(pt.ebn0_db, link);
      pt.theory_ber = theoretical_ber(mod, pt.ebn0_db);
      std::mt19937_64 rng(opts.seed + p);
      // Whole packets only, so every frame ends exactly at its EOF.
      const std::size_t n_sym_total = ((opts.bits_per_point + bps - 1) / bps + interval - 1) / interval * interval;
      std::size_t done = 0;
      for (std::uint64_t block = 0; done < n_sym_total; ++block) {
        const std::size_t n_sym = std::min(n_sym_total - done, kBlockPackets * interval);
        // Random labels, cut into packets.
        std::vector<unsigned> labels(n_sym);
        for (auto& l : labels) l = static_cast<unsigned>(rng() & ((1u << bps) - 1u));
        std::vector<SymbolBlock> packets;
        for (std::size_t s = 0; s < n_sym; s += interval) {
          SymbolBlock b;
          for (std::size_t i = s; i < std::min(n_sym, s + interval); ++i)
            b.push_back(map_label(mod, labels[i]), SymbolRole::Data);
          packets.push_back(std::move(b));
        }
        const auto frame = tx::assemble_frame(link, training, packets);
        PassbandBuffer sig = tx::modulate_frame(link, frame);
        // Room for multipath and the matched-filter tail.
        sig.samples.insert(sig.samples.begin(), 2000, 0.0);
        sig.samples.insert(sig.samples.end(), 4000, 0.0);
        channel::ChannelModel m = channel_model;
        m.snr_db = pt.snr_db;
        m.seed = opts.seed * 1000003u + p * 7919u + block;
        const auto rxsig = channel::apply(m, sig, link.carrier_freq_hz, 0.5);

        SymbolBlock decided;
        if (opts.equalize) {
          const auto det = rx::detect_frame(rxsig, tmpl, bw, cfg.sync);
          auto r = decode_frame(rxsig, det, rxsig.samples.size(), cfg, tmpl);
          decided = std::move(r.decoded.decided);
        } else {
          const auto det = rx::detect_frame(rxsig, tmpl, bw, cfg.sync);
          const std::size_t data_start = det.frame_start_sample + frame.layout.symbol_offset_samples();
          const auto z = rx::downconvert_symbols(rxsig, link.carrier_freq_hz, rrc, data_start, frame.symbols.size());
          // One complex gain from the training block.
          cplx num{};
          double den = 0.0;
          for (std::size_t k = 0; k < training.size(); ++k) {
            num += z.samples[2 * k] * std::conj(training.symbols[k]);
            den += std::norm(training.symbols[k]);
          }
          const cplx g = num / den;
          for (std::size_t k = 0; k < frame.symbols.size(); ++k)
            decided.push_back(nearest_point(mod, z.samples[2 * k] / g), frame.symbols.roles[k]);
        }
        // Compare Data positions in order.
        std::size_t di = 0;
        for (std::size_t k = 0; k < decided.size() && di < n_sym; ++k) {
          if (decided.roles[k] != SymbolRole::Data) continue;
          const unsigned got = demap_label(mod, decided.symbols[k]);
          const unsigned diff = got ^ labels[di];
          pt.bit_errors += static_cast<std::size_t>(std::popcount(diff));
          pt.symbol_errors += diff ? 1 : 0;
          ++di;
        }
        // Symbols lost to an early EOF count as fully wrong.
        pt.bit_errors += (n_sym - di) * bps / 2;
        pt.symbol_errors += n_sym - di;
        pt.bits += n_sym * bps;
        done += n_sym;
      }
      pt.ber = pt.bits ? static_cast<double>(pt.bit_errors) / static_cast<double>(pt.bits) : 0.0;
    } catch (...) {
      errors[p] = std::current_exception();
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return points;
}

// ---------------------------------------------------------------------------
// Reporting
// ---------------------------------------------------------------------------

double noncausal_latency_s(const ModemConfig& cfg) {
  return rx::noncausal_latency_s(cfg.eq, cfg.link.symbol_rate_hz);
}

std::vector<framer::ProducerEvent> frame_schedule(const TxResult& tx, const ModemConfig& cfg) {
  std::vector<framer::ProducerEvent> ev;
  const double fs = cfg.link.sample_rate_hz;
  for (std::size_t f = 0; f < tx.frame_ends.size(); ++f) {
    std::size_t bytes = tx.frame_bytes[f];
    if (f == 0) bytes -= std::min(bytes, framer::kPrologueBytes);
    ev.push_back({static_cast<double>(tx.frame_ends[f]) / fs, bytes});
  }
  return ev;
}

namespace {

json config_json(const ModemConfig& cfg) {
  const auto& l = cfg.link;
  json eq = {{"n_ff", cfg.eq.n_ff},
             {"n_fb", cfg.eq.n_fb},
             {"rls_lambda", cfg.eq.rls_lambda},
             {"delta_init", cfg.eq.delta_init},
             {"pll_kp", cfg.eq.pll_kp},
             {"pll_ki", cfg.eq.pll_ki},
             {"dither_rms", cfg.eq.dither_rms}};
  eq["sparse_keep"] = cfg.eq.sparse_keep ? json(*cfg.eq.sparse_keep) : json(nullptr);
  eq["sparse_keep_fb"] = cfg.eq.sparse_keep_fb ? json(*cfg.eq.sparse_keep_fb) : json(nullptr);
  return {{"preset", cfg.name},
          {"carrier_freq_hz", l.carrier_freq_hz},
          {"symbol_rate_hz", l.symbol_rate_hz},
          {"sample_rate_hz", l.sample_rate_hz},
          {"samples_per_symbol", samples_per_symbol(l)},
          {"modulation", std::string(to_string(l.modulation))},
          {"rrc_rolloff", l.rrc_rolloff},
          {"rrc_span_symbols", l.rrc_span_symbols},
          {"chirp", {{"start_freq_hz", l.chirp.start_freq_hz}, {"end_freq_hz", l.chirp.end_freq_hz}, {"duration_s", l.chirp.duration_s}}},
          {"guard_samples", l.guard_samples},
          {"training_symbols_per_frame", l.training_symbols_per_frame},
          {"header_interval_symbols", l.header_interval_symbols},
          {"retrain_symbols_per_packet", l.retrain_symbols_per_packet},
          {"ingest_chunk_bytes", l.ingest_chunk_bytes},
          {"frame_max_bytes", l.frame_max_bytes},
          {"equalizer", eq}};
}

json rx_json(const ModemConfig& cfg, const RxResult& rx) {
  json frames = json::array();
  std::size_t total = 0, data = 0, known = 0, headers = 0;
  double worst = -300.0, mse_sum = 0.0;
  for (const auto& f : rx.frames) {
    frames.push_back({{"frame_start_sample", f.sync.frame_start_sample},
                      {"correlation_peak", f.sync.correlation_peak},
                      {"confidence", f.sync.confidence},
                      {"doppler_scale", f.doppler.scale},
                      {"doppler_clamped", f.doppler.clamped},
                      {"packets", f.layout.n_packets},
                      {"has_eof", f.layout.has_eof},
                      {"symbols", f.symbols},
                      {"training_symbols", f.training_symbols},
                      {"active_taps", f.active_taps},
                      {"mse_training_db", f.mse_training_db},
                      {"mse_data_db", f.mse_data_db},
                      {"worst_window_mse_db", f.worst_window_mse_db},
                      {"warnings", f.warnings}});
    total += f.symbols;
    known += f.training_symbols;
    data += f.layout.data_symbols();
    headers += f.layout.n_packets + (f.layout.has_eof ? 1 : 0);
    worst = std::max(worst, f.worst_window_mse_db);
    mse_sum += f.mse_data_db;
  }
  json j;
  j["frames"] = frames;
  if (!rx.frames.empty()) {
    const auto& f0 = rx.frames.front();
    j["sync"] = {{"frame_start_sample", f0.sync.frame_start_sample},
                 {"correlation_peak", f0.sync.correlation_peak},
                 {"confidence", f0.sync.confidence}};
    double dsum = 0.0;
    for (const auto& f : rx.frames) dsum += f.doppler.scale;
    j["doppler_estimate"] = dsum / static_cast<double>(rx.frames.size());
  } else {
    j["sync"] = nullptr;
    j["doppler_estimate"] = 1.0;
  }
  const double frac = total ? static_cast<double>(known) / static_cast<double>(total) : 0.0;
  j["symbols"] = {{"total", total}, {"data", data}, {"known", known}, {"headers", headers}};
  j["training_fraction"] = frac;
  j["data_rate_bps"] = data_rate(cfg.link);
  j["net_data_rate_bps"] =
      total ? data_rate(cfg.link) * static_cast<double>(data) / static_cast<double>(total) : 0.0;
  j["equalizer"] = {{"mean_data_mse_db", rx.frames.empty() ? -300.0 : mse_sum / static_cast<double>(rx.frames.size())},
                    {"worst_window_mse_db", worst}};
  j["latency"] = {{"noncausal_feedforward_s", noncausal_latency_s(cfg)},
                  {"noncausal_feedforward_us", noncausal_latency_s(cfg) * 1e6}};
  j["warnings"] = rx.warnings;
  return j;
}

json ber_json(const std::optional<rx::BerResult>& ber) {
  if (!ber) return nullptr;
  return {{"errors", ber->errors}, {"total", ber->total}, {"ber", ber->ber}};
}

}  // namespace

std::string metrics_json(const ModemConfig& cfg, const SimResult& sim, std::optional<channel::ChannelModel> ch) {
  json j;
  j["config"] = config_json(cfg);
  if (ch) {
    json taps = json::array();
    for (const auto& t : ch->taps) taps.push_back({{"delay_s", t.delay_s}, {"gain", t.gain}, {"phase_rad", t.phase_rad}});
    j["channel"] = {{"name", ch->name},
                    {"taps", taps},
                    {"doppler_scale", ch->doppler_scale},
                    {"snr_db", std::isfinite(ch->snr_db) ? json(ch->snr_db) : json("inf")},
                    {"seed", ch->seed}};
  }
  j.update(rx_json(cfg, sim.rx));
  j["ok"] = sim.ok;
  j["error"] = sim.error;
  j["ber"] = ber_json(sim.ber);
  j["payload_bytes"] = sim.tx.meta.payload_length_bytes;
  j["checksum"] = sim.tx.meta.checksum;
  j["frame_count"] = sim.tx.meta.frame_count;
  j["runtime_s"] = sim.runtime_s;
  return j.dump(2);
}

std::string metrics_json(const ModemConfig& cfg, const RxResult& rx, double runtime_s,
                         std::optional<rx::BerResult> ber) {
  json j;
  j["config"] = config_json(cfg);
  j.update(rx_json(cfg, rx));
  j["ok"] = true;
  j["error"] = "";
  j["ber"] = ber_json(ber);
  j["payload_bytes"] = rx.meta.payload_length_bytes;
  j["checksum"] = rx.meta.checksum;
  j["frame_count"] = rx.meta.frame_count;
  j["runtime_s"] = runtime_s;
  return j.dump(2);
}

}  // namespace usm::modem
