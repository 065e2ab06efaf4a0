// usmodem: file transfer over a simulated ultrasonic QAM link.
//
//   usmodem modulate   IN  --out SIG  [--preset P | --config F]
//   usmodem demodulate SIG --out OUT  [--truth IN] [--metrics M.json]
//   usmodem simulate   IN  --out OUT  --channel NAME|FILE [--snr-db X] [--seed N] [--metrics M.json]
//   usmodem ber-sweep  --ebn0-db 4,6,8 [--channel C] [--bits N] [--csv F]
//   usmodem show-config [--preset P | --config F]
//
// Exit status: 0 success, 1 decode failure, 2 configuration or usage error.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "usm/framer.hpp"
#include "usm/io.hpp"
#include "usm/modem.hpp"
#include "usm/rx.hpp"
#include "usm/sync.hpp"

namespace {

using namespace usm;

constexpr int kExitDecode = 1;
constexpr int kExitConfig = 2;

struct Common {
  std::string preset = "rabbit";
  std::string config;
  std::string metrics;
};

modem::ModemConfig resolve(const Common& c) {
  auto cfg = modem::preset(c.preset);
  if (!c.config.empty()) cfg = io::load_config(c.config, cfg);
  return modem::validate(cfg);
}

void add_common(CLI::App* app, Common& c) {
  app->add_option("--preset", c.preset, "rabbit | porcine-hd | endoscopy")->capture_default_str();
  app->add_option("--config", c.config, "key = value config file, applied on top of the preset");
}

void print_layouts(const std::vector<FrameLayout>& layouts) {
  for (std::size_t i = 0; i < layouts.size(); ++i) {
    const auto& l = layouts[i];
    std::printf("  frame %zu: chirp %zu + guard %zu samples | training %zu | %zu packets x (1 header + %zu retrain + %zu data) | %s | %zu symbols\n",
                i, l.chirp_len, l.guard_len, l.training_len, l.n_packets, l.retrain_len, l.packet_len,
                l.has_eof ? "EOF" : "no EOF", l.total_symbols());
  }
}

void print_latency(const modem::ModemConfig& cfg) {
  std::printf("noncausal feedforward latency: %.1f us (%d taps at T/2, T_b = %.3g us)\n",
              modem::noncausal_latency_s(cfg) * 1e6, cfg.eq.n_ff, 1e6 / cfg.link.symbol_rate_hz);
}

void print_rx(const modem::RxResult& rx) {
  for (std::size_t i = 0; i < rx.frames.size(); ++i) {
    const auto& f = rx.frames[i];
    std::printf("  frame %zu: start %zu conf %.3f doppler %.6f packets %zu %s mse(data) %.1f dB\n", i,
                f.sync.frame_start_sample, f.sync.confidence, f.doppler.scale, f.layout.n_packets,
                f.layout.has_eof ? "EOF" : "no-EOF", f.mse_data_db);
  }
  for (const auto& w : rx.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
}

std::vector<double> parse_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    if (item == "inf")
      out.push_back(std::numeric_limits<double>::infinity());
    else
      out.push_back(std::stod(item));
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Ultrasonic QAM modem: modulate, demodulate and simulate file transfers"};
  app.require_subcommand(1);

  Common mod_c, dem_c, sim_c, sweep_c, show_c;
  std::string mod_in, mod_out;
  auto* mod = app.add_subcommand("modulate", "file -> passband signal file");
  add_common(mod, mod_c);
  mod->add_option("input", mod_in, "payload file")->required();
  mod->add_option("--out", mod_out, "signal file to write")->required();

  std::string dem_in, dem_out, dem_truth;
  auto* dem = app.add_subcommand("demodulate", "passband signal file -> file");
  add_common(dem, dem_c);
  dem->add_option("input", dem_in, "signal file")->required();
  dem->add_option("--out", dem_out, "recovered payload")->required();
  dem->add_option("--truth", dem_truth, "original payload, for BER");
  dem->add_option("--metrics", dem_c.metrics, "write a JSON report");

  std::string sim_in, sim_out, sim_channel = "clean", sim_trace;
  std::optional<double> sim_snr;
  std::optional<std::uint64_t> sim_seed;
  double sim_threshold = -1.0, sim_drain = 0.0;
  auto* sim = app.add_subcommand("simulate", "modulate -> channel -> demodulate");
  add_common(sim, sim_c);
  sim->add_option("input", sim_in, "payload file")->required();
  sim->add_option("--out", sim_out, "recovered payload");
  sim->add_option("--channel", sim_channel, "clean | rabbit_like | intestine_like | channel file")->capture_default_str();
  sim->add_option("--snr-db", sim_snr, "override the channel SNR (dB, or inf)");
  sim->add_option("--seed", sim_seed, "noise seed");
  sim->add_option("--metrics", sim_c.metrics, "write a JSON report");
  sim->add_option("--buffer-threshold", sim_threshold, "receiver buffer fill (bytes) before playback starts");
  sim->add_option("--drain-rate", sim_drain, "playback rate in bytes/s (default: link data rate)");
  sim->add_option("--trace", sim_trace, "write the buffer trace as JSON lines");

  std::string sweep_channel = "clean", sweep_list = "4,5,6,7,8", sweep_csv;
  std::size_t sweep_bits = 2'000'000;
  std::uint64_t sweep_seed = 1;
  bool sweep_eq = false;
  auto* sweep = app.add_subcommand("ber-sweep", "BER versus Eb/N0 against the AWGN closed form");
  add_common(sweep, sweep_c);
  sweep->add_option("--channel", sweep_channel, "channel preset or file (its SNR is replaced)")->capture_default_str();
  sweep->add_option("--ebn0-db", sweep_list, "comma separated Eb/N0 values in dB")->capture_default_str();
  sweep->add_option("--bits", sweep_bits, "bits per point")->capture_default_str();
  sweep->add_option("--seed", sweep_seed, "base seed")->capture_default_str();
  sweep->add_flag("--equalize", sweep_eq, "decode with the adaptive equalizer");
  sweep->add_option("--csv", sweep_csv, "write the table as CSV");

  auto* show = app.add_subcommand("show-config", "print the resolved configuration");
  add_common(show, show_c);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }

  try {
    if (*mod) {
      const auto cfg = resolve(mod_c);
      const auto payload = io::read_file(mod_in);
      const auto tx = modem::modulate_bytes(payload, cfg);
      io::write_signal(mod_out, tx.signal);
      std::printf("%s: %zu bytes -> %zu frames, %zu samples (%.3f s at %.0f Hz)\n", cfg.name.c_str(), payload.size(),
                  tx.layouts.size(), tx.signal.samples.size(),
                  static_cast<double>(tx.signal.samples.size()) / tx.signal.sample_rate_hz, tx.signal.sample_rate_hz);
      print_layouts(tx.layouts);
      std::printf("gross data rate: %.0f bit/s\n", data_rate(cfg.link));
      return 0;
    }

    if (*dem) {
      const auto cfg = resolve(dem_c);
      const auto t0 = std::chrono::steady_clock::now();
      const auto signal = io::read_passband(dem_in);
      auto rx = modem::demodulate_frames(signal, cfg);
      print_rx(rx);
      print_latency(cfg);
      std::optional<rx::BerResult> ber;
      if (!dem_truth.empty()) {
        const auto truth = io::read_file(dem_truth);
        ber = modem::payload_ber(rx.decoded, truth, cfg.link);
        std::printf("BER %.3e (%zu / %zu bits)\n", ber->ber, ber->errors, ber->total);
      }
      int rc = 0;
      try {
        rx.payload = framer::reassemble(rx.decoded, cfg.link, &rx.meta);
        io::write_file(dem_out, rx.payload);
        std::printf("recovered %zu bytes, checksum ok\n", rx.payload.size());
      } catch (const Error& e) {
        std::fprintf(stderr, "decode failed: %s\n", e.what());
        rc = kExitDecode;
      }
      const double runtime = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      if (!dem_c.metrics.empty()) io::write_text(dem_c.metrics, modem::metrics_json(cfg, rx, runtime, ber));
      return rc;
    }

    if (*sim) {
      const auto cfg = resolve(sim_c);
      auto ch = io::load_channel(sim_channel);
      if (sim_snr) ch.snr_db = *sim_snr;
      if (sim_seed) ch.seed = *sim_seed;
      const auto payload = io::read_file(sim_in);
      const auto res = modem::simulate(payload, cfg, ch);
      std::printf("%s over %s (SNR %s dB): %zu frames\n", cfg.name.c_str(), ch.name.c_str(),
                  std::isfinite(ch.snr_db) ? std::to_string(ch.snr_db).c_str() : "inf", res.rx.frames.size());
      print_rx(res.rx);
      print_latency(cfg);
      if (res.ber) std::printf("BER %.3e (%zu / %zu bits)\n", res.ber->ber, res.ber->errors, res.ber->total);
      std::printf("runtime %.2f s\n", res.runtime_s);
      if (sim_threshold >= 0.0) {
        framer::BufferOptions bo;
        bo.fill_threshold = static_cast<std::size_t>(sim_threshold);
        bo.drain_rate_bytes_per_s = sim_drain > 0.0 ? sim_drain : data_rate(cfg.link) / 8.0;
        const auto trace = framer::simulate_buffering(modem::frame_schedule(res.tx, cfg), bo);
        std::printf("buffering: pipeline delay %.3f s, playback starts at %.3f s, %zu underflows\n",
                    trace.pipeline_delay_s, trace.latency_s, trace.underflows);
        if (!sim_trace.empty()) io::write_text(sim_trace, framer::to_jsonl(trace));
      }
      if (!sim_c.metrics.empty()) io::write_text(sim_c.metrics, modem::metrics_json(cfg, res, ch));
      if (!res.ok) {
        std::fprintf(stderr, "decode failed: %s\n", res.error.c_str());
        return kExitDecode;
      }
      if (!sim_out.empty()) io::write_file(sim_out, res.payload);
      std::printf("recovered %zu bytes, checksum ok\n", res.payload.size());
      return 0;
    }

    if (*sweep) {
      const auto cfg = resolve(sweep_c);
      const auto ch = io::load_channel(sweep_channel);
      const auto list = parse_list(sweep_list);
      modem::SweepOptions so;
      so.bits_per_point = sweep_bits;
      so.seed = sweep_seed;
      so.equalize = sweep_eq;
      const auto pts = modem::ber_sweep(cfg, ch, list, so);
      std::ostringstream csv;
      csv << "ebn0_db,snr_db,bits,bit_errors,symbol_errors,ber,theory_ber\n";
      std::printf("%8s %8s %10s %10s %10s %11s %11s\n", "Eb/N0", "SNR", "bits", "errors", "sym_err", "BER", "theory");
      for (const auto& p : pts) {
        std::printf("%8.2f %8.2f %10zu %10zu %10zu %11.3e %11.3e\n", p.ebn0_db, p.snr_db, p.bits, p.bit_errors,
                    p.symbol_errors, p.ber, p.theory_ber);
        csv << p.ebn0_db << ',' << p.snr_db << ',' << p.bits << ',' << p.bit_errors << ',' << p.symbol_errors << ','
            << p.ber << ',' << p.theory_ber << '\n';
      }
      if (!sweep_csv.empty()) io::write_text(sweep_csv, csv.str());
      return 0;
    }

    if (*show) {
      const auto cfg = resolve(show_c);
      std::cout << io::serialize_config(cfg);
      std::printf("# L = %d, gross data rate %.0f bit/s, noncausal feedforward latency %.1f us\n",
                  samples_per_symbol(cfg.link), data_rate(cfg.link), modem::noncausal_latency_s(cfg) * 1e6);
      return 0;
    }
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "configuration error:\n%s\n", e.what());
    return kExitConfig;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitDecode;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitDecode;
  }
  return 0;
}
