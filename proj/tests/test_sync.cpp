#include <cmath>
#include <random>

#include "doctest.h"
#include "usm/channel.hpp"
#include "usm/sync.hpp"
#include "usm/tx.hpp"

using namespace usm;

namespace {

LinkConfig link() { return make_link_config(1.2e6, 5e5, Modulation::QAM16); }

double sweep_bw(const LinkConfig& c) { return std::abs(c.chirp.end_freq_hz - c.chirp.start_freq_hz); }

// chirp at `offset`, then some shaped data so the tail is not silent
PassbandBuffer embed(const LinkConfig& cfg, std::size_t offset, std::size_t total, unsigned seed) {
  PassbandBuffer rx{std::vector<double>(total, 0.0), cfg.sample_rate_hz};
  auto c = tx::generate_chirp(cfg.chirp, cfg.sample_rate_hz);
  std::copy(c.samples.begin(), c.samples.end(), rx.samples.begin() + static_cast<std::ptrdiff_t>(offset));
  std::mt19937 g(seed);
  SymbolBlock b;
  for (int i = 0; i < 400; ++i) b.push_back(map_label(cfg.modulation, g() & 15u), SymbolRole::Data);
  auto shaped = tx::pulse_shape(b, tx::make_rrc(cfg), cfg.sample_rate_hz);
  for (auto& s : shaped.samples) s *= tx::data_amplitude(cfg);
  auto data = tx::upconvert(shaped, cfg.carrier_freq_hz);
  const std::size_t d0 = offset + c.samples.size() + static_cast<std::size_t>(cfg.guard_samples);
  for (std::size_t i = 0; i < data.samples.size() && d0 + i < total; ++i) rx.samples[d0 + i] = data.samples[i];
  return rx;
}

}  // namespace

TEST_CASE("normalized correlation of a clean chirp is about 1") {
  auto cfg = link();
  auto rx = embed(cfg, 777, 40000, 1);
  auto t = tx::analytic_chirp(cfg.chirp, cfg.sample_rate_hz);
  auto ncc = rx::normalized_correlation(rx.samples, t);
  REQUIRE(ncc.size() == rx.samples.size() - t.size() + 1);
  auto it = std::max_element(ncc.begin(), ncc.end());
  CHECK(it - ncc.begin() == 777);
  CHECK(*it == doctest::Approx(1.0).epsilon(0.01));
  // the real chirp's 2 f image makes the half-energy normalization inexact
  for (double v : ncc) CHECK(v <= 1.01);
}

TEST_CASE("detect_frame finds the exact offset without noise") {
  auto cfg = link();
  auto rx = embed(cfg, 12345, 60000, 2);
  auto r = rx::detect_frame(rx, tx::analytic_chirp(cfg.chirp, cfg.sample_rate_hz), sweep_bw(cfg));
  CHECK(r.frame_start_sample == 12345);
  CHECK(r.confidence > 0.9);
  CHECK(r.confidence <= 1.0);
}

TEST_CASE("detect_frame at 0 dB SNR stays within one sample") {
  auto cfg = link();
  auto tmpl = tx::analytic_chirp(cfg.chirp, cfg.sample_rate_hz);
  int hits = 0;
  const int trials = 40;
  for (int s = 0; s < trials; ++s) {
    auto rx = channel::add_noise(embed(cfg, 12345, 40000, 3), 0.0, 1000 + s, 0.5);
    auto r = rx::detect_frame(rx, tmpl, sweep_bw(cfg));
    hits += std::abs(static_cast<long>(r.frame_start_sample) - 12345) <= 1;
  }
  CHECK(hits == trials);
}

TEST_CASE("pure noise is rejected") {
  auto cfg = link();
  PassbandBuffer rx{std::vector<double>(50000, 0.0), cfg.sample_rate_hz};
  rx = channel::add_noise(rx, 0.0, 5, 1.0);
  CHECK_THROWS_AS(rx::detect_frame(rx, tx::analytic_chirp(cfg.chirp, cfg.sample_rate_hz), sweep_bw(cfg)), rx::NoFrameFound);
  PassbandBuffer tiny{std::vector<double>(10, 0.0), cfg.sample_rate_hz};
  CHECK_THROWS_AS(rx::detect_frame(tiny, tx::analytic_chirp(cfg.chirp, cfg.sample_rate_hz), sweep_bw(cfg)), rx::NoFrameFound);
}

TEST_CASE("property: confidence is monotone in the peak-to-sidelobe ratio") {
  // Fixed sidelobe floor with known spread; raise the peak.
  std::mt19937 g(4);
  std::normal_distribution<double> nd(0.1, 0.02);
  std::vector<double> ncc(2001);
  for (auto& v : ncc) v = std::abs(nd(g));
  double last = -1;
  for (double peak = 0.12; peak < 2.0; peak += 0.02) {
    ncc[1000] = peak;
    const double c = rx::peak_confidence(ncc, 1000, 1000, 5);
    CHECK(c >= last);
    CHECK(c >= 0.0);
    CHECK(c <= 1.0);
    last = c;
  }
  CHECK(last > 0.95);
}

TEST_CASE("detect_frames separates consecutive chirps") {
  auto cfg = link();
  auto a = embed(cfg, 3000, 30000, 6);
  auto b = embed(cfg, 1000, 30000, 7);
  PassbandBuffer rx{a.samples, cfg.sample_rate_hz};
  rx.samples.insert(rx.samples.end(), b.samples.begin(), b.samples.end());
  auto frames = rx::detect_frames(rx, tx::analytic_chirp(cfg.chirp, cfg.sample_rate_hz), sweep_bw(cfg), 20000);
  REQUIRE(frames.size() == 2);
  CHECK(frames[0].frame_start_sample == 3000);
  CHECK(frames[1].frame_start_sample == 31000);
}

TEST_CASE("Doppler estimation") {
  auto cfg = link();
  auto tmpl = tx::analytic_chirp(cfg.chirp, cfg.sample_rate_hz);

  SUBCASE("undistorted") {
    auto rx = embed(cfg, 5000, 40000, 8);
    auto est = rx::estimate_doppler(rx, cfg.chirp, 5000);
    CHECK(std::abs(est.scale - 1.0) < 1e-5);
    CHECK_FALSE(est.clamped);
  }
  SUBCASE("injected 1.0005") {
    for (double snr : {std::numeric_limits<double>::infinity(), 10.0}) {
      CAPTURE(snr);
      auto rx = channel::apply_doppler(embed(cfg, 5000, 40000, 9), 1.0005);
      rx = channel::add_noise(rx, snr, 11, 0.5);
      auto sync = rx::detect_frame(rx, tmpl, sweep_bw(cfg));
      auto est = rx::estimate_doppler(rx, cfg.chirp, sync.frame_start_sample);
      CHECK(std::abs(est.scale - 1.0005) < 1e-4);
      CHECK_FALSE(est.clamped);
      // correction restores the chirp to its nominal length
      auto fixed = rx::correct_doppler(rx, est.scale);
      auto again = rx::detect_frame(fixed, tmpl, sweep_bw(cfg));
      CHECK(again.correlation_peak > sync.correlation_peak);
    }
  }
  SUBCASE("grid excludes the truth") {
    auto rx = channel::apply_doppler(embed(cfg, 5000, 40000, 10), 1.0009);
    rx::DopplerGrid grid{0.9995, 1.0005, 1e-4};
    auto est = rx::estimate_doppler(rx, cfg.chirp, 5000, grid);
    CHECK(est.clamped);
    CHECK(est.scale == doctest::Approx(1.0005));
  }
}

TEST_CASE("correct_doppler inverts apply_doppler") {
  auto cfg = link();
  auto x = embed(cfg, 2000, 30000, 12);
  auto y = rx::correct_doppler(channel::apply_doppler(x, 1.0004), 1.0004);
  double err = 0, peak = 0;
  // data region only; the chirp's hard on/off edges are not band-limited
  for (std::size_t i = 17500; i + 500 < std::min(x.samples.size(), y.samples.size()); ++i) {
    err = std::max(err, std::abs(x.samples[i] - y.samples[i]));
    peak = std::max(peak, std::abs(x.samples[i]));
  }
  CHECK(err < 2e-3 * peak);
}

TEST_CASE("training_doppler") {
  auto cfg = link();
  std::mt19937 g(13);
  SymbolBlock pkt;
  for (int i = 0; i < cfg.header_interval_symbols; ++i) pkt.push_back(map_label(cfg.modulation, g() & 15u), SymbolRole::Data);
  const std::vector<SymbolBlock> packets{pkt};
  auto frame = tx::modulate_frame(cfg, tx::assemble_frame(cfg, tx::training_block(cfg), packets));
  const std::size_t lead = 3000;
  frame.samples.insert(frame.samples.begin(), lead, 0.0);
  const std::size_t data_start = lead + tx::generate_chirp(cfg.chirp, cfg.sample_rate_hz).samples.size() +
                                 static_cast<std::size_t>(cfg.guard_samples);

  SUBCASE("undistorted") {
    auto est = rx::training_doppler(frame, cfg, data_start);
    CHECK(std::abs(est.scale - 1.0) < 1e-7);
    CHECK_FALSE(est.clamped);
  }
  SUBCASE("injected scale") {
    // 0.9996 stretches a segment by about one carrier period
    for (double a : {1.0003, 0.9996, 1.0008, 0.9991}) {
      CAPTURE(a);
      auto est = rx::training_doppler(channel::apply_doppler(frame, a), cfg, data_start);
      CHECK(std::abs(est.scale - a) < 1e-7);
      CHECK_FALSE(est.clamped);
    }
  }
  SUBCASE("multipath does not bias it") {
    auto ch = channel::preset("rabbit_like");
    auto rx = channel::apply_multipath(frame, ch.taps, cfg.carrier_freq_hz);
    auto est = rx::training_doppler(rx, cfg, data_start);
    CHECK(std::abs(est.scale - 1.0) < 1e-6);
  }
  SUBCASE("clamped to the search range") {
    auto est = rx::training_doppler(channel::apply_doppler(frame, 1.0008), cfg, data_start, 4e-4);
    CHECK(est.clamped);
    CHECK(std::abs(est.scale - 1.0) <= 4e-4 + 1e-12);
  }
}
