#include <cmath>
#include <random>

#include "doctest.h"
#include "json.hpp"
#include "usm/modem.hpp"

using namespace usm;

namespace {

std::vector<std::uint8_t> random_bytes(std::size_t n, unsigned seed) {
  std::mt19937 g(seed);
  std::vector<std::uint8_t> v(n);
  for (auto& b : v) b = static_cast<std::uint8_t>(g());
  return v;
}

channel::ChannelModel clean() { return {}; }

// Q(x) by direct numerical integration of the normal tail, for the oracle.
double q_integral(double x) {
  const int n = 200000;
  const double hi = x + 12.0, h = (hi - x) / n;
  double s = 0.0;
  for (int i = 0; i <= n; ++i) {
    const double t = x + i * h;
    const double w = (i == 0 || i == n) ? 1 : (i % 2 ? 4 : 2);
    s += w * std::exp(-t * t / 2);
  }
  return s * h / 3 / std::sqrt(2 * M_PI);
}

}  // namespace

TEST_CASE("presets") {
  auto r = modem::preset("rabbit");
  CHECK(r.link.carrier_freq_hz == 1.2e6);
  CHECK(r.link.symbol_rate_hz == 5e5);
  CHECK(r.link.modulation == Modulation::QAM16);
  CHECK(data_rate(r.link) == 2e6);
  auto p = modem::preset("porcine-hd");
  CHECK(p.link.modulation == Modulation::QPSK);
  CHECK(data_rate(p.link) == 2e6);
  CHECK(p.eq.n_fb <= 211);
  auto e = modem::preset("endoscopy");
  CHECK(e.link.carrier_freq_hz == 1.13e6);
  CHECK(data_rate(e.link) == 4e6);
  for (const auto& n : modem::preset_names()) {
    auto c = modem::preset(n);
    CHECK(c.eq.n_ff == 70);
    CHECK(c.eq.rls_lambda == 0.997);
    CHECK_NOTHROW(modem::validate(c));
  }
  CHECK_THROWS_AS(modem::preset("ferret"), ConfigError);
}

TEST_CASE("training fraction of the presets") {
  // known symbols over all symbols for a long stream
  for (const auto& n : modem::preset_names()) {
    CAPTURE(n);
    auto l = modem::preset(n).link;
    const double per_packet = l.header_interval_symbols + 1 + l.retrain_symbols_per_packet;
    const double packets = std::floor(static_cast<double>(l.frame_max_bytes) * 8 / bits_per_symbol(l.modulation) /
                                      l.header_interval_symbols);
    const double known = l.training_symbols_per_frame + packets * l.retrain_symbols_per_packet;
    const double frac = known / (l.training_symbols_per_frame + packets * per_packet + 1);
    CHECK(frac <= 0.16);
  }
}

TEST_CASE("clean loopback on small payloads") {
  for (const auto& n : modem::preset_names()) {
    for (std::size_t bytes : {0ul, 1ul, 5000ul}) {
      CAPTURE(n);
      CAPTURE(bytes);
      auto cfg = modem::preset(n);
      auto src = random_bytes(bytes, static_cast<unsigned>(bytes) + 1);
      auto tx = modem::modulate_bytes(src, cfg);
      CHECK(tx.layouts.size() == 1);
      auto rx = modem::demodulate(tx.signal, cfg);
      CHECK(rx.payload == src);
      CHECK(rx.meta == tx.meta);
      REQUIRE(rx.frames.size() == 1);
      CHECK(std::abs(static_cast<long>(rx.frames[0].sync.frame_start_sample) -
                     static_cast<long>(tx.frame_starts[0])) <= 1);
    }
  }
}

TEST_CASE("simulate through multipath and its metrics") {
  auto cfg = modem::preset("rabbit");
  auto ch = channel::preset("rabbit_like");
  auto src = random_bytes(20000, 3);
  auto a = modem::simulate(src, cfg, ch);
  REQUIRE(a.ok);
  CHECK(a.payload == src);
  REQUIRE(a.ber);
  CHECK(a.ber->errors == 0);
  CHECK(a.ber->total == 8 * src.size());

  auto j = nlohmann::json::parse(modem::metrics_json(cfg, a, ch));
  CHECK(j["data_rate_bps"].get<double>() == 2e6);
  CHECK(j["latency"]["noncausal_feedforward_s"].get<double>() == doctest::Approx(70e-6));
  const double tf = j["training_fraction"].get<double>();
  CHECK(tf >= 0.0);
  CHECK(tf <= 1.0);
  std::function<void(const nlohmann::json&)> finite = [&](const nlohmann::json& v) {
    if (v.is_number()) CHECK(std::isfinite(v.get<double>()));
    if (v.is_structured())
      for (const auto& x : v) finite(x);
  };
  finite(j);

  // same seed, same report (runtime aside)
  auto b = modem::simulate(src, cfg, ch);
  auto ja = nlohmann::json::parse(modem::metrics_json(cfg, a, ch));
  auto jb = nlohmann::json::parse(modem::metrics_json(cfg, b, ch));
  ja.erase("runtime_s");
  jb.erase("runtime_s");
  CHECK(ja == jb);
}

TEST_CASE("multi-frame stream") {
  auto cfg = modem::preset("endoscopy");
  cfg.link.frame_max_bytes = 3 * 1024;
  auto src = random_bytes(7000, 4);
  auto tx = modem::modulate_bytes(src, cfg);
  REQUIRE(tx.layouts.size() == 3);
  CHECK(tx.frame_starts.size() == 3);
  for (std::size_t i = 1; i < 3; ++i) CHECK(tx.frame_starts[i] >= tx.frame_ends[i - 1]);
  auto rx = modem::demodulate(tx.signal, cfg);
  CHECK(rx.payload == src);

  auto sched = modem::frame_schedule(tx, cfg);
  REQUIRE(sched.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(sched[i].bytes == tx.frame_bytes[i] - (i == 0 ? framer::kPrologueBytes : 0));
    CHECK(sched[i].time_s == doctest::Approx(static_cast<double>(tx.frame_ends[i]) / cfg.link.sample_rate_hz));
  }
}

TEST_CASE("decode failures") {
  auto cfg = modem::preset("rabbit");
  PassbandBuffer silence{std::vector<double>(200000, 0.0), cfg.link.sample_rate_hz};
  CHECK_THROWS_AS(modem::demodulate(silence, cfg), rx::NoFrameFound);
  auto src = random_bytes(3000, 5);
  auto tx = modem::modulate_bytes(src, cfg);
  tx.signal.samples.resize(tx.frame_ends[0] - 30000);
  CHECK_THROWS_AS(modem::demodulate(tx.signal, cfg), framer::MissingEOF);
  auto sim = modem::simulate(src, cfg, channel::ChannelModel{"cut", {channel::Tap{}}, 1.0, -20.0, 1});
  CHECK_FALSE(sim.ok);
  CHECK_FALSE(sim.error.empty());
}

TEST_CASE("theory curves") {
  // independent Q oracle
  for (double e : {0.0, 4.0, 9.6}) {
    const double q = q_integral(std::sqrt(2 * std::pow(10.0, e / 10)));
    CHECK(modem::theoretical_ber(Modulation::QPSK, e) == doctest::Approx(q).epsilon(1e-6));
    const double q16 = 0.75 * q_integral(std::sqrt(0.8 * std::pow(10.0, e / 10)));
    CHECK(modem::theoretical_ber(Modulation::QAM16, e) == doctest::Approx(q16).epsilon(1e-6));
  }
  CHECK(modem::theoretical_ber(Modulation::QPSK, 9.6) == doctest::Approx(1.0e-5).epsilon(0.1));
  for (auto m : {Modulation::QPSK, Modulation::QAM16})
    for (double b : {1e-2, 1e-3, 1e-4}) CHECK(modem::theoretical_ber(m, modem::ebn0_for_ber(m, b)) == doctest::Approx(b).epsilon(1e-6));

  // real noise of variance s2 spread over f_s/2 against data power 1/2:
  // Es/N0 = SNR * L / 2, Es = bits * Eb
  auto l = modem::preset("rabbit").link;
  const double L = samples_per_symbol(l);
  CHECK(modem::snr_db_from_ebn0(10.0, l) ==
        doctest::Approx(10.0 + 10 * std::log10(4.0) - 10 * std::log10(L / 2)).epsilon(1e-9));
}

TEST_CASE("ber_sweep sentinel and a noisy point") {
  auto cfg = modem::preset("porcine-hd");
  modem::SweepOptions o;
  o.bits_per_point = 100000;
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> pts{inf, 4.0};
  auto r = modem::ber_sweep(cfg, clean(), pts, o);
  REQUIRE(r.size() == 2);
  CHECK(r[0].bit_errors == 0);
  CHECK(r[0].ber == 0.0);
  CHECK(r[0].bits >= 100000);
  const double th = modem::theoretical_ber(Modulation::QPSK, 4.0);
  CHECK(r[1].ber == doctest::Approx(th).epsilon(0.15));
  CHECK(r[1].symbol_errors > 0);
}

TEST_CASE("noncausal latency") {
  CHECK(modem::noncausal_latency_s(modem::preset("rabbit")) == doctest::Approx(70e-6));
  CHECK(modem::noncausal_latency_s(modem::preset("endoscopy")) == doctest::Approx(35e-6));
}
