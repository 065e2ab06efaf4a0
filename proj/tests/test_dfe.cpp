#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <random>

#include "doctest.h"
#include "usm/channel.hpp"
#include "usm/dfe.hpp"
#include "usm/kernels.hpp"
#include "usm/tx.hpp"

using namespace usm;

namespace {

struct Frame {
  tx::FrameSymbols fs;
  std::vector<cplx> known;
};

Frame make_frame(const LinkConfig& cfg, std::size_t n_packets, unsigned seed) {
  std::mt19937 g(seed);
  const unsigned mask = cfg.modulation == Modulation::QPSK ? 3u : 15u;
  std::vector<SymbolBlock> packets(n_packets);
  for (auto& p : packets)
    for (int i = 0; i < cfg.header_interval_symbols; ++i) p.push_back(map_label(cfg.modulation, g() & mask), SymbolRole::Data);
  Frame f;
  f.fs = tx::assemble_frame(cfg, tx::training_block(cfg), packets);
  f.known = tx::known_symbols(cfg, n_packets);
  return f;
}

struct Impair {
  std::vector<channel::Tap> taps{channel::Tap{}};
  double snr_db = std::numeric_limits<double>::infinity();
  std::uint64_t seed = 1;
  double phase = 0.0;
  double gain = 1.0;
  std::ptrdiff_t shift = 0;  // full-rate samples; L/4 is half a T/2 sample
};

// Baseband link: shape, multipath, noise, matched filter, T/2 sampling with
// symbol k's peak at index 2k.
std::vector<cplx> receive(const LinkConfig& cfg, const SymbolBlock& sym, const Impair& im) {
  const auto p = tx::make_rrc(cfg);
  auto x = tx::pulse_shape(sym, p, cfg.sample_rate_hz);
  x = channel::apply_multipath(x, im.taps);
  x = channel::add_noise(x, im.snr_db, im.seed);
  auto mf = kernels::convolve<cplx>(x.samples, p.taps);
  const auto L = static_cast<std::ptrdiff_t>(samples_per_symbol(cfg));
  std::vector<cplx> out(2 * sym.size() + 200);
  const cplx rot = std::polar(im.gain, im.phase);
  for (std::size_t m = 0; m < out.size(); ++m) {
    const std::ptrdiff_t idx = static_cast<std::ptrdiff_t>(2 * p.delay()) + static_cast<std::ptrdiff_t>(m) * L / 2 + im.shift;
    if (idx >= 0 && idx < static_cast<std::ptrdiff_t>(mf.size())) out[m] = mf[static_cast<std::size_t>(idx)] * rot;
  }
  return out;
}

struct Count {
  std::size_t data = 0, errors = 0;
  double ser() const { return data ? static_cast<double>(errors) / data : 0.0; }
};

Count symbol_errors(const rx::DfeResult& r, const SymbolBlock& truth) {
  Count c;
  for (std::size_t i = 0; i < r.decided.size() && i < truth.size(); ++i) {
    if (truth.roles[i] != SymbolRole::Data) continue;
    ++c.data;
    c.errors += r.decided.symbols[i] != truth.symbols[i];
  }
  return c;
}

LinkConfig rabbit() { return make_link_config(1.2e6, 5e5, Modulation::QAM16); }

rx::EqualizerConfig small_eq() {
  rx::EqualizerConfig eq;
  eq.n_ff = 16;
  eq.n_fb = 8;
  return eq;
}

}  // namespace

TEST_CASE("validation") {
  CHECK_NOTHROW(rx::validate(rx::EqualizerConfig{}));
  rx::EqualizerConfig e;
  e.rls_lambda = 1.0;
  e.n_ff = 0;
  try {
    rx::validate(e);
    FAIL("expected ConfigError");
  } catch (const ConfigError& err) {
    CHECK(err.violations().size() == 2);
  }
  CHECK(rx::EqualizerConfig{}.rls_lambda == 0.997);
  CHECK(rx::EqualizerConfig{}.n_ff == 70);
  CHECK(rx::EqualizerConfig{}.n_fb == 200);
}

TEST_CASE("identity channel: decisions equal the transmitted symbols") {
  auto cfg = rabbit();
  auto f = make_frame(cfg, 2, 1);
  auto s = receive(cfg, f.fs.symbols, {});
  auto r = rx::dfe_run(s, small_eq(), cfg.modulation, f.known, f.fs.layout);
  REQUIRE(r.decided.size() == f.fs.symbols.size());
  CHECK(r.decided.symbols == f.fs.symbols.symbols);
  CHECK(r.decided.roles == f.fs.symbols.roles);
  CHECK(r.layout.n_packets == 2);
  CHECK(r.layout.has_eof);
  CHECK(r.warnings.empty());
  CHECK(r.training_symbols == 4000);
}

TEST_CASE("state invariants") {
  auto cfg = rabbit();
  auto f = make_frame(cfg, 1, 2);
  Impair im;
  im.phase = 2.5;
  auto s = receive(cfg, f.fs.symbols, im);
  auto eq = small_eq();
  auto r = rx::dfe_run(s, eq, cfg.modulation, f.known, f.fs.layout);
  REQUIRE(r.state.decision_history.size() == static_cast<std::size_t>(eq.n_fb));
  for (int j = 0; j < eq.n_fb; ++j)
    CHECK(r.state.decision_history[j] == r.decided.symbols[r.decided.size() - 1 - j]);
  CHECK(r.state.phase_est > -M_PI);
  CHECK(r.state.phase_est <= M_PI);
  CHECK(r.state.error_trace.size() == r.decided.size());
  CHECK(r.soft.size() == r.decided.size());
}

TEST_CASE("training-mode coefficients equal the weighted least-squares solve") {
  // PLL and dither off, so the regressors are fixed functions of the input;
  // rebuild them and solve the normal equations directly.
  auto cfg = rabbit();
  cfg.training_symbols_per_frame = 100;
  auto f = make_frame(cfg, 0, 3);
  Impair im;
  im.taps = channel::preset("rabbit_like").taps;
  im.snr_db = 20;
  auto s = receive(cfg, f.fs.symbols, im);
  s.resize(200);  // exactly 100 symbols: no header is read
  rx::EqualizerConfig eq;
  eq.n_ff = 10;
  eq.n_fb = 6;
  eq.pll_kp = eq.pll_ki = 0;
  eq.dither_rms = 0;
  auto r = rx::dfe_run(s, eq, cfg.modulation, f.known, f.fs.layout);
  REQUIRE(r.training_symbols == 100);

  const std::size_t n = 16, k = 100;
  Eigen::MatrixXcd R = Eigen::MatrixXcd::Identity(n, n) * (std::pow(eq.rls_lambda, k) * eq.delta_init);
  Eigen::VectorXcd b = Eigen::VectorXcd::Zero(n);
  for (std::size_t i = 0; i < k; ++i) {
    Eigen::VectorXcd u(n);
    for (std::size_t j = 0; j < 10; ++j) u[j] = 2 * i + j < s.size() ? s[2 * i + j] * r.input_gain : cplx{};
    for (std::size_t j = 0; j < 6; ++j) u[10 + j] = (i >= j + 1) ? -f.known[i - j - 1] : cplx{};
    const double w = std::pow(eq.rls_lambda, static_cast<double>(k - 1 - i));
    R += w * u.conjugate() * u.transpose();
    b += w * u.conjugate() * f.known[i];
  }
  Eigen::VectorXcd ref = R.ldlt().solve(b);
  Eigen::VectorXcd got(n);
  for (std::size_t j = 0; j < n; ++j) got[static_cast<Eigen::Index>(j)] = r.state.rls.weights()[j];
  for (std::size_t j = 0; j < n; ++j) CHECK(std::abs(got[static_cast<Eigen::Index>(j)] - ref[static_cast<Eigen::Index>(j)]) < 1e-6);
}

TEST_CASE("3-tap multipath at 25 dB with the preset tap budget") {
  // Regression fixture: seed 11, rabbit_like taps, 6 packets.
  auto cfg = rabbit();
  auto f = make_frame(cfg, 6, 11);
  Impair im;
  im.taps = channel::preset("rabbit_like").taps;
  im.snr_db = 25;
  im.seed = 11;
  auto s = receive(cfg, f.fs.symbols, im);
  rx::EqualizerConfig eq;  // 70 / 200, lambda 0.997
  eq.sparse_keep = 128;
  auto r = rx::dfe_run(s, eq, cfg.modulation, f.known, f.fs.layout);
  auto c = symbol_errors(r, f.fs.symbols);
  CHECK(c.data == 6 * 2048);
  CHECK(c.ser() < 1e-3);
  CHECK(c.errors == 0);
  CHECK(r.state.rls.active_size() == 128);
}

TEST_CASE("property: phase and gain invariance") {
  auto cfg = rabbit();
  auto f = make_frame(cfg, 2, 21);
  Impair base;
  base.taps = channel::preset("rabbit_like").taps;
  base.snr_db = 25;
  base.seed = 21;
  auto eq = small_eq();
  eq.n_ff = 24;
  eq.n_fb = 24;
  auto ref = rx::dfe_run(receive(cfg, f.fs.symbols, base), eq, cfg.modulation, f.known, f.fs.layout);
  REQUIRE(symbol_errors(ref, f.fs.symbols).errors == 0);
  for (double th : {-0.7, -0.3, 0.2, 0.75}) {
    CAPTURE(th);
    Impair im = base;
    im.phase = th;
    auto r = rx::dfe_run(receive(cfg, f.fs.symbols, im), eq, cfg.modulation, f.known, f.fs.layout);
    CHECK(r.decided.symbols == ref.decided.symbols);
  }
  for (double a : {0.5, 0.8, 1.6, 2.0}) {
    CAPTURE(a);
    Impair im = base;
    im.gain = a;
    auto r = rx::dfe_run(receive(cfg, f.fs.symbols, im), eq, cfg.modulation, f.known, f.fs.layout);
    CHECK(r.decided.symbols == ref.decided.symbols);
  }
}

TEST_CASE("PLL follows a slow carrier drift") {
  auto cfg = rabbit();
  auto f = make_frame(cfg, 3, 23);
  auto s = receive(cfg, f.fs.symbols, {});
  for (std::size_t m = 0; m < s.size(); ++m) s[m] *= std::polar(1.0, 2e-4 * static_cast<double>(m));
  auto r = rx::dfe_run(s, small_eq(), cfg.modulation, f.known, f.fs.layout);
  CHECK(symbol_errors(r, f.fs.symbols).errors == 0);
  CHECK(r.layout.has_eof);
}

TEST_CASE("property: training MSE does not grow") {
  auto cfg = rabbit();
  auto f = make_frame(cfg, 0, 31);
  Impair im;
  im.taps = channel::preset("intestine_like").taps;
  im.snr_db = 25;
  im.seed = 31;
  auto s = receive(cfg, f.fs.symbols, im);
  rx::EqualizerConfig eq;
  eq.n_fb = 80;
  auto r = rx::dfe_run(s, eq, cfg.modulation, f.known, f.fs.layout);
  const auto& e = r.state.error_trace;
  std::vector<double> w;
  for (std::size_t i = 0; i + 256 <= 4000; i += 256) {
    double m = 0;
    for (std::size_t j = i; j < i + 256; ++j) m += e[j];
    w.push_back(m / 256);
  }
  // statistical tolerance: a window may exceed the best so far by 50%
  // the first window holds the acquisition transient
  double best = w[1];
  for (std::size_t i = 1; i < w.size(); ++i) {
    const double v = w[i];
    CHECK(v <= 1.5 * best + 1e-3);
    best = std::min(best, v);
  }
  CHECK(w.back() < 0.2 * w.front());
}

TEST_CASE("property: half-sample timing offset at T/2") {
  // At a noise level with measurable errors, the converged SER with the
  // sampling grid moved by half a T/2 sample stays within 2x of aligned.
  auto cfg = rabbit();
  auto f = make_frame(cfg, 8, 41);
  auto eq = small_eq();
  eq.n_ff = 24;
  auto run = [&](std::ptrdiff_t shift) {
    Impair im;
    im.snr_db = 6;  // full band; about 19 dB per symbol at L = 20
    im.seed = 41;
    im.shift = shift;
    return symbol_errors(rx::dfe_run(receive(cfg, f.fs.symbols, im), eq, cfg.modulation, f.known, f.fs.layout), f.fs.symbols);
  };
  const auto L = samples_per_symbol(cfg);
  auto aligned = run(0), late = run(L / 4), early = run(-L / 4);
  MESSAGE("SER aligned " << aligned.ser() << " late " << late.ser() << " early " << early.ser());
  CHECK(aligned.errors > 0);
  CHECK(late.ser() <= 2 * aligned.ser());
  CHECK(early.ser() <= 2 * aligned.ser());
}

TEST_CASE("sparse selection") {
  auto cfg = rabbit();
  SUBCASE("keep everything is the identity") {
    auto f = make_frame(cfg, 0, 51);
    auto r = rx::dfe_run(receive(cfg, f.fs.symbols, {}), small_eq(), cfg.modulation, f.known, f.fs.layout);
    auto w = r.state.rls.weights();
    auto sel = rx::sparse_select(r.state, 24);
    CHECK(sel.rls.active_size() == 24);
    for (std::size_t j = 0; j < w.size(); ++j) CHECK(std::abs(sel.rls.weights()[j] - w[j]) < 1e-9);
  }
  SUBCASE("feedback taps land on the echo delays") {
    // Echoes at 5, 17 and 40 symbols; the FF span (35 symbols) cannot reach
    // the last one, so feedback must cancel all three.
    const double T = 1 / cfg.symbol_rate_hz;
    Impair im;
    im.taps = {channel::Tap{0, 1, 0}, channel::Tap{5 * T, 0.5, 1.0}, channel::Tap{17 * T, 0.4, -2.0},
               channel::Tap{40 * T, 0.35, 0.5}};
    im.snr_db = 35;
    auto f = make_frame(cfg, 0, 52);
    rx::EqualizerConfig eq;
    eq.n_fb = 60;
    auto r = rx::dfe_run(receive(cfg, f.fs.symbols, im), eq, cfg.modulation, f.known, f.fs.layout);
    auto fb = r.state.fb();
    std::vector<std::size_t> idx(fb.size());
    for (std::size_t j = 0; j < idx.size(); ++j) idx[j] = j;
    std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return std::abs(fb[a]) > std::abs(fb[b]); });
    std::vector<std::size_t> lags{idx[0] + 1, idx[1] + 1, idx[2] + 1};
    std::sort(lags.begin(), lags.end());
    CHECK(lags == std::vector<std::size_t>{5, 17, 40});

    auto sel = rx::sparse_select(r.state, 40);
    CHECK(sel.rls.active_size() == 40);
    for (std::size_t lag : {5ul, 17ul, 40ul})
      CHECK(std::find(sel.rls.active().begin(), sel.rls.active().end(), 70 + lag - 1) != sel.rls.active().end());
  }
  SUBCASE("no feedback taps is a linear equalizer") {
    auto f = make_frame(cfg, 2, 53);
    Impair im;
    im.taps = {channel::Tap{0, 1, 0}, channel::Tap{3e-6, 0.3, 0.4}};
    im.snr_db = 30;
    rx::EqualizerConfig eq;
    eq.n_fb = 20;
    eq.sparse_keep = 50;
    eq.sparse_keep_fb = 0;
    auto r = rx::dfe_run(receive(cfg, f.fs.symbols, im), eq, cfg.modulation, f.known, f.fs.layout);
    for (auto w : r.state.fb()) CHECK(w == cplx(0, 0));
    CHECK(symbol_errors(r, f.fs.symbols).errors == 0);
  }
}

TEST_CASE("header handling") {
  auto cfg = rabbit();
  auto f = make_frame(cfg, 1, 61);
  auto s = receive(cfg, f.fs.symbols, {});
  SUBCASE("stops at EOF even when more packets are allowed") {
    auto lay = f.fs.layout;
    lay.n_packets = 5;
    auto r = rx::dfe_run(s, small_eq(), cfg.modulation, f.known, lay);
    CHECK(r.layout.n_packets == 1);
    CHECK(r.layout.has_eof);
    CHECK(r.decided.roles.back() == SymbolRole::Eof);
  }
  SUBCASE("CONTINUE where EOF was expected is reported") {
    auto f2 = make_frame(cfg, 2, 62);
    auto s2 = receive(cfg, f2.fs.symbols, {});
    auto lay = f2.fs.layout;
    lay.n_packets = 1;
    auto r = rx::dfe_run(s2, small_eq(), cfg.modulation, f2.known, lay);
    CHECK_FALSE(r.layout.has_eof);
    CHECK(r.warnings.size() == 1);
  }
  SUBCASE("truncated signal") {
    auto cut = s;
    cut.resize(2 * 5000);
    auto r = rx::dfe_run(cut, small_eq(), cfg.modulation, f.known, f.fs.layout);
    CHECK_FALSE(r.layout.has_eof);
    CHECK_FALSE(r.warnings.empty());
    CHECK(r.layout.last_packet_len < 2048);
  }
}

TEST_CASE("divergence is detected") {
  auto cfg = rabbit();
  auto f = make_frame(cfg, 1, 71);
  std::mt19937 g(1);
  std::normal_distribution<double> nd;
  std::vector<cplx> noise(2 * f.fs.symbols.size());
  for (auto& v : noise) v = {nd(g), nd(g)};
  auto eq = small_eq();
  eq.divergence_factor = 0.5;
  CHECK_THROWS_AS(rx::dfe_run(noise, eq, cfg.modulation, f.known, f.fs.layout), rx::DivergenceError);
}

TEST_CASE("noncausal latency") {
  rx::EqualizerConfig eq;
  CHECK(rx::noncausal_latency_s(eq, 5e5) == doctest::Approx(70e-6));
  CHECK(rx::noncausal_latency_s(eq, 5e5) <= eq.n_ff / 2.0 / 5e5);
  CHECK(rx::noncausal_latency_s(eq, 1e6) == doctest::Approx(35e-6));
}
