#include "usm/dfe.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace usm::rx {

EqualizerConfig validate(const EqualizerConfig& cfg) {
  std::vector<std::string> v;
  if (cfg.n_ff <= 0) v.emplace_back("n_ff must be positive");
  if (cfg.n_fb < 0) v.emplace_back("n_fb must be nonnegative");
  if (!(cfg.rls_lambda > 0.9 && cfg.rls_lambda < 1.0)) v.emplace_back("rls_lambda must lie in (0.9, 1)");
  if (!(cfg.delta_init > 0.0)) v.emplace_back("delta_init must be positive");
  if (cfg.sparse_keep && *cfg.sparse_keep < 0) v.emplace_back("sparse_keep must be nonnegative");
  if (cfg.sparse_keep_fb && *cfg.sparse_keep_fb < 0) v.emplace_back("sparse_keep_fb must be nonnegative");
  if (!(cfg.pll_kp >= 0.0) || !(cfg.pll_ki >= 0.0)) v.emplace_back("PLL gains must be nonnegative");
  if (!(cfg.dither_rms >= 0.0)) v.emplace_back("dither_rms must be nonnegative");
  if (cfg.divergence_window <= 0) v.emplace_back("divergence_window must be positive");
  if (!(cfg.divergence_factor > 0.0)) v.emplace_back("divergence_factor must be positive");
  if (!v.empty()) throw ConfigError(std::move(v));
  return cfg;
}

EqualizerState make_state(const EqualizerConfig& cfg) {
  EqualizerState s;
  s.n_ff = static_cast<std::size_t>(cfg.n_ff);
  s.n_fb = static_cast<std::size_t>(cfg.n_fb);
  s.rls = Rls(s.n_ff + s.n_fb, cfg.rls_lambda, cfg.delta_init);
  s.decision_history.assign(s.n_fb, cplx{});
  return s;
}

EqualizerState sparse_select(EqualizerState state, std::size_t keep, std::optional<std::size_t> keep_fb) {
  const auto& active = state.rls.active();
  const auto& w = state.rls.weights();
  std::vector<std::size_t> order(active.begin(), active.end());
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return std::abs(w[a]) > std::abs(w[b]); });
  std::vector<std::size_t> chosen;
  std::size_t fb_count = 0;
  for (std::size_t idx : order) {
    if (chosen.size() >= keep) break;
    const bool is_fb = idx >= state.n_ff;
    if (is_fb && keep_fb && fb_count >= *keep_fb) continue;
    chosen.push_back(idx);
    if (is_fb) ++fb_count;
  }
  state.rls.restrict_to(chosen);
  return state;
}

double noncausal_latency_s(const EqualizerConfig& cfg, double symbol_rate_hz) {
  return static_cast<double>(cfg.n_ff) / 2.0 / symbol_rate_hz;
}

namespace {

double wrap_phase(double p) {
  p = std::remainder(p, 2.0 * M_PI);  // [-pi, pi]
  return p <= -M_PI ? p + 2.0 * M_PI : p;
}

}  // namespace

DfeResult dfe_run(std::span<const cplx> samples, const EqualizerConfig& cfg, Modulation modulation,
                  std::span<const cplx> known, const FrameLayout& layout) {
  validate(cfg);
  DfeResult res;
  res.state = make_state(cfg);
  res.layout = layout;
  res.layout.n_packets = 0;
  res.layout.last_packet_len = 0;
  res.layout.has_eof = false;

  const std::size_t n_ff = res.state.n_ff;
  const std::size_t n_fb = res.state.n_fb;
  const std::size_t n_samples = samples.size();

  double gain = 1.0;
  if (cfg.normalize_gain) {
    const std::size_t n = std::min(n_samples, 2 * std::max<std::size_t>(layout.training_len, 1));
    double p = 0.0;
    for (std::size_t i = 0; i < n; ++i) p += std::norm(samples[i]);
    p = n ? p / static_cast<double>(n) : 0.0;
    if (p > 0.0) gain = 1.0 / std::sqrt(p);
  }
  res.input_gain = gain;

  const std::size_t expected = layout.total_symbols();
  std::vector<cplx> dec;
  dec.reserve(expected);
  res.soft.reserve(expected);
  res.decided.symbols.reserve(expected);
  res.decided.roles.reserve(expected);
  res.state.error_trace.reserve(expected);

  std::mt19937 rng(0x5EEDu);
  const double dither_amp = cfg.dither_rms * std::sqrt(1.5);
  std::uniform_real_distribution<double> dither(-dither_amp, dither_amp);
  const bool use_dither = cfg.dither_rms > 0.0;

  const auto win = static_cast<std::size_t>(cfg.divergence_window);
  std::vector<double> err_ring(win, 0.0);
  double err_sum = 0.0;
  const double err_limit = cfg.divergence_factor * 1.0;  // unit-power constellations

  std::vector<cplx> u;
  const cplx cont = header_continue_symbol(modulation);
  const cplx eof = header_eof_symbol(modulation);
  std::size_t known_idx = 0;

  auto out_of_samples = [&](std::size_t k) { return 2 * k >= n_samples; };

  // Equalizer output for symbol k = dec.size(); fills u on the active set.
  auto equalize = [&]() -> cplx {
    const std::size_t k = dec.size();
    const auto& active = res.state.rls.active();
    u.resize(active.size());
    const cplx rot = std::polar(gain, -res.state.phase_est);
    for (std::size_t i = 0; i < active.size(); ++i) {
      const std::size_t idx = active[i];
      if (idx < n_ff) {
        const std::size_t s = 2 * k + idx;
        cplx x = s < n_samples ? samples[s] * rot : cplx{};
        if (use_dither) {
          const double re = dither(rng);
          const double im = dither(rng);
          x += cplx(re, im);
        }
        u[i] = x;
      } else {
        const std::size_t lag = idx - n_ff + 1;
        u[i] = lag <= k ? -dec[k - lag] : cplx{};
      }
    }
    return res.state.rls.output_active(u);
  };

  auto adapt = [&](cplx y, cplx d, SymbolRole role) {
    auto& st = res.state;
    const cplx e = st.rls.update_active(u, d);
    const double e2 = std::norm(e);
    st.error_trace.push_back(e2);

    const double perr = std::arg(y * std::conj(d));
    st.phase_integrator += cfg.pll_ki * perr;
    st.phase_est = wrap_phase(st.phase_est + cfg.pll_kp * perr + st.phase_integrator);

    const std::size_t k = dec.size();
    dec.push_back(d);
    res.soft.push_back(y);
    res.decided.push_back(d, role);

    err_sum += e2 - err_ring[k % win];
    err_ring[k % win] = e2;
    if (k + 1 >= win && err_sum / static_cast<double>(win) > err_limit)
      throw DivergenceError("equalizer diverged at symbol " + std::to_string(k) + " (mean |e|^2 = " +
                            std::to_string(err_sum / static_cast<double>(win)) + ")");
    if ((k & 255u) == 255u && !st.rls.healthy()) {
      st.rls.reset_inverse();
      res.warnings.push_back("RLS inverse correlation reinitialized at symbol " + std::to_string(k));
    }
  };

  auto train_one = [&]() -> bool {
    if (out_of_samples(dec.size())) return false;
    if (known_idx >= known.size()) throw LayoutError("dfe_run: known symbol sequence exhausted");
    const cplx y = equalize();
    adapt(y, known[known_idx++], SymbolRole::Training);
    ++res.training_symbols;
    return true;
  };

  // Initial training block.
  for (std::size_t i = 0; i < layout.training_len; ++i) {
    if (!train_one()) {
      res.warnings.push_back("signal ended inside the training block");
      return res;
    }
  }

  if (cfg.sparse_keep) {
    const std::optional<std::size_t> keep_fb =
        cfg.sparse_keep_fb ? std::optional<std::size_t>(static_cast<std::size_t>(*cfg.sparse_keep_fb))
                           : std::nullopt;
    res.state = sparse_select(std::move(res.state), static_cast<std::size_t>(*cfg.sparse_keep), keep_fb);
  }

  for (std::size_t p = 0;; ++p) {
    if (out_of_samples(dec.size())) {
      res.warnings.push_back("signal ended before the EOF header (after " + std::to_string(p) + " packets)");
      break;
    }
    const cplx yh = equalize();
    const bool is_eof = std::norm(yh - eof) < std::norm(yh - cont);
    if (is_eof) {
      adapt(yh, eof, SymbolRole::Eof);
      res.layout.has_eof = true;
      break;
    }
    adapt(yh, cont, SymbolRole::Header);
    if (p >= layout.n_packets) {
      res.warnings.push_back("read a CONTINUE header where EOF was expected (packet " + std::to_string(p) + ")");
      break;
    }

    bool truncated = false;
    for (std::size_t r = 0; r < layout.retrain_len; ++r) {
      if (!train_one()) {
        truncated = true;
        break;
      }
    }
    const std::size_t len =
        (p + 1 == layout.n_packets && layout.last_packet_len > 0) ? layout.last_packet_len : layout.packet_len;
    std::size_t got = 0;
    for (; !truncated && got < len; ++got) {
      if (out_of_samples(dec.size())) {
        truncated = true;
        break;
      }
      const cplx y = equalize();
      adapt(y, nearest_point(modulation, y), SymbolRole::Data);
    }
    res.layout.n_packets = p + 1;
    res.layout.last_packet_len = got;
    if (truncated) {
      res.warnings.push_back("signal ended inside packet " + std::to_string(p));
      break;
    }
  }

  auto& hist = res.state.decision_history;
  hist.assign(n_fb, cplx{});
  for (std::size_t j = 0; j < n_fb && j < dec.size(); ++j) hist[j] = dec[dec.size() - 1 - j];
  return res;
}

}  // namespace usm::rx
