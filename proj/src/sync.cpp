#include "usm/sync.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "usm/channel.hpp"
#include "usm/kernels.hpp"
#include "usm/tx.hpp"

namespace usm::rx {

std::vector<double> normalized_correlation(std::span<const double> rx, std::span<const cplx> tmpl) {
  if (tmpl.empty() || rx.size() < tmpl.size()) return {};
  const std::size_t n_lags = rx.size() - tmpl.size() + 1;
  const auto c = kernels::xcorr(rx, tmpl, n_lags);
  const auto e = kernels::window_energy(rx, tmpl.size(), n_lags);
  double t_energy = 0.0;
  for (const cplx& v : tmpl) t_energy += std::norm(v);
  // A real signal carries half the energy of its analytic template.
  const double t_half = t_energy / 2.0;
  std::vector<double> out(n_lags);
  for (std::size_t i = 0; i < n_lags; ++i) {
    const double denom = std::sqrt(e[i] * t_half);
    out[i] = denom > 0.0 ? std::abs(c[i]) / denom : 0.0;
  }
  return out;
}

double peak_confidence(std::span<const double> ncc, std::size_t peak, std::size_t template_len,
                       std::size_t mainlobe_half, const SyncOptions& opts) {
  const std::size_t lo = peak > template_len ? peak - template_len : 0;
  const std::size_t hi = std::min(ncc.size(), peak + template_len + 1);
  double sum = 0.0, sum2 = 0.0;
  std::size_t n = 0;
  for (std::size_t i = lo; i < hi; ++i) {
    const std::size_t dist = i > peak ? i - peak : peak - i;
    if (dist <= mainlobe_half) continue;
    sum += ncc[i];
    sum2 += ncc[i] * ncc[i];
    ++n;
  }
  if (n < 2) return 0.0;
  const double mean = sum / static_cast<double>(n);
  const double var = std::max(0.0, sum2 / static_cast<double>(n) - mean * mean);
  const double sd = std::sqrt(var);
  const double psr = sd > 0.0 ? (ncc[peak] - mean) / sd : (ncc[peak] > mean ? 1e9 : 0.0);
  if (psr <= 0.0) return 0.0;
  const double p2 = psr * psr;
  return p2 / (p2 + opts.psr_reference * opts.psr_reference);
}

namespace {

std::size_t mainlobe_half_width(double fs, double bandwidth_hz, std::size_t template_len) {
  if (bandwidth_hz <= 0.0) return template_len / 8;
  return static_cast<std::size_t>(std::ceil(2.0 * fs / bandwidth_hz));
}

}  // namespace

SyncResult detect_frame(const PassbandBuffer& rx, std::span<const cplx> chirp_template,
                        double sweep_bandwidth_hz, const SyncOptions& opts) {
  if (rx.samples.size() <= chirp_template.size())
    throw NoFrameFound("received buffer is not longer than the chirp");
  const auto ncc = normalized_correlation(rx.samples, chirp_template);
  const auto it = std::max_element(ncc.begin(), ncc.end());
  SyncResult r;
  r.frame_start_sample = static_cast<std::size_t>(it - ncc.begin());
  r.correlation_peak = *it;
  r.confidence = peak_confidence(
      ncc, r.frame_start_sample, chirp_template.size(),
      mainlobe_half_width(rx.sample_rate_hz, sweep_bandwidth_hz, chirp_template.size()), opts);
  if (r.confidence < opts.confidence_threshold)
    throw NoFrameFound("no chirp found (confidence " + std::to_string(r.confidence) + ")");
  return r;
}

std::vector<SyncResult> detect_frames(const PassbandBuffer& rx, std::span<const cplx> chirp_template,
                                      double sweep_bandwidth_hz, std::size_t min_separation,
                                      const SyncOptions& opts) {
  std::vector<SyncResult> frames;
  if (rx.samples.size() <= chirp_template.size()) return frames;
  const auto ncc = normalized_correlation(rx.samples, chirp_template);
  const std::size_t m = chirp_template.size();
  const std::size_t lobe = mainlobe_half_width(rx.sample_rate_hz, sweep_bandwidth_hz, m);
  std::size_t i = 0;
  while (i < ncc.size()) {
    if (ncc[i] < opts.candidate_level) {
      ++i;
      continue;
    }
    // Strongest arrival within one chirp length of the first crossing.
    const std::size_t end = std::min(ncc.size(), i + m);
    const auto best = static_cast<std::size_t>(std::max_element(ncc.begin() + static_cast<std::ptrdiff_t>(i),
                                                                ncc.begin() + static_cast<std::ptrdiff_t>(end)) -
                                               ncc.begin());
    SyncResult r;
    r.frame_start_sample = best;
    r.correlation_peak = ncc[best];
    r.confidence = peak_confidence(ncc, best, m, lobe, opts);
    if (r.confidence >= opts.confidence_threshold) {
      frames.push_back(r);
      i = best + std::max<std::size_t>(min_separation, 1);
    } else {
      i = end;
    }
  }
  return frames;
}

namespace {

std::vector<cplx> scaled_chirp(const ChirpSpec& spec, double fs, double scale) {
  const double k = (spec.end_freq_hz - spec.start_freq_hz) / spec.duration_s;
  const auto n = static_cast<std::size_t>(std::floor(spec.duration_s * fs / scale));
  std::vector<cplx> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = scale * static_cast<double>(i) / fs;
    out[i] = std::polar(1.0, 2.0 * M_PI * (spec.start_freq_hz * t + 0.5 * k * t * t));
  }
  return out;
}

double replica_peak(const PassbandBuffer& rx, const std::vector<cplx>& replica, std::size_t lo,
                    std::size_t hi) {
  if (lo >= rx.samples.size()) return 0.0;
  const std::size_t end = std::min(rx.samples.size(), hi + replica.size());
  std::span<const double> seg(rx.samples.data() + lo, end - lo);
  std::vector<cplx> c(hi - lo + 1);
  kernels::xcorr_direct_omp(seg, replica, c);
  double best = 0.0;
  for (const auto& v : c) best = std::max(best, std::abs(v));
  return best / std::sqrt(static_cast<double>(replica.size()));
}

}  // namespace

DopplerEstimate estimate_doppler(const PassbandBuffer& rx, const ChirpSpec& chirp, std::size_t frame_start,
                                 const DopplerGrid& grid) {
  const double fs = rx.sample_rate_hz;
  const std::size_t m = static_cast<std::size_t>(std::lround(chirp.duration_s * fs));
  const double max_dev = std::max(std::abs(grid.max_scale - 1.0), std::abs(1.0 - grid.min_scale));
  const auto w = static_cast<std::size_t>(std::ceil(static_cast<double>(m) * max_dev)) + 8;
  const std::size_t lo = frame_start > w ? frame_start - w : 0;
  const std::size_t hi = frame_start + w;

  const auto n_grid = static_cast<std::size_t>(std::lround((grid.max_scale - grid.min_scale) / grid.step)) + 1;
  std::vector<double> scales(n_grid), peaks(n_grid);
  for (std::size_t i = 0; i < n_grid; ++i) {
    scales[i] = grid.min_scale + static_cast<double>(i) * grid.step;
    peaks[i] = replica_peak(rx, scaled_chirp(chirp, fs, scales[i]), lo, hi);
  }
  const auto best = static_cast<std::size_t>(std::max_element(peaks.begin(), peaks.end()) - peaks.begin());

  DopplerEstimate est;
  est.peak = peaks[best];
  if (best == 0 || best + 1 == n_grid) {
    est.scale = scales[best];
    est.clamped = true;
    return est;
  }
  const double y0 = peaks[best - 1], y1 = peaks[best], y2 = peaks[best + 1];
  const double curv = y0 - 2.0 * y1 + y2;
  const double offset = curv < 0.0 ? 0.5 * (y0 - y2) / curv : 0.0;
  est.scale = scales[best] + std::clamp(offset, -0.5, 0.5) * grid.step;

  const double unit_peak = replica_peak(rx, scaled_chirp(chirp, fs, 1.0), lo, hi);
  if (unit_peak > 0.0 && (est.peak - unit_peak) / unit_peak < 1e-5) est.scale = 1.0;
  return est;
}

namespace {

struct Arrival {
  double position = -1.0;  // envelope peak, parabola refined
  std::ptrdiff_t lag = 0;  // integer peak
  cplx value{};            // correlation at the integer peak
  bool edge = false;       // maximum on the first or last lag searched
};

// Peak of |sum_m rx[pos + m] conj(t[m])| for pos in [lo, hi].
Arrival envelope_peak(std::span<const double> rx, std::span<const cplx> t, std::ptrdiff_t lo, std::ptrdiff_t hi) {
  const auto n = static_cast<std::ptrdiff_t>(rx.size());
  const auto m = static_cast<std::ptrdiff_t>(t.size());
  lo = std::max<std::ptrdiff_t>(lo, 0);
  hi = std::min(hi, n - m);
  if (hi < lo) return {};
  std::vector<cplx> c(static_cast<std::size_t>(hi - lo + 1));
  const auto len = static_cast<std::ptrdiff_t>(c.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < len; ++i) {
    cplx acc{};
    const double* x = rx.data() + lo + i;
    for (std::ptrdiff_t k = 0; k < m; ++k) acc += x[k] * std::conj(t[static_cast<std::size_t>(k)]);
    c[static_cast<std::size_t>(i)] = acc;
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < c.size(); ++i)
    if (std::abs(c[i]) > std::abs(c[best])) best = i;
  double off = 0.0;
  if (best > 0 && best + 1 < c.size()) {
    const double y0 = std::abs(c[best - 1]), y1 = std::abs(c[best]), y2 = std::abs(c[best + 1]);
    const double curv = y0 - 2.0 * y1 + y2;
    if (curv < 0.0) off = std::clamp(0.5 * (y0 - y2) / curv, -0.5, 0.5);
  }
  Arrival r;
  r.lag = lo + static_cast<std::ptrdiff_t>(best);
  r.position = static_cast<double>(r.lag) + off;
  r.value = c[best];
  r.edge = best == 0 || best + 1 == c.size();
  return r;
}

}  // namespace

DopplerEstimate training_doppler(const PassbandBuffer& rx, const LinkConfig& cfg, std::size_t data_start,
                                 double max_dev, std::size_t segment) {
  DopplerEstimate est;
  const auto known = tx::known_symbols(cfg, 0);
  const std::size_t T = known.size();
  segment = std::min(segment, T / 2);
  if (segment == 0) return est;
  const auto rrc = tx::make_rrc(cfg);
  const auto L = static_cast<std::size_t>(samples_per_symbol(cfg));
  const double w = 2.0 * M_PI * cfg.carrier_freq_hz / cfg.sample_rate_hz;

  // Segment templates on the carrier, time scaled by `a` like the received
  // signal so a residual scale does not smear their carrier phase.
  auto tmpl = [&](std::size_t first, std::size_t len, double a) {
    SymbolBlock b;
    for (std::size_t i = first; i < first + len; ++i) b.push_back(known[i], SymbolRole::Training);
    auto shaped = tx::pulse_shape(b, rrc, cfg.sample_rate_hz);
    for (std::size_t m = 0; m < shaped.samples.size(); ++m) shaped.samples[m] *= std::polar(1.0, w * static_cast<double>(m));
    if (a != 1.0) shaped = channel::apply_doppler(shaped, a);
    return shaped.samples;
  };
  const std::size_t s_b = T - segment;
  const auto nominal = static_cast<double>(s_b * L);
  const double period = 2.0 * M_PI / w;
  const auto a0 = static_cast<std::ptrdiff_t>(data_start);
  const auto slack_a = static_cast<std::ptrdiff_t>(std::ceil(max_dev * static_cast<double>(data_start))) + 8;

  // The first pass uses segments short enough that an unscaled template
  // drifts less than a quarter carrier period over them at max_dev.
  const auto coarse_len = std::clamp<std::size_t>(
      static_cast<std::size_t>(period / (4.0 * static_cast<double>(L) * std::max(max_dev, 1e-9))), 1, segment);

  double scale = 1.0;
  bool edge = false;
  for (int pass = 0; pass < 2; ++pass) {
    const std::size_t len = pass == 0 ? coarse_len : segment;
    const auto A = envelope_peak(rx.samples, tmpl(0, len, scale), a0 - slack_a, a0 + slack_a);
    if (A.position < 0.0 || std::abs(A.value) == 0.0) return est;
    // first pass: anywhere in the search range; then around the estimate
    const double expect = nominal / scale;
    const auto slack_b = pass == 0 ? static_cast<std::ptrdiff_t>(std::ceil(max_dev * nominal)) + 4 : 8;
    const auto b0 = A.lag + static_cast<std::ptrdiff_t>(std::lround(expect));
    const auto B = envelope_peak(rx.samples, tmpl(s_b, len, scale), b0 - slack_b, b0 + slack_b);
    if (B.position < 0.0 || std::abs(B.value) == 0.0) return est;

    // arg c = w (lag - arrival) + carrier phase of the segment, and segment B
    // carries w s_b L more. The envelope spacing picks the carrier cycle.
    const double dphi = std::remainder(std::arg(B.value) - std::arg(A.value) - w * nominal, 2.0 * M_PI);
    const double fine = static_cast<double>(B.lag - A.lag) - dphi / w;
    const double coarse = B.position - A.position;
    const double spacing = fine + period * std::round((coarse - fine) / period);

    // output(t) = input(a t): spacings shrink by a.
    scale = nominal / spacing;
    est.peak = std::min(std::abs(A.value), std::abs(B.value));
    edge = A.edge || (pass == 0 && B.edge);
    if (edge || std::abs(scale - 1.0) > max_dev) break;
  }
  est.scale = scale;
  est.clamped = edge || std::abs(scale - 1.0) > max_dev;
  if (est.clamped) est.scale = std::clamp(est.scale, 1.0 - max_dev, 1.0 + max_dev);
  return est;
}

PassbandBuffer correct_doppler(const PassbandBuffer& rx, double scale) {
  if (scale == 1.0) return rx;
  return channel::apply_doppler(rx, 1.0 / scale);
}

}  // namespace usm::rx
