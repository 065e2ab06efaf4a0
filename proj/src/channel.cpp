#include "usm/channel.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "usm/kernels.hpp"

namespace usm::channel {

ChannelModel validate(const ChannelModel& model) {
  std::vector<std::string> v;
  if (model.taps.empty()) v.emplace_back("channel needs at least one tap");
  for (std::size_t i = 0; i < model.taps.size(); ++i) {
    const auto& t = model.taps[i];
    if (!(t.delay_s >= 0.0) || !std::isfinite(t.delay_s))
      v.emplace_back("tap " + std::to_string(i) + ": delay must be finite and nonnegative");
    if (!std::isfinite(t.gain) || !std::isfinite(t.phase_rad))
      v.emplace_back("tap " + std::to_string(i) + ": gain and phase must be finite");
    if (i > 0 && t.delay_s < model.taps[i - 1].delay_s)
      v.emplace_back("tap delays must be sorted ascending");
  }
  if (!(model.doppler_scale >= 0.999 && model.doppler_scale <= 1.001))
    v.emplace_back("doppler_scale must lie in [0.999, 1.001]");
  if (std::isnan(model.snr_db)) v.emplace_back("snr_db must be a number (use inf for no noise)");
  if (!v.empty()) throw ConfigError(std::move(v));
  return model;
}

double delay_spread_s(const ChannelModel& model) {
  if (model.taps.empty()) return 0.0;
  return model.taps.back().delay_s - model.taps.front().delay_s;
}

namespace {

void check_delays(std::span<const Tap> taps, std::size_t n_samples, double fs) {
  const double duration = static_cast<double>(n_samples) / fs;
  for (const auto& t : taps) {
    if (t.delay_s >= duration)
      throw DelayError("tap delay " + std::to_string(t.delay_s) + " s exceeds signal duration " +
                       std::to_string(duration) + " s");
  }
}

template <class T>
void accumulate_delayed(std::span<const T> x, double delay_samples, T gain, std::span<T> y) {
  const double whole = std::round(delay_samples);
  if (delay_samples == whole) {
    const auto d = static_cast<std::size_t>(whole);
    for (std::size_t i = 0; i + d < y.size() && i < x.size(); ++i) y[i + d] += gain * x[i];
    return;
  }
  std::vector<T> shifted(y.size());
  kernels::resample<T>(x, -delay_samples, 1.0, shifted);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += gain * shifted[i];
}

}  // namespace

PassbandBuffer apply_multipath(const PassbandBuffer& signal, std::span<const Tap> taps,
                               double carrier_freq_hz) {
  const double fs = signal.sample_rate_hz;
  check_delays(taps, signal.samples.size(), fs);
  std::vector<double> delays;
  double max_delay = 0.0;
  for (const auto& t : taps) {
    double extra = 0.0;
    if (t.phase_rad != 0.0) {
      // A delay tau rotates the carrier by -2 pi f_c tau.
      double wrapped = std::fmod(-t.phase_rad, 2.0 * M_PI);
      if (wrapped < 0.0) wrapped += 2.0 * M_PI;
      extra = wrapped / (2.0 * M_PI * carrier_freq_hz) * fs;
    }
    delays.push_back(std::round(t.delay_s * fs) + extra);
    max_delay = std::max(max_delay, delays.back());
  }
  PassbandBuffer out;
  out.sample_rate_hz = fs;
  out.samples.assign(signal.samples.size() + static_cast<std::size_t>(std::ceil(max_delay)), 0.0);
  for (std::size_t i = 0; i < taps.size(); ++i)
    accumulate_delayed<double>(signal.samples, delays[i], taps[i].gain, out.samples);
  return out;
}

BasebandBuffer apply_multipath(const BasebandBuffer& signal, std::span<const Tap> taps) {
  const double fs = signal.sample_rate_hz;
  check_delays(taps, signal.samples.size(), fs);
  double max_delay = 0.0;
  for (const auto& t : taps) max_delay = std::max(max_delay, std::round(t.delay_s * fs));
  BasebandBuffer out;
  out.sample_rate_hz = fs;
  out.samples.assign(signal.samples.size() + static_cast<std::size_t>(max_delay), cplx{});
  for (const auto& t : taps)
    accumulate_delayed<cplx>(signal.samples, std::round(t.delay_s * fs), std::polar(t.gain, t.phase_rad),
                             out.samples);
  return out;
}

namespace {

template <class Buffer>
Buffer doppler_impl(const Buffer& signal, double scale) {
  Buffer out;
  out.sample_rate_hz = signal.sample_rate_hz;
  if (scale == 1.0) {
    out.samples = signal.samples;
    return out;
  }
  const auto n = static_cast<std::size_t>(std::lround(static_cast<double>(signal.samples.size()) / scale));
  out.samples.resize(n);
  using T = typename decltype(out.samples)::value_type;
  kernels::resample<T>(signal.samples, 0.0, scale, out.samples);
  return out;
}

double mean_power(std::span<const double> x) {
  double acc = 0.0;
  for (double v : x) acc += v * v;
  return x.empty() ? 0.0 : acc / static_cast<double>(x.size());
}

double mean_power(std::span<const cplx> x) {
  double acc = 0.0;
  for (const cplx& v : x) acc += std::norm(v);
  return x.empty() ? 0.0 : acc / static_cast<double>(x.size());
}

double noise_power(double ref, double snr_db) {
  if (!(ref > 0.0)) throw Error("add_noise: reference signal power must be positive");
  return ref / std::pow(10.0, snr_db / 10.0);
}

}  // namespace

PassbandBuffer apply_doppler(const PassbandBuffer& signal, double scale) {
  return doppler_impl(signal, scale);
}

BasebandBuffer apply_doppler(const BasebandBuffer& signal, double scale) {
  return doppler_impl(signal, scale);
}

PassbandBuffer add_noise(const PassbandBuffer& signal, double snr_db, std::uint64_t seed,
                         std::optional<double> reference_power) {
  PassbandBuffer out = signal;
  if (std::isinf(snr_db) && snr_db > 0.0) return out;
  const double sigma = std::sqrt(noise_power(reference_power.value_or(mean_power(signal.samples)), snr_db));
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, sigma);
  for (double& v : out.samples) v += gauss(rng);
  return out;
}

BasebandBuffer add_noise(const BasebandBuffer& signal, double snr_db, std::uint64_t seed,
                         std::optional<double> reference_power) {
  BasebandBuffer out = signal;
  if (std::isinf(snr_db) && snr_db > 0.0) return out;
  const double sigma =
      std::sqrt(noise_power(reference_power.value_or(mean_power(signal.samples)), snr_db) / 2.0);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, sigma);
  for (cplx& v : out.samples) {
    const double re = gauss(rng);
    const double im = gauss(rng);
    v += cplx(re, im);
  }
  return out;
}

PassbandBuffer apply(const ChannelModel& model, const PassbandBuffer& signal, double carrier_freq_hz,
                     std::optional<double> reference_power) {
  validate(model);
  const bool identity_paths = model.taps.size() == 1 && model.taps[0].delay_s == 0.0 &&
                              model.taps[0].phase_rad == 0.0 && model.taps[0].gain == 1.0;
  PassbandBuffer out = identity_paths ? signal : apply_multipath(signal, model.taps, carrier_freq_hz);
  if (model.doppler_scale != 1.0) out = apply_doppler(out, model.doppler_scale);
  if (reference_power && !identity_paths) {
    // The reference describes the transmitted signal; scale it by the path gain.
    double g2 = 0.0;
    for (const auto& t : model.taps) g2 += t.gain * t.gain;
    reference_power = *reference_power * g2;
  }
  return add_noise(out, model.snr_db, model.seed, reference_power);
}

ChannelModel preset(std::string_view name) {
  ChannelModel m;
  m.name = std::string(name);
  if (name == "clean") {
    m.taps = {Tap{0.0, 1.0, 0.0}};
  } else if (name == "rabbit_like") {
    // Short abdominal-wall path: direct arrival plus two weak reflections
    // within 20 us.
    m.taps = {Tap{0.0, 1.0, 0.0}, Tap{7.3e-6, 0.40, 1.1}, Tap{20.0e-6, 0.25, -2.0}};
    m.snr_db = 30.0;
  } else if (name == "intestine_like") {
    // Lumen reverberation: five arrivals over 60 us with comparatively strong
    // late reflections.
    m.taps = {Tap{0.0, 1.0, 0.0}, Tap{8.6e-6, 0.35, 0.7}, Tap{23.1e-6, 0.30, -1.9},
              Tap{41.7e-6, 0.28, 2.6}, Tap{60.0e-6, 0.22, -0.4}};
    m.snr_db = 25.0;
  } else {
    throw UnknownPreset("unknown channel preset '" + std::string(name) +
                        "' (expected clean, rabbit_like or intestine_like)");
  }
  return m;
}

std::vector<std::string> preset_names() { return {"clean", "rabbit_like", "intestine_like"}; }

}  // namespace usm::channel
