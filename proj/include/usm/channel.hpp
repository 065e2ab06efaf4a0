#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "usm/core.hpp"

namespace usm::channel {

class DelayError : public Error {
 public:
  using Error::Error;
};

class UnknownPreset : public Error {
 public:
  using Error::Error;
};

struct Tap {
  double delay_s = 0.0;
  double gain = 1.0;
  double phase_rad = 0.0;
};

/// One simulated propagation path. Presets are synthetic tap sets sized to
/// exercise the equalizer; they are not measured tissue responses.
struct ChannelModel {
  std::string name = "custom";
  std::vector<Tap> taps{Tap{}};
  double doppler_scale = 1.0;
  double snr_db = std::numeric_limits<double>::infinity();
  std::uint64_t seed = 1;
};

/// Throws ConfigError on: no taps, unsorted/negative delays, doppler scale
/// outside [0.999, 1.001].
ChannelModel validate(const ChannelModel& model);

double delay_spread_s(const ChannelModel& model);

/// Sum of delayed, scaled copies. On passband signals a tap phase phi is
/// realized as an extra delay of wrap(-phi) / (2 pi f_c), interpolated with
/// the 31-tap windowed sinc; the nominal delay itself is rounded to whole
/// samples. Output is extended by the largest delay.
PassbandBuffer apply_multipath(const PassbandBuffer& signal, std::span<const Tap> taps,
                               double carrier_freq_hz);
/// Baseband variant: phases applied as complex rotations.
BasebandBuffer apply_multipath(const BasebandBuffer& signal, std::span<const Tap> taps);

/// output(t) = input(scale * t), band-limited interpolation, length
/// round(len / scale).
PassbandBuffer apply_doppler(const PassbandBuffer& signal, double scale);
BasebandBuffer apply_doppler(const BasebandBuffer& signal, double scale);

/// White Gaussian noise at power reference_power / 10^(snr/10). The reference
/// defaults to the measured mean power of the signal. snr = +inf is the
/// identity. Identical seeds give identical noise.
PassbandBuffer add_noise(const PassbandBuffer& signal, double snr_db, std::uint64_t seed,
                         std::optional<double> reference_power = std::nullopt);
BasebandBuffer add_noise(const BasebandBuffer& signal, double snr_db, std::uint64_t seed,
                         std::optional<double> reference_power = std::nullopt);

/// multipath -> Doppler -> noise.
PassbandBuffer apply(const ChannelModel& model, const PassbandBuffer& signal, double carrier_freq_hz,
                     std::optional<double> reference_power = std::nullopt);

/// clean | rabbit_like | intestine_like
ChannelModel preset(std::string_view name);
std::vector<std::string> preset_names();

}  // namespace usm::channel
