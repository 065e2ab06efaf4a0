#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "usm/channel.hpp"
#include "usm/core.hpp"
#include "usm/modem.hpp"

namespace usm::io {

class IoError : public Error {
 public:
  using Error::Error;
};

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_text(const std::filesystem::path& path, std::string_view text);

// ---------------------------------------------------------------------------
// Signal files
//
//   offset size
//   0      4    magic "USIG"
//   4      2    version (1), little endian
//   6      1    domain: 0 passband (real), 1 baseband (complex)
//   7      1    reserved, 0
//   8      8    sample rate, IEEE-754 double, little endian
//   16     8    sample count, little endian
//   24     ...  float32 little endian samples; complex as interleaved I, Q
// ---------------------------------------------------------------------------

inline constexpr std::uint16_t kSignalVersion = 1;
inline constexpr std::size_t kSignalHeaderBytes = 24;

using Signal = std::variant<PassbandBuffer, BasebandBuffer>;

std::vector<std::uint8_t> encode_signal(const PassbandBuffer& buf);
std::vector<std::uint8_t> encode_signal(const BasebandBuffer& buf);
/// Throws FormatError on a bad magic, version, domain or length.
Signal decode_signal(std::span<const std::uint8_t> bytes);

void write_signal(const std::filesystem::path& path, const PassbandBuffer& buf);
void write_signal(const std::filesystem::path& path, const BasebandBuffer& buf);
Signal read_signal(const std::filesystem::path& path);
/// read_signal, requiring the passband domain.
PassbandBuffer read_passband(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Key-value text: `key = value` per line, `#` starts a comment.
// ---------------------------------------------------------------------------

/// Applies the keys in `text` on top of `base`. A `preset` key, wherever it
/// appears, is applied first. When the carrier or symbol rate change and no
/// chirp key is given, the chirp follows the new band; likewise the guard
/// follows a new sample rate. Throws ConfigError listing every bad line.
modem::ModemConfig parse_config(std::string_view text, modem::ModemConfig base = {});
std::string serialize_config(const modem::ModemConfig& cfg);
modem::ModemConfig load_config(const std::filesystem::path& path, modem::ModemConfig base = {});

/// Keys: name, doppler_scale, snr_db (number or inf), seed, and one
/// `tap = delay_s, gain, phase_rad` line per path. Tap lines replace the
/// base taps.
channel::ChannelModel parse_channel(std::string_view text, channel::ChannelModel base = {});
std::string serialize_channel(const channel::ChannelModel& model);
/// A preset name, or else a path to a channel file.
channel::ChannelModel load_channel(std::string_view name_or_path);

}  // namespace usm::io
