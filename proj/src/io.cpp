#include "usm/io.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <functional>
#include <iterator>
#include <limits>
#include <map>
#include <sstream>

namespace usm::io {

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> out((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failed: " + path.string());
  return out;
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot create " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

void write_text(const std::filesystem::path& path, std::string_view text) {
  write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

// ---------------------------------------------------------------------------
// Signal files
// ---------------------------------------------------------------------------

namespace {

template <class U>
void put_le(std::vector<std::uint8_t>& out, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

template <class U>
U get_le(std::span<const std::uint8_t> b, std::size_t off) {
  U v = 0;
  for (std::size_t i = sizeof(U); i-- > 0;) v = static_cast<U>((v << 8) | b[off + i]);
  return v;
}

std::vector<std::uint8_t> header(std::uint8_t domain, double fs, std::uint64_t count) {
  std::vector<std::uint8_t> out{'U', 'S', 'I', 'G'};
  put_le<std::uint16_t>(out, kSignalVersion);
  out.push_back(domain);
  out.push_back(0);
  put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(fs));
  put_le<std::uint64_t>(out, count);
  return out;
}

void put_f32(std::vector<std::uint8_t>& out, double v) {
  put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
}

float get_f32(std::span<const std::uint8_t> b, std::size_t off) {
  return std::bit_cast<float>(get_le<std::uint32_t>(b, off));
}

}  // namespace

std::vector<std::uint8_t> encode_signal(const PassbandBuffer& buf) {
  auto out = header(0, buf.sample_rate_hz, buf.samples.size());
  out.reserve(kSignalHeaderBytes + 4 * buf.samples.size());
  for (double v : buf.samples) put_f32(out, v);
  return out;
}

std::vector<std::uint8_t> encode_signal(const BasebandBuffer& buf) {
  auto out = header(1, buf.sample_rate_hz, buf.samples.size());
  out.reserve(kSignalHeaderBytes + 8 * buf.samples.size());
  for (const cplx& v : buf.samples) {
    put_f32(out, v.real());
    put_f32(out, v.imag());
  }
  return out;
}

Signal decode_signal(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kSignalHeaderBytes) throw FormatError("signal file shorter than its 24-byte header");
  if (std::memcmp(bytes.data(), "USIG", 4) != 0) throw FormatError("not a signal file (bad magic)");
  const auto version = get_le<std::uint16_t>(bytes, 4);
  if (version != kSignalVersion) throw FormatError("unsupported signal file version " + std::to_string(version));
  const std::uint8_t domain = bytes[6];
  if (domain > 1) throw FormatError("unknown signal domain " + std::to_string(domain));
  const double fs = std::bit_cast<double>(get_le<std::uint64_t>(bytes, 8));
  if (!(fs > 0.0) || !std::isfinite(fs)) throw FormatError("signal file has an invalid sample rate");
  const auto count = get_le<std::uint64_t>(bytes, 16);
  const std::uint64_t per = domain == 0 ? 4 : 8;
  const std::uint64_t body = bytes.size() - kSignalHeaderBytes;
  if (count > body / per || body != count * per)
    throw FormatError("signal body is " + std::to_string(body) + " bytes, header declares " +
                      std::to_string(count) + " samples");
  const auto n = static_cast<std::size_t>(count);
  if (domain == 0) {
    PassbandBuffer p;
    p.sample_rate_hz = fs;
    p.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i) p.samples[i] = get_f32(bytes, kSignalHeaderBytes + 4 * i);
    return p;
  }
  BasebandBuffer b;
  b.sample_rate_hz = fs;
  b.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i)
    b.samples[i] = cplx(get_f32(bytes, kSignalHeaderBytes + 8 * i), get_f32(bytes, kSignalHeaderBytes + 8 * i + 4));
  return b;
}

void write_signal(const std::filesystem::path& path, const PassbandBuffer& buf) {
  write_file(path, encode_signal(buf));
}
void write_signal(const std::filesystem::path& path, const BasebandBuffer& buf) {
  write_file(path, encode_signal(buf));
}
Signal read_signal(const std::filesystem::path& path) { return decode_signal(read_file(path)); }

PassbandBuffer read_passband(const std::filesystem::path& path) {
  auto s = read_signal(path);
  if (!std::holds_alternative<PassbandBuffer>(s)) throw FormatError(path.string() + " holds a baseband signal");
  return std::get<PassbandBuffer>(std::move(s));
}

// ---------------------------------------------------------------------------
// Key-value text
// ---------------------------------------------------------------------------

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

struct KvLine {
  std::size_t line_no;
  std::string key;
  std::string value;
};

std::vector<KvLine> split_kv(std::string_view text, std::vector<std::string>& errors) {
  std::vector<KvLine> out;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      errors.push_back("line " + std::to_string(line_no) + ": expected 'key = value'");
      continue;
    }
    out.push_back({line_no, std::string(trim(line.substr(0, eq))), std::string(trim(line.substr(eq + 1)))});
  }
  return out;
}

bool parse_double(std::string_view s, double& out) {
  s = trim(s);
  if (s == "inf" || s == "+inf") {
    out = std::numeric_limits<double>::infinity();
    return true;
  }
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  const auto r = std::from_chars(s.data(), s.data() + s.size(), out);
  return r.ec == std::errc{} && r.ptr == s.data() + s.size();
}

bool parse_int(std::string_view s, long long& out) {
  s = trim(s);
  const auto r = std::from_chars(s.data(), s.data() + s.size(), out);
  return r.ec == std::errc{} && r.ptr == s.data() + s.size();
}

bool parse_bool(std::string_view s, bool& out) {
  s = trim(s);
  if (s == "true" || s == "1" || s == "yes") {
    out = true;
    return true;
  }
  if (s == "false" || s == "0" || s == "no") {
    out = false;
    return true;
  }
  return false;
}

std::string fmt(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  // shortest text that reads back to the same double
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

}  // namespace

modem::ModemConfig parse_config(std::string_view text, modem::ModemConfig base) {
  std::vector<std::string> errors;
  auto lines = split_kv(text, errors);

  for (const auto& kv : lines) {
    if (kv.key != "preset") continue;
    try {
      base = modem::preset(kv.value);
    } catch (const ConfigError& e) {
      errors.push_back("line " + std::to_string(kv.line_no) + ": " + e.violations().front());
    }
  }

  modem::ModemConfig c = base;
  auto& l = c.link;
  auto& q = c.eq;
  bool band_changed = false, chirp_set = false, fs_changed = false, guard_set = false;

  auto real = [](double& dst) {
    return [&dst](std::string_view v) { return parse_double(v, dst); };
  };
  auto integer = [](int& dst) {
    return [&dst](std::string_view v) {
      long long x;
      if (!parse_int(v, x) || x < std::numeric_limits<int>::min() || x > std::numeric_limits<int>::max())
        return false;
      dst = static_cast<int>(x);
      return true;
    };
  };
  auto opt_int = [](std::optional<int>& dst) {
    return [&dst](std::string_view v) {
      if (trim(v) == "none") {
        dst.reset();
        return true;
      }
      long long x;
      if (!parse_int(v, x) || x < 0 || x > std::numeric_limits<int>::max()) return false;
      dst = static_cast<int>(x);
      return true;
    };
  };

  std::map<std::string, std::function<bool(std::string_view)>, std::less<>> setters = {
      {"name", [&](std::string_view v) { c.name = std::string(v); return true; }},
      {"carrier_freq_hz", [&](std::string_view v) { band_changed = true; return parse_double(v, l.carrier_freq_hz); }},
      {"symbol_rate_hz", [&](std::string_view v) { band_changed = true; return parse_double(v, l.symbol_rate_hz); }},
      {"sample_rate_hz", [&](std::string_view v) { fs_changed = true; return parse_double(v, l.sample_rate_hz); }},
      {"modulation",
       [&](std::string_view v) {
         try {
           l.modulation = parse_modulation(v);
           return true;
         } catch (const Error&) {
           return false;
         }
       }},
      {"rrc_rolloff", real(l.rrc_rolloff)},
      {"rrc_span_symbols", integer(l.rrc_span_symbols)},
      {"chirp_start_freq_hz", [&](std::string_view v) { chirp_set = true; return parse_double(v, l.chirp.start_freq_hz); }},
      {"chirp_end_freq_hz", [&](std::string_view v) { chirp_set = true; return parse_double(v, l.chirp.end_freq_hz); }},
      {"chirp_duration_s", [&](std::string_view v) { chirp_set = true; return parse_double(v, l.chirp.duration_s); }},
      {"guard_samples", [&](std::string_view v) { guard_set = true; return integer(l.guard_samples)(v); }},
      {"training_symbols_per_frame", integer(l.training_symbols_per_frame)},
      {"header_interval_symbols", integer(l.header_interval_symbols)},
      {"ingest_chunk_bytes", integer(l.ingest_chunk_bytes)},
      {"retrain_symbols_per_packet", integer(l.retrain_symbols_per_packet)},
      {"frame_max_bytes", integer(l.frame_max_bytes)},
      {"frame_gap_samples", integer(l.frame_gap_samples)},
      {"n_ff", integer(q.n_ff)},
      {"n_fb", integer(q.n_fb)},
      {"rls_lambda", real(q.rls_lambda)},
      {"delta_init", real(q.delta_init)},
      {"sparse_keep", opt_int(q.sparse_keep)},
      {"sparse_keep_fb", opt_int(q.sparse_keep_fb)},
      {"pll_kp", real(q.pll_kp)},
      {"pll_ki", real(q.pll_ki)},
      {"dither_rms", real(q.dither_rms)},
      {"normalize_gain", [&](std::string_view v) { return parse_bool(v, q.normalize_gain); }},
      {"divergence_window", integer(q.divergence_window)},
      {"divergence_factor", real(q.divergence_factor)},
      {"doppler_min_scale", real(c.doppler.min_scale)},
      {"doppler_max_scale", real(c.doppler.max_scale)},
      {"doppler_step", real(c.doppler.step)},
      {"sync_confidence_threshold", real(c.sync.confidence_threshold)},
  };

  for (const auto& kv : lines) {
    if (kv.key == "preset") continue;
    const auto it = setters.find(kv.key);
    if (it == setters.end()) {
      errors.push_back("line " + std::to_string(kv.line_no) + ": unknown key '" + kv.key + "'");
      continue;
    }
    if (!it->second(kv.value))
      errors.push_back("line " + std::to_string(kv.line_no) + ": bad value '" + kv.value + "' for " + kv.key);
  }
  if (!errors.empty()) throw ConfigError(std::move(errors));

  if (band_changed && !chirp_set) l.chirp = default_chirp(l.carrier_freq_hz, l.symbol_rate_hz);
  if (fs_changed && !guard_set) l.guard_samples = static_cast<int>(std::lround(5e-4 * l.sample_rate_hz));
  return modem::validate(c);
}

std::string serialize_config(const modem::ModemConfig& c) {
  const auto& l = c.link;
  const auto& q = c.eq;
  std::ostringstream os;
  os << "name = " << c.name << "\n"
     << "carrier_freq_hz = " << fmt(l.carrier_freq_hz) << "\n"
     << "symbol_rate_hz = " << fmt(l.symbol_rate_hz) << "\n"
     << "sample_rate_hz = " << fmt(l.sample_rate_hz) << "\n"
     << "modulation = " << to_string(l.modulation) << "\n"
     << "rrc_rolloff = " << fmt(l.rrc_rolloff) << "\n"
     << "rrc_span_symbols = " << l.rrc_span_symbols << "\n"
     << "chirp_start_freq_hz = " << fmt(l.chirp.start_freq_hz) << "\n"
     << "chirp_end_freq_hz = " << fmt(l.chirp.end_freq_hz) << "\n"
     << "chirp_duration_s = " << fmt(l.chirp.duration_s) << "\n"
     << "guard_samples = " << l.guard_samples << "\n"
     << "training_symbols_per_frame = " << l.training_symbols_per_frame << "\n"
     << "header_interval_symbols = " << l.header_interval_symbols << "\n"
     << "ingest_chunk_bytes = " << l.ingest_chunk_bytes << "\n"
     << "retrain_symbols_per_packet = " << l.retrain_symbols_per_packet << "\n"
     << "frame_max_bytes = " << l.frame_max_bytes << "\n"
     << "frame_gap_samples = " << l.frame_gap_samples << "\n"
     << "n_ff = " << q.n_ff << "\n"
     << "n_fb = " << q.n_fb << "\n"
     << "rls_lambda = " << fmt(q.rls_lambda) << "\n"
     << "delta_init = " << fmt(q.delta_init) << "\n"
     << "sparse_keep = " << (q.sparse_keep ? std::to_string(*q.sparse_keep) : "none") << "\n"
     << "sparse_keep_fb = " << (q.sparse_keep_fb ? std::to_string(*q.sparse_keep_fb) : "none") << "\n"
     << "pll_kp = " << fmt(q.pll_kp) << "\n"
     << "pll_ki = " << fmt(q.pll_ki) << "\n"
     << "dither_rms = " << fmt(q.dither_rms) << "\n"
     << "normalize_gain = " << (q.normalize_gain ? "true" : "false") << "\n"
     << "divergence_window = " << q.divergence_window << "\n"
     << "divergence_factor = " << fmt(q.divergence_factor) << "\n"
     << "doppler_min_scale = " << fmt(c.doppler.min_scale) << "\n"
     << "doppler_max_scale = " << fmt(c.doppler.max_scale) << "\n"
     << "doppler_step = " << fmt(c.doppler.step) << "\n"
     << "sync_confidence_threshold = " << fmt(c.sync.confidence_threshold) << "\n";
  return os.str();
}

modem::ModemConfig load_config(const std::filesystem::path& path, modem::ModemConfig base) {
  const auto bytes = read_file(path);
  return parse_config(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()), std::move(base));
}

channel::ChannelModel parse_channel(std::string_view text, channel::ChannelModel base) {
  std::vector<std::string> errors;
  const auto lines = split_kv(text, errors);
  channel::ChannelModel m = base;
  std::vector<channel::Tap> taps;
  for (const auto& kv : lines) {
    const std::string where = "line " + std::to_string(kv.line_no) + ": ";
    bool ok = true;
    if (kv.key == "name") {
      m.name = kv.value;
    } else if (kv.key == "doppler_scale") {
      ok = parse_double(kv.value, m.doppler_scale);
    } else if (kv.key == "snr_db") {
      ok = parse_double(kv.value, m.snr_db);
    } else if (kv.key == "seed") {
      long long s;
      ok = parse_int(kv.value, s) && s >= 0;
      if (ok) m.seed = static_cast<std::uint64_t>(s);
    } else if (kv.key == "tap") {
      channel::Tap t;
      std::vector<std::string_view> parts;
      std::string_view rest = kv.value;
      for (;;) {
        const auto comma = rest.find(',');
        parts.push_back(trim(rest.substr(0, comma)));
        if (comma == std::string_view::npos) break;
        rest = rest.substr(comma + 1);
      }
      ok = parts.size() == 3 && parse_double(parts[0], t.delay_s) && parse_double(parts[1], t.gain) &&
           parse_double(parts[2], t.phase_rad);
      if (ok) taps.push_back(t);
      else {
        errors.push_back(where + "tap needs 'delay_s, gain, phase_rad'");
        continue;
      }
    } else {
      errors.push_back(where + "unknown key '" + kv.key + "'");
      continue;
    }
    if (!ok) errors.push_back(where + "bad value '" + kv.value + "' for " + kv.key);
  }
  if (!errors.empty()) throw ConfigError(std::move(errors));
  if (!taps.empty()) m.taps = std::move(taps);
  return channel::validate(m);
}

std::string serialize_channel(const channel::ChannelModel& m) {
  std::ostringstream os;
  os << "name = " << m.name << "\n";
  for (const auto& t : m.taps) os << "tap = " << fmt(t.delay_s) << ", " << fmt(t.gain) << ", " << fmt(t.phase_rad) << "\n";
  os << "doppler_scale = " << fmt(m.doppler_scale) << "\n"
     << "snr_db = " << fmt(m.snr_db) << "\n"
     << "seed = " << m.seed << "\n";
  return os.str();
}

channel::ChannelModel load_channel(std::string_view name_or_path) {
  for (const auto& n : channel::preset_names())
    if (n == name_or_path) return channel::preset(name_or_path);
  const std::filesystem::path p{std::string(name_or_path)};
  if (!std::filesystem::exists(p))
    throw ConfigError({"'" + std::string(name_or_path) + "' is neither a channel preset nor a file"});
  const auto bytes = read_file(p);
  return parse_channel(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

}  // namespace usm::io
