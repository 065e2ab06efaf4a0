#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "usm/core.hpp"
#include "usm/rls.hpp"

namespace usm::rx {

class DivergenceError : public Error {
 public:
  using Error::Error;
};

struct EqualizerConfig {
  int n_ff = 70;   // feedforward taps at 2 samples/symbol
  int n_fb = 200;  // feedback taps, symbol spaced
  double rls_lambda = 0.997;
  double delta_init = 1e-2;  // P starts at I / delta
  // Active-tap budget applied after the initial training block; unset keeps
  // every tap.
  std::optional<int> sparse_keep;
  // Optional cap on how many of the kept taps may be feedback taps.
  std::optional<int> sparse_keep_fb;
  double pll_kp = 1e-2;
  double pll_ki = 1e-4;
  // RMS of a seeded dither added to the feedforward inputs. It bounds the
  // inverse correlation matrix when the input has empty spectral regions
  // (oversampled, noise-free links). Zero disables it.
  double dither_rms = 1e-3;
  // Scale the input to unit mean power over the training block.
  bool normalize_gain = true;
  int divergence_window = 512;
  double divergence_factor = 4.0;  // times the constellation power
};

/// Throws ConfigError listing violations.
EqualizerConfig validate(const EqualizerConfig& cfg);

struct EqualizerState {
  std::size_t n_ff = 0;
  std::size_t n_fb = 0;
  Rls rls;  // coefficients: [feedforward (n_ff) | feedback (n_fb)]
  double phase_est = 0.0;         // wrapped to (-pi, pi]
  double phase_integrator = 0.0;  // PLL frequency term, rad/symbol
  std::vector<cplx> decision_history;  // most recent first, length n_fb
  std::vector<double> error_trace;     // |e_k|^2 per processed symbol

  std::span<const cplx> ff() const { return std::span(rls.weights()).first(n_ff); }
  std::span<const cplx> fb() const { return std::span(rls.weights()).subspan(n_ff, n_fb); }
};

EqualizerState make_state(const EqualizerConfig& cfg);

/// Keeps the `keep` largest-magnitude coefficients (at most keep_fb of them
/// feedback taps) and freezes the rest at zero; the RLS recursion continues
/// on the active set only.
EqualizerState sparse_select(EqualizerState state, std::size_t keep,
                             std::optional<std::size_t> keep_fb = std::nullopt);

struct DfeResult {
  SymbolBlock decided;      // one entry per processed symbol, with its role
  std::vector<cplx> soft;   // equalizer output y_k
  EqualizerState state;
  FrameLayout layout;       // what was actually decoded (packets read, EOF)
  std::vector<std::string> warnings;
  double input_gain = 1.0;  // normalization applied to the samples
  std::size_t training_symbols = 0;  // symbols decided against known values
};

/// Runs the fractionally spaced, phase-tracking decision-feedback equalizer
/// over one frame.
///
/// `samples` are at 2 samples/symbol with the matched-filter peak of symbol k
/// at index 2k. `known` holds the training block followed by the retraining
/// blocks. `layout` supplies the block lengths; its n_packets is the largest
/// number of packets to read. Decoding stops at the first header read as EOF.
/// Throws DivergenceError when the mean |e|^2 over divergence_window symbols
/// exceeds divergence_factor.
DfeResult dfe_run(std::span<const cplx> samples, const EqualizerConfig& cfg, Modulation modulation,
                  std::span<const cplx> known, const FrameLayout& layout);

/// Time the feedforward window reaches past the decision instant:
/// n_ff half-symbol samples.
double noncausal_latency_s(const EqualizerConfig& cfg, double symbol_rate_hz);

}  // namespace usm::rx
