#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "usm/core.hpp"

namespace usm::rx {

class NoFrameFound : public Error {
 public:
  using Error::Error;
};

struct SyncResult {
  std::size_t frame_start_sample = 0;
  double doppler_scale = 1.0;
  double correlation_peak = 0.0;  // normalized, ~1 for a clean chirp
  double confidence = 0.0;        // in [0, 1], increasing in peak-to-sidelobe ratio
};

struct SyncOptions {
  double confidence_threshold = 0.5;
  // Peak-to-sidelobe ratio at which confidence reaches 1/2.
  double psr_reference = 8.0;
  // detect_frames only: minimum normalized correlation for a candidate.
  double candidate_level = 0.3;
};

/// |<rx window, template>| normalized by the window and template energies,
/// for every lag where the template fits. A real chirp aligned with the
/// analytic template scores ~1.
std::vector<double> normalized_correlation(std::span<const double> rx, std::span<const cplx> tmpl);

/// Confidence of a correlation peak from its peak-to-sidelobe ratio
/// (peak - mean) / std over +-template length, excluding the main lobe.
double peak_confidence(std::span<const double> ncc, std::size_t peak, std::size_t template_len,
                       std::size_t mainlobe_half, const SyncOptions& opts = {});

/// Global argmax of the normalized correlation. Throws NoFrameFound when the
/// confidence is below the threshold or rx is not longer than the template.
SyncResult detect_frame(const PassbandBuffer& rx, std::span<const cplx> chirp_template,
                        double sweep_bandwidth_hz, const SyncOptions& opts = {});

/// Every chirp in a multi-frame signal, in order. Candidates closer than
/// min_separation samples to an accepted peak are ignored.
std::vector<SyncResult> detect_frames(const PassbandBuffer& rx, std::span<const cplx> chirp_template,
                                      double sweep_bandwidth_hz, std::size_t min_separation,
                                      const SyncOptions& opts = {});

struct DopplerGrid {
  double min_scale = 0.999;
  double max_scale = 1.001;
  double step = 1e-4;
};

struct DopplerEstimate {
  double scale = 1.0;
  double peak = 0.0;
  bool clamped = false;  // true when the maximum sat on a grid edge
};

/// Correlates a-scaled chirp replicas against rx around frame_start for every
/// a on the grid and refines the best one by parabolic interpolation. Returns
/// 1.0 when the gain over the unscaled replica is negligible.
DopplerEstimate estimate_doppler(const PassbandBuffer& rx, const ChirpSpec& chirp,
                                 std::size_t frame_start, const DopplerGrid& grid = {});

/// Residual time scale from the training block: the arrival times of its
/// first and last `segment` symbols, whose shaped waveform starts at
/// `data_start`, against their nominal spacing. Multipath delays both
/// segments alike, so it does not bias the ratio the way it biases a chirp
/// replica search. The search covers |a - 1| <= max_dev.
DopplerEstimate training_doppler(const PassbandBuffer& rx, const LinkConfig& cfg, std::size_t data_start,
                                 double max_dev = 1e-3, std::size_t segment = 1000);

/// Undoes a time scaling a: output(t) = rx(t / a).
PassbandBuffer correct_doppler(const PassbandBuffer& rx, double scale);

}  // namespace usm::rx
