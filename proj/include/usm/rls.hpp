#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "usm/core.hpp"
#include "usm/kernels.hpp"

namespace usm {

/// Exponentially weighted recursive least squares for a linear combiner
/// y = w^T u. After n updates the weights minimize
///
///   sum_i lambda^(n-i) |d_i - u_i^T w|^2 + lambda^n * delta * |w|^2
///
/// over the active coefficients; inactive coefficients are held at zero.
/// P is the inverse of the weighted correlation matrix of conj(u) restricted
/// to the active set and is kept exactly Hermitian.
class Rls {
 public:
  Rls() = default;
  Rls(std::size_t n, double lambda, double delta,
      kernels::Exec exec = kernels::Exec::Parallel);

  std::size_t size() const noexcept { return w_.size(); }
  std::size_t active_size() const noexcept { return active_.size(); }
  const std::vector<std::size_t>& active() const noexcept { return active_; }
  const std::vector<cplx>& weights() const noexcept { return w_; }
  std::span<const cplx> inverse_correlation() const {
    flush();
    return P_;
  }
  double lambda() const noexcept { return lambda_; }
  double delta() const noexcept { return delta_; }

  /// y = w^T u for a full-length input.
  cplx output(std::span<const cplx> u) const;
  /// y over the active coefficients; u_active[i] pairs with active()[i].
  cplx output_active(std::span<const cplx> u_active) const;

  /// One update with a full-length input. Returns the a priori error.
  cplx update(std::span<const cplx> u, cplx desired);
  /// One update with inputs gathered on the active set.
  cplx update_active(std::span<const cplx> u_active, cplx desired);

  /// Freezes every coefficient outside `keep` at zero. The remaining
  /// coefficients and P are replaced by the exact least-squares quantities
  /// of the reduced problem (block-inverse / Schur complement), so the
  /// recursion continues as if it had always run on the reduced set.
  void restrict_to(std::span<const std::size_t> keep);

  /// P <- I / delta on the active set.
  void reset_inverse();
  /// Diagonal of P finite and positive.
  bool healthy() const;

 private:
  double lambda_ = 0.997;
  double delta_ = 1e-2;
  kernels::Exec exec_ = kernels::Exec::Parallel;
  std::vector<cplx> w_;
  std::vector<std::size_t> active_;
  // The rank-one downdate of P from the last update is deferred and fused
  // into the next update's matvec; anything else reading P flushes it first.
  void flush() const;
  mutable std::vector<cplx> P_;
  mutable bool pending_ = false;
  double pending_scale_ = 0.0;
  std::vector<cplx> pending_pi_;
  std::vector<cplx> v_, pi_, g_, gather_;
};

}  // namespace usm
