#include "usm/rls.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

namespace usm {

Rls::Rls(std::size_t n, double lambda, double delta, kernels::Exec exec)
    : lambda_(lambda), delta_(delta), exec_(exec), w_(n), active_(n) {
  for (std::size_t i = 0; i < n; ++i) active_[i] = i;
  reset_inverse();
}

void Rls::reset_inverse() {
  const std::size_t k = active_.size();
  P_.assign(k * k, cplx{});
  for (std::size_t i = 0; i < k; ++i) P_[i * k + i] = 1.0 / delta_;
  v_.resize(k);
  pi_.resize(k);
  g_.resize(k);
  gather_.resize(k);
  pending_ = false;
}

void Rls::flush() const {
  if (!pending_) return;
  const std::size_t k = active_.size();
  if (exec_ == kernels::Exec::Serial)
    kernels::hermitian_downdate_serial(P_, k, pending_pi_, pending_scale_, 1.0 / lambda_);
  else
    kernels::hermitian_downdate_omp(P_, k, pending_pi_, pending_scale_, 1.0 / lambda_);
  pending_ = false;
}

bool Rls::healthy() const {
  flush();
  const std::size_t k = active_.size();
  for (std::size_t i = 0; i < k; ++i) {
    const double d = P_[i * k + i].real();
    if (!std::isfinite(d) || d <= 0.0) return false;
  }
  return true;
}

cplx Rls::output(std::span<const cplx> u) const {
  cplx y{};
  for (std::size_t i : active_) y += w_[i] * u[i];
  return y;
}

cplx Rls::output_active(std::span<const cplx> u_active) const {
  cplx y{};
  for (std::size_t i = 0; i < active_.size(); ++i) y += w_[active_[i]] * u_active[i];
  return y;
}

cplx Rls::update(std::span<const cplx> u, cplx desired) {
  for (std::size_t i = 0; i < active_.size(); ++i) gather_[i] = u[active_[i]];
  return update_active(gather_, desired);
}

cplx Rls::update_active(std::span<const cplx> u_active, cplx desired) {
  const std::size_t k = active_.size();
  if (k == 0) return desired;
  for (std::size_t i = 0; i < k; ++i) v_[i] = std::conj(u_active[i]);

  const bool serial = exec_ == kernels::Exec::Serial;
  if (pending_) {
    if (serial)
      kernels::downdate_matvec_serial(P_, k, pending_pi_, pending_scale_, 1.0 / lambda_, v_, pi_);
    else
      kernels::downdate_matvec_omp(P_, k, pending_pi_, pending_scale_, 1.0 / lambda_, v_, pi_);
  } else if (serial) {
    kernels::matvec_serial(P_, k, v_, pi_);
  } else {
    kernels::matvec_omp(P_, k, v_, pi_);
  }

  // v^H P v is real and positive for Hermitian positive-definite P.
  double quad = 0.0;
  for (std::size_t i = 0; i < k; ++i) quad += (std::conj(v_[i]) * pi_[i]).real();
  const double inv_denom = 1.0 / (lambda_ + quad);
  for (std::size_t i = 0; i < k; ++i) g_[i] = pi_[i] * inv_denom;

  const cplx e = desired - output_active(u_active);
  for (std::size_t i = 0; i < k; ++i) w_[active_[i]] += g_[i] * e;

  pending_pi_.assign(pi_.begin(), pi_.end());
  pending_scale_ = inv_denom;
  pending_ = true;
  return e;
}

void Rls::restrict_to(std::span<const std::size_t> keep) {
  std::vector<std::size_t> new_active(keep.begin(), keep.end());
  std::sort(new_active.begin(), new_active.end());
  new_active.erase(std::unique(new_active.begin(), new_active.end()), new_active.end());

  // Positions (within the current active set) of kept (B) and dropped (C).
  std::vector<std::size_t> b_pos, c_pos;
  for (std::size_t i = 0; i < active_.size(); ++i) {
    if (std::binary_search(new_active.begin(), new_active.end(), active_[i]))
      b_pos.push_back(i);
    else
      c_pos.push_back(i);
  }
  flush();
  if (b_pos.size() != new_active.size())
    throw Error("Rls::restrict_to: keep set must be a subset of the active set");
  if (c_pos.empty()) return;

  const std::size_t k = active_.size();
  const auto nb = static_cast<Eigen::Index>(b_pos.size());
  const auto nc = static_cast<Eigen::Index>(c_pos.size());
  auto p_at = [&](std::size_t r, std::size_t c) { return P_[r * k + c]; };

  Eigen::MatrixXcd Pbb(nb, nb), Pbc(nb, nc), Pcc(nc, nc);
  Eigen::VectorXcd wb(nb), wc(nc);
  for (Eigen::Index i = 0; i < nb; ++i) {
    wb(i) = w_[active_[b_pos[static_cast<std::size_t>(i)]]];
    for (Eigen::Index j = 0; j < nb; ++j) Pbb(i, j) = p_at(b_pos[static_cast<std::size_t>(i)], b_pos[static_cast<std::size_t>(j)]);
    for (Eigen::Index j = 0; j < nc; ++j) Pbc(i, j) = p_at(b_pos[static_cast<std::size_t>(i)], c_pos[static_cast<std::size_t>(j)]);
  }
  for (Eigen::Index i = 0; i < nc; ++i) {
    wc(i) = w_[active_[c_pos[static_cast<std::size_t>(i)]]];
    for (Eigen::Index j = 0; j < nc; ++j) Pcc(i, j) = p_at(c_pos[static_cast<std::size_t>(i)], c_pos[static_cast<std::size_t>(j)]);
  }

  // With R = P^{-1}:  (R_bb)^{-1} = P_bb - P_bc P_cc^{-1} P_cb and the reduced
  // least-squares weights are w_b - P_bc P_cc^{-1} w_c.
  Eigen::LDLT<Eigen::MatrixXcd> ldlt(Pcc);
  bool ok = ldlt.info() == Eigen::Success;
  Eigen::MatrixXcd M;  // P_cc^{-1} P_cb
  Eigen::VectorXcd shift;
  if (ok) {
    M = ldlt.solve(Pbc.adjoint());
    shift = ldlt.solve(wc);
    ok = M.allFinite() && shift.allFinite();
  }

  for (std::size_t idx : active_) {
    if (!std::binary_search(new_active.begin(), new_active.end(), idx)) w_[idx] = cplx{};
  }
  active_ = new_active;
  if (!ok) {
    reset_inverse();
    return;
  }
  Eigen::MatrixXcd Pnew = Pbb - Pbc * M;
  Pnew = 0.5 * (Pnew + Pnew.adjoint().eval());
  Eigen::VectorXcd wnew = wb - Pbc * shift;

  const std::size_t kb = b_pos.size();
  P_.assign(kb * kb, cplx{});
  for (std::size_t i = 0; i < kb; ++i) {
    w_[active_[i]] = wnew(static_cast<Eigen::Index>(i));
    for (std::size_t j = 0; j < kb; ++j) P_[i * kb + j] = Pnew(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  }
  v_.resize(kb);
  pi_.resize(kb);
  g_.resize(kb);
  gather_.resize(kb);
  if (!healthy()) reset_inverse();
}

}  // namespace usm
