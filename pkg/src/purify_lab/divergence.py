"""Quantum and classical divergences, in bits.

Support inclusions are decided numerically: an eigenvalue of ``sigma`` counts
as zero when it is at most ``CLIP_REL`` times the largest eigenvalue, and
``supp(rho)`` leaks out of ``supp(sigma)`` when the compression of ``rho`` onto
that kernel exceeds ``CLIP_REL`` times the largest eigenvalue of ``rho``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm
from scipy.optimize import minimize

from .haar import sample_haar
from .tensor import CLIP_REL, LabeledOperator, as_operator, herm_eig, support_mask

log = logging.getLogger(__name__)

DEGENERACY_TOL = 1e-8
MARGIN_BAND = 10.0


@dataclass
class DivergenceValue:
    value: float
    support_ok: bool = True
    diagnostics: dict = field(default_factory=dict)

    @property
    def is_inf(self) -> bool:
        return math.isinf(self.value)

    def __float__(self) -> float:
        return float(self.value)

    def to_dict(self) -> dict:
        return {
            "value": "inf" if self.is_inf else float(self.value),
            "support_ok": bool(self.support_ok),
            "diagnostics": self.diagnostics,
        }


@dataclass
class MeasuredBracket:
    lower: float
    upper: float
    pinching_value: float
    eta_alpha: float
    # D_M <= sandwiched only holds where the sandwiched divergence obeys data processing
    certified: bool = True


def _hermitian(x) -> np.ndarray:
    m = as_operator(x).entries
    return (m + m.conj().T) / 2


def _support(sigma: np.ndarray, clip: float):
    spec = herm_eig(sigma)
    mask = support_mask(spec.eigenvalues, clip)
    return spec.eigenvalues, spec.eigenvectors, mask


def _leakage(rho: np.ndarray, vecs: np.ndarray, mask: np.ndarray) -> float:
    """Largest eigenvalue of ``rho`` compressed to the kernel of ``sigma``."""
    ker = vecs[:, ~mask]
    if ker.shape[1] == 0:
        return 0.0
    return float(np.linalg.eigvalsh(ker.conj().T @ rho @ ker).max())


def _diagnose(rho: np.ndarray, sig_vals, sig_vecs, mask, clip) -> tuple[bool, dict]:
    rho_top = max(float(np.linalg.eigvalsh(rho).max()), 0.0)
    leak = _leakage(rho, sig_vecs, mask)
    thresh = clip * rho_top
    ok = leak <= thresh
    diag = {
        "leakage": leak,
        "sigma_min_support_eig": float(sig_vals[mask].min()) if mask.any() else 0.0,
    }
    if thresh > 0 and thresh / MARGIN_BAND < leak <= thresh * MARGIN_BAND:
        diag["margin_warning"] = True
        log.warning("support decision within the margin band (leakage %.3g)", leak)
    return ok, diag


def umegaki(rho, sigma, clip: float = CLIP_REL) -> DivergenceValue:
    """``Tr[rho (log rho - log sigma)]``, or ``inf`` when ``supp(rho)`` is not inside ``supp(sigma)``."""
    r = _hermitian(rho)
    s_vals, s_vecs, mask = _support(_hermitian(sigma), clip)
    ok, diag = _diagnose(r, s_vals, s_vecs, mask, clip)
    if not ok:
        return DivergenceValue(math.inf, False, diag)
    r_vals = np.linalg.eigvalsh(r)
    r_vals = r_vals[support_mask(r_vals, clip)]
    neg_entropy = float(np.sum(r_vals * np.log2(r_vals)))
    v = s_vecs[:, mask]
    weights = np.einsum("ik,ij,jk->k", v.conj(), r, v).real
    cross = float(np.sum(weights * np.log2(s_vals[mask])))
    return DivergenceValue(neg_entropy - cross, True, diag)


def dmax(rho, sigma, clip: float = CLIP_REL) -> DivergenceValue:
    """``log ||sigma^{-1/2} rho sigma^{-1/2}||_inf`` on the support of ``sigma``."""
    r = _hermitian(rho)
    s_vals, s_vecs, mask = _support(_hermitian(sigma), clip)
    ok, diag = _diagnose(r, s_vals, s_vecs, mask, clip)
    if not ok:
        return DivergenceValue(math.inf, False, diag)
    v = s_vecs[:, mask] / np.sqrt(s_vals[mask])
    m = v.conj().T @ r @ v
    top = float(np.linalg.eigvalsh((m + m.conj().T) / 2).max())
    return DivergenceValue(math.log2(top), True, diag)


def _q_from_spectrum(r, s_vals, s_vecs, mask, alpha, clip) -> float:
    g = (1 - alpha) / (2 * alpha)
    v = s_vecs[:, mask] * np.power(s_vals[mask], g)
    m = v.conj().T @ r @ v
    lam = np.linalg.eigvalsh((m + m.conj().T) / 2)
    lam = lam[support_mask(lam, clip)]
    return float(np.sum(np.power(lam, alpha)))


def sandwiched_q(rho, sigma, alpha: float, clip: float = CLIP_REL) -> float:
    """``Tr[(sigma^g rho sigma^g)^alpha]`` with ``g = (1 - alpha) / (2 alpha)``, powers on supp(sigma)."""
    s_vals, s_vecs, mask = _support(_hermitian(sigma), clip)
    return _q_from_spectrum(_hermitian(rho), s_vals, s_vecs, mask, alpha, clip)


def sandwiched(rho, sigma, alpha: float, clip: float = CLIP_REL) -> DivergenceValue:
    if not alpha > 0:
        raise ValueError(f"alpha must be in (0, inf], got {alpha}")
    if alpha == 1:
        return umegaki(rho, sigma, clip)
    if math.isinf(alpha):
        return dmax(rho, sigma, clip)
    r = _hermitian(rho)
    s_vals, s_vecs, mask = _support(_hermitian(sigma), clip)
    ok, diag = _diagnose(r, s_vals, s_vecs, mask, clip)
    if alpha > 1 and not ok:
        return DivergenceValue(math.inf, False, diag)
    if alpha < 1:
        overlap = float(np.einsum("ik,ij,jk->", s_vecs[:, mask].conj(), r, s_vecs[:, mask]).real)
        diag["overlap"] = overlap
        if overlap <= clip * max(float(np.trace(r).real), 0.0):
            return DivergenceValue(math.inf, False, diag)
    q = _q_from_spectrum(r, s_vals, s_vecs, mask, alpha, clip)
    return DivergenceValue(math.log2(q) / (alpha - 1), True, diag)


def classical_renyi(p, q, alpha: float, tol: float = 1e-10) -> DivergenceValue:
    """Classical Renyi divergence in bits, with ``alpha = 1`` the KL divergence and ``inf`` the max-divergence."""
    p = np.asarray(p, dtype=float).ravel()
    q = np.asarray(q, dtype=float).ravel()
    if p.shape != q.shape:
        raise ValueError("p and q must have the same length")
    for name, v in (("p", p), ("q", q)):
        if np.any(v < 0) or abs(v.sum() - 1) > tol:
            raise ValueError(f"{name} is not a probability vector")
    if not alpha > 0:
        raise ValueError(f"alpha must be in (0, inf], got {alpha}")
    on = p > 0
    bad = bool(np.any(on & (q == 0)))
    if alpha >= 1 and bad:
        return DivergenceValue(math.inf, False)
    if math.isinf(alpha):
        return DivergenceValue(float(np.max(np.log2(p[on] / q[on]))))
    if alpha == 1:
        return DivergenceValue(float(np.sum(p[on] * np.log2(p[on] / q[on]))))
    both = on & (q > 0)
    s = float(np.sum(p[both] ** alpha * q[both] ** (1 - alpha)))
    if s <= 0:
        return DivergenceValue(math.inf, False)
    return DivergenceValue(math.log2(s) / (alpha - 1))


def spectral_clusters(sigma, degeneracy_tol: float = DEGENERACY_TOL) -> list[tuple[float, np.ndarray]]:
    """Eigenvalue clusters of ``sigma`` (single linkage) with an orthonormal basis of each eigenspace."""
    spec = herm_eig(_hermitian(sigma))
    lam, vecs = spec.eigenvalues, spec.eigenvectors
    clusters = []
    start = 0
    for i in range(1, len(lam) + 1):
        if i == len(lam) or lam[i - 1] - lam[i] > degeneracy_tol:
            clusters.append((float(lam[start:i].mean()), vecs[:, start:i]))
            start = i
    return clusters


def spectrum_card(sigma, degeneracy_tol: float = DEGENERACY_TOL) -> int:
    return len(spectral_clusters(sigma, degeneracy_tol))


def pinch(rho, sigma, degeneracy_tol: float = DEGENERACY_TOL) -> LabeledOperator:
    """``sum_k Pi_k rho Pi_k`` over the spectral projectors of ``sigma``."""
    op = as_operator(rho)
    r = op.entries
    out = np.zeros_like(r)
    for _, v in spectral_clusters(sigma, degeneracy_tol):
        proj = v @ v.conj().T
        out += proj @ r @ proj
    return LabeledOperator(out, op.dims)


def eta(alpha: float) -> float:
    if math.isinf(alpha) or alpha <= 2:
        return 1.0
    return alpha / (alpha - 1)


def pinching_basis(rho, sigma, degeneracy_tol: float = DEGENERACY_TOL) -> np.ndarray:
    """Eigenbasis of ``sigma`` refined by the eigenbasis of ``rho`` inside each degenerate block."""
    r = _hermitian(rho)
    cols = []
    for _, v in spectral_clusters(sigma, degeneracy_tol):
        if v.shape[1] == 1:
            cols.append(v)
            continue
        _, w = np.linalg.eigh(v.conj().T @ r @ v)
        cols.append(v @ w[:, ::-1])
    return np.hstack(cols)


def outcome_distributions(rho, sigma, basis: np.ndarray, clip: float = CLIP_REL):
    """Outcome probabilities of measuring ``rho`` and ``sigma`` in ``basis``, round-off zeros cleaned."""
    p = np.einsum("ik,ij,jk->k", basis.conj(), _hermitian(rho), basis).real
    q = np.einsum("ik,ij,jk->k", basis.conj(), _hermitian(sigma), basis).real
    out = []
    for v in (p, q):
        v = np.where(v > clip * max(v.max(), 0.0), v, 0.0)
        out.append(v / v.sum())
    return out[0], out[1]


def measured_bracket(rho, sigma, alpha: float, degeneracy_tol: float = DEGENERACY_TOL) -> MeasuredBracket:
    """Certified interval for the measured Renyi divergence.

    The lower edge is attained by the pinching measurement; the upper edge is
    the sandwiched divergence, which dominates every measured value for
    ``alpha >= 1/2``.
    """
    basis = pinching_basis(rho, sigma, degeneracy_tol)
    p, q = outcome_distributions(rho, sigma, basis)
    lower = classical_renyi(p, q, alpha).value
    upper = sandwiched(rho, sigma, alpha).value
    pinched = sandwiched(pinch(rho, sigma, degeneracy_tol), sigma, alpha).value
    return MeasuredBracket(lower, upper, pinched, eta(alpha), certified=alpha >= 0.5)


def _hermitian_from_params(theta: np.ndarray, d: int) -> np.ndarray:
    h = np.zeros((d, d), dtype=complex)
    iu = np.triu_indices(d, 1)
    k = len(iu[0])
    h[iu] = theta[:k] + 1j * theta[k:2 * k]
    h = h + h.conj().T
    h[np.diag_indices(d)] = theta[2 * k:]
    return h


def measured_optimize(
    rho,
    sigma,
    alpha: float,
    restarts: int,
    rng: np.random.Generator,
    degeneracy_tol: float = DEGENERACY_TOL,
) -> float:
    """Local search over projective measurements for a larger classical Renyi value.

    Restart 0 starts from the pinching basis; later restarts from Haar-random
    bases drawn from ``rng`` in order, so more restarts explore a superset.
    """
    if restarts < 1:
        raise ValueError("restarts must be >= 1")
    r = _hermitian(rho)
    s = _hermitian(sigma)
    d = r.shape[0]
    start_basis = pinching_basis(r, s, degeneracy_tol)

    def value(basis):
        p, q = outcome_distributions(r, s, basis)
        return classical_renyi(p, q, alpha).value

    best = value(start_basis)
    if math.isinf(best):
        return best
    for k in range(restarts):
        base = start_basis if k == 0 else sample_haar(d, rng).entries

        def objective(theta, base=base):
            v = value(base @ expm(1j * _hermitian_from_params(theta, d)))
            return -v if math.isfinite(v) else 1e6

        res = minimize(objective, np.zeros(d * d), method="BFGS", options={"maxiter": 200})
        best = max(best, value(base), -float(res.fun) if res.fun < 1e6 else -math.inf)
    return best
