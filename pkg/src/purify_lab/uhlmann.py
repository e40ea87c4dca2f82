"""Finite-n checks of the divergence form of Uhlmann's theorem.

For an extension ``rho_AB'`` of ``rho_A`` the universal optimiser sequence is
``E^{(x)n}(Lambda_n(sigma_A^{(x)n}))`` where ``E`` maps a fixed purification
of ``rho_A`` onto ``rho_AB'`` by acting on the purifying system only.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from dataclasses import field
from functools import cached_property

import numpy as np

from .divergence import measured_bracket, sandwiched, umegaki
from .purifier import (
    apply_channel,
    check_choi,
    purification_channel,
    purification_vector,
    simultaneous_symmetry_deviation,
)
from .tensor import (
    DensityState,
    LabeledOperator,
    as_operator,
    mat_power,
    partial_trace,
    random_state,
    tensor_power,
)

GAP_TOL = 1e-8
NMAX_DEFAULT = {2: 3, 3: 2}
INSTANCE_MIX = 0.1


@dataclass(frozen=True, eq=False)
class ExtensionChannel:
    """Channel ``B -> B'`` given by its Choi operator (input factor first)."""

    choi: LabeledOperator
    d_in: int
    d_out: int

    @cached_property
    def kraus(self) -> list[np.ndarray]:
        return _kraus_from_choi(self.choi.entries, self.d_in, self.d_out)

    def apply_on(self, x: LabeledOperator, index: int) -> LabeledOperator:
        """Apply the channel to subsystem ``index`` of ``x``."""
        return apply_local_kraus(x, self.kraus, index)


def _kraus_from_choi(J: np.ndarray, d_in: int, d_out: int) -> list[np.ndarray]:
    w, v = np.linalg.eigh((J + J.conj().T) / 2)
    ops = []
    for lam, vec in zip(w, v.T):
        if lam > 1e-14:
            # vec[i * d_out + o] = <i|<o| K-vector; K[o, i] = sqrt(lam) vec[i, o]
            ops.append(math.sqrt(lam) * vec.reshape(d_in, d_out).T)
    return ops


def apply_local_kraus(x: LabeledOperator, kraus: list[np.ndarray], index: int) -> LabeledOperator:
    x = as_operator(x)
    k = len(x.dims)
    d_out, d_in = kraus[0].shape
    if x.dims[index] != d_in:
        raise ValueError(f"subsystem {index} has dimension {x.dims[index]}, channel expects {d_in}")
    pre = math.prod(x.dims[:index])
    post = math.prod(x.dims[index + 1:])
    t = x.entries.reshape(pre, d_in, post, pre, d_in, post)
    out = np.zeros((pre, d_out, post, pre, d_out, post), dtype=complex)
    for K in kraus:
        out += np.einsum("oi,aibcjd,pj->aobcpd", K, t, K.conj())
    dims = x.dims[:index] + (d_out,) + x.dims[index + 1:]
    D = math.prod(dims)
    return LabeledOperator(out.reshape(D, D), dims)


def _range_basis(P: np.ndarray) -> np.ndarray:
    """Orthonormal basis of the range of a (numerically) projector-valued ``P``."""
    w, v = np.linalg.eigh((P + P.conj().T) / 2)
    return v[:, w > 0.5]


def _gs_complement(Q: np.ndarray, dim: int, tol: float = 1e-8) -> np.ndarray:
    """Orthonormal basis of ``range(Q)^perp`` built from standard basis vectors in index order."""
    cols = [Q[:, i] for i in range(Q.shape[1])]
    out = []
    for j in range(dim):
        v = np.zeros(dim, dtype=complex)
        v[j] = 1.0
        for _ in range(2):  # re-orthogonalise once for stability
            for c in cols:
                v = v - c * (c.conj() @ v)
        nrm = np.linalg.norm(v)
        if nrm > tol:
            v = v / nrm
            cols.append(v)
            out.append(v)
    return np.array(out).T if out else np.zeros((dim, 0), dtype=complex)


def _complete_isometry(V: np.ndarray) -> np.ndarray:
    """Extend a partial isometry ``V`` so that ``V^dag V = 1``; the completion is deterministic."""
    dc, db = V.shape
    ker = _gs_complement(_range_basis(V.conj().T @ V), db)
    free = _gs_complement(_range_basis(V @ V.conj().T), dc)
    if free.shape[1] < ker.shape[1]:
        raise ValueError("target space too small to complete the isometry")
    return V + free[:, : ker.shape[1]] @ ker.conj().T


def purify_state(rho: LabeledOperator) -> np.ndarray:
    """Vector ``sum_k sqrt(l_k) |v_k> (x) |k>`` purifying ``rho`` on ``rho (x) C^D``."""
    m = as_operator(rho).entries
    w, v = np.linalg.eigh((m + m.conj().T) / 2)
    w = np.clip(w, 0, None)
    return (v * np.sqrt(w)).ravel()


def find_extension_channel(psi, rho_ab, tol: float = 1e-8) -> ExtensionChannel:
    """Channel on the purifying system taking the pure state ``psi`` (on A x B) to ``rho_ab`` (on A x B').

    ``rho_ab`` is purified to ``Phi`` on ``A x (B' x B'')``; the intertwiner
    ``V^T = M_psi^+ M_Phi`` between the two coefficient matrices maps ``psi`` to
    ``Phi``; it is completed to an isometry on the kernel and ``B''`` is traced out.
    """
    psi = as_operator(psi)
    rho_ab = as_operator(rho_ab)
    if len(psi.dims) != 2 or len(rho_ab.dims) != 2 or psi.dims[0] != rho_ab.dims[0]:
        raise ValueError("psi and rho_ab must both be bipartite with the same A dimension")
    (dA, dB), dB2 = psi.dims, rho_ab.dims[1]
    w, v = np.linalg.eigh((psi.entries + psi.entries.conj().T) / 2)
    if abs(np.trace(psi.entries).real - w[-1]) > tol:
        raise ValueError("psi must be a pure state")
    M_psi = (v[:, -1] * math.sqrt(max(w[-1], 0.0))).reshape(dA, dB)
    rho_a = partial_trace(rho_ab, [0]).entries
    if np.abs(M_psi @ M_psi.conj().T - rho_a).max() > tol:
        raise ValueError("Tr_B psi does not match Tr_B' rho_ab")
    d_anc = dA * dB2
    M_phi = purify_state(rho_ab).reshape(dA, dB2 * d_anc)
    V = _complete_isometry((np.linalg.pinv(M_psi, rcond=1e-10) @ M_phi).T)
    # E(X) = Tr_B''[V X V^dag]: Kraus operators are the B'' slices of V
    K = V.reshape(dB2, d_anc, dB)
    # J[(i, o), (j, p)] = sum_m K[o, m, i] conj(K[p, m, j])
    J = np.einsum("omi,pmj->iojp", K, K.conj()).reshape(dB * dB2, dB * dB2)
    return ExtensionChannel(LabeledOperator(J, (dB, dB2)), dB, dB2)


def extension_residual(ext: ExtensionChannel, psi, rho_ab) -> float:
    out = ext.apply_on(as_operator(psi), 1)
    return float(np.abs(out.entries - as_operator(rho_ab).entries).max())


def check_extension_channel(ext: ExtensionChannel, tol: float = 1e-9):
    return check_choi(ext.choi, 1, tol)


def random_extension(rho_a: LabeledOperator, d_b: int, rng: np.random.Generator) -> DensityState:
    """Random state on A x B' with A-marginal ``rho_a`` (marginal-corrected Ginibre draw)."""
    rho_a = as_operator(rho_a)
    dA = rho_a.dim
    sqrt_rho = mat_power(rho_a, 0.5).entries
    for _ in range(100):
        tau = random_state((dA, d_b), rng)
        tau_a = partial_trace(tau, [0]).entries
        if np.linalg.eigvalsh(tau_a).min() < 1e-6:
            continue
        K = np.kron(sqrt_rho @ mat_power(tau_a, -0.5).entries, np.eye(d_b))
        out = K @ tau.entries @ K.conj().T
        return DensityState.from_operator(LabeledOperator(out, (dA, d_b)))
    raise RuntimeError("could not draw a full-rank marginal")


def optimizer_state(sigma: LabeledOperator, n: int, ext: ExtensionChannel) -> LabeledOperator:
    """``E^{(x)n}(Lambda_n(sigma^{(x)n}))`` on interleaved ``(AB')^n``."""
    sigma = as_operator(sigma)
    d = sigma.dim
    x = apply_channel(purification_channel(d, n), tensor_power(LabeledOperator(sigma.entries, (d,)), n))
    for k in range(n):
        x = ext.apply_on(x, 2 * k + 1)
    m = x.entries
    return LabeledOperator((m + m.conj().T) / 2, x.dims)


def optimizer_membership_residual(state: LabeledOperator, sigma: LabeledOperator, n: int) -> float:
    a_marg = partial_trace(state, range(0, 2 * n, 2)).entries
    target = tensor_power(as_operator(sigma), n).entries
    return float(np.abs(a_marg - target).max())


def optimizer_symmetry_residual(state: LabeledOperator, n: int) -> float:
    d_a, d_b = state.dims[0], state.dims[1]
    return simultaneous_symmetry_deviation(state, d_a, d_b, n)


def divergence_value(kind: str, rho, sigma, alpha: float | None = None) -> float:
    if kind == "umegaki":
        return umegaki(rho, sigma).value
    if kind == "sandwiched":
        if alpha is None:
            raise ValueError("sandwiched divergence needs alpha")
        return sandwiched(rho, sigma, alpha).value
    raise ValueError(f"unknown divergence {kind!r}")


@dataclass
class GapRecord:
    n: int
    per_copy_value: float
    baseline: float
    gap: float
    state_digest: str = ""
    support_ok: bool = True


def state_digest(x: LabeledOperator) -> str:
    return hashlib.sha256(np.ascontiguousarray(x.entries).tobytes()).hexdigest()


@dataclass(frozen=True, eq=False)
class UhlmannInstance:
    """An extension ``rho_ab`` of ``rho_a``, a reference ``sigma_a`` and the matching extension channel.

    Optimiser states are computed once per ``n`` and shared by every divergence scan.
    """

    rho_ab: LabeledOperator
    sigma_a: LabeledOperator
    ext: ExtensionChannel
    _states: dict = field(default_factory=dict, repr=False)

    @property
    def rho_a(self) -> LabeledOperator:
        return partial_trace(self.rho_ab, [0])

    def state(self, n: int) -> LabeledOperator:
        if n not in self._states:
            self._states[n] = optimizer_state(self.sigma_a, n, self.ext)
        return self._states[n]


def make_instance(rho_ab, sigma_a) -> UhlmannInstance:
    """Build the extension channel from the standard purification of ``Tr_B' rho_ab``."""
    rho_ab = as_operator(rho_ab)
    rho_a = partial_trace(rho_ab, [0])
    vec = purification_vector(rho_a)
    dA = rho_a.dim
    psi = LabeledOperator(np.outer(vec, vec.conj()), (dA, dA))
    return UhlmannInstance(rho_ab, as_operator(sigma_a), find_extension_channel(psi, rho_ab))


def gap_scan(
    rho_ab,
    sigma_a,
    n_max: int | None = None,
    div_kind: str = "umegaki",
    alpha: float | None = None,
    instance: UhlmannInstance | None = None,
) -> list[GapRecord]:
    """Per-copy divergence of ``rho_ab^{(x)n}`` from the optimiser ``sigma_n`` against ``D(rho_a || sigma_a)``."""
    inst = instance if instance is not None else make_instance(rho_ab, sigma_a)
    d = inst.sigma_a.dim
    if n_max is None:
        n_max = NMAX_DEFAULT.get(d, 1)
    baseline = divergence_value(div_kind, inst.rho_a, inst.sigma_a, alpha)
    records = []
    for n in range(1, n_max + 1):
        state = inst.state(n)
        rho_n = tensor_power(inst.rho_ab, n)
        val = divergence_value(div_kind, rho_n, state, alpha)
        per_copy = val / n
        if math.isinf(per_copy):
            records.append(GapRecord(n, per_copy, baseline, math.inf, state_digest(state), False))
        else:
            records.append(GapRecord(n, per_copy, baseline, per_copy - baseline, state_digest(state)))
    return records


@dataclass
class MeasuredChainReport:
    alpha: float
    measured_lower_a: float
    sandwiched_a: float
    measured_upper_ab: float
    per_copy: list[float]
    passed: bool

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "measured_lower_a": self.measured_lower_a,
            "sandwiched_a": self.sandwiched_a,
            "measured_upper_ab": self.measured_upper_ab,
            "per_copy": self.per_copy,
            "pass": self.passed,
        }


def measured_corollary_check(
    rho_ab,
    sigma_a,
    alpha: float,
    n_max: int = 2,
    tol: float = GAP_TOL,
    instance: UhlmannInstance | None = None,
) -> MeasuredChainReport:
    """Certified-bracket form of ``D_M(rho_A||sigma_A) <= D_M(rho_AB||C) <= D~(rho_A||sigma_A)`` at finite n."""
    inst = instance if instance is not None else make_instance(rho_ab, sigma_a)
    states = [inst.state(n) for n in range(1, n_max + 1)]
    bracket_a = measured_bracket(inst.rho_a, inst.sigma_a, alpha)
    lower_a = bracket_a.lower
    upper_ab = sandwiched(inst.rho_ab, states[0], alpha).value
    per_copy = [
        sandwiched(tensor_power(inst.rho_ab, n), s, alpha).value / n
        for n, s in enumerate(states, start=1)
    ]
    ok = lower_a <= upper_ab + tol and all(v >= lower_a - tol for v in per_copy)
    return MeasuredChainReport(alpha, lower_a, bracket_a.upper, upper_ab, per_copy, ok)


def random_instance(
    d: int, rng: np.random.Generator, d_b: int | None = None, mix: float = INSTANCE_MIX
) -> UhlmannInstance:
    """Random extension of a random ``rho_a`` together with a random reference ``sigma_a``.

    ``mix`` blends white noise into both single-system states so that spectra
    stay away from zero.
    """
    rho_a = random_state(d, rng, mix=mix)
    rho_ab = random_extension(rho_a, d if d_b is None else d_b, rng)
    sigma_a = random_state(d, rng, mix=mix)
    return make_instance(rho_ab, sigma_a)
