"""Weak quasi-concavity checks and Caratheodory reduction of i.i.d. mixtures."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

from .divergence import eta, measured_bracket, sandwiched, spectrum_card, umegaki
from .haar import symmetrize, symmetry_deviation
from .tensor import DensityState, LabeledOperator, as_operator, random_state, tensor_power

MARGIN_TOL = 1e-8
DIV_KINDS = ("umegaki", "sandwiched", "measured-lower")


@dataclass(frozen=True)
class Ensemble:
    members: tuple[tuple[float, DensityState], ...]

    def __post_init__(self):
        members = tuple((float(w), s) for w, s in self.members)
        if not members:
            raise ValueError("ensemble is empty")
        if any(not 0 < w <= 1 for w, _ in members):
            raise ValueError("weights must lie in (0, 1]")
        if abs(sum(w for w, _ in members) - 1) > 1e-10:
            raise ValueError("weights must sum to 1")
        if len({s.dims for _, s in members}) != 1:
            raise ValueError("all ensemble states must share dims")
        object.__setattr__(self, "members", members)

    @classmethod
    def from_lists(cls, weights: Sequence[float], states: Sequence[DensityState]) -> "Ensemble":
        return cls(tuple(zip(weights, states)))

    @property
    def weights(self) -> np.ndarray:
        return np.array([w for w, _ in self.members])

    @property
    def states(self) -> list[DensityState]:
        return [s for _, s in self.members]

    def __len__(self):
        return len(self.members)

    def mixture(self) -> DensityState:
        s0 = self.members[0][1]
        m = sum(w * s.entries for w, s in self.members)
        return DensityState.from_operator(LabeledOperator(m, s0.dims))


@dataclass
class SlackReport:
    div_kind: str
    alpha: float | None
    mixture_value: float
    min_member_value: float
    slack_bound: float
    margin: float
    n_members: int
    # Umegaki only: margin against the weighted-average form of quasi-concavity
    weighted_margin: float | None = None
    # measured only: the margin would be negative under the smaller N^eta s^eta constant
    flagged: bool = False

    @property
    def passed(self) -> bool:
        return self.margin >= -MARGIN_TOL


def _margin(mixture: float, lowest: float, slack: float) -> float:
    if math.isinf(lowest):
        return 0.0 if math.isinf(mixture) else -math.inf
    if math.isinf(mixture):
        return math.inf
    return mixture - (lowest - slack)


def sandwiched_slack(alpha: float, n_members: int) -> float:
    """Ensemble-size slack for the sandwiched divergence: ``log N`` or ``alpha/(alpha-1) log N``."""
    if alpha < 1 or math.isinf(alpha):
        return math.log2(n_members)
    return alpha / (alpha - 1) * math.log2(n_members)


def quasiconc_check(div_kind: str, alpha: float | None, ens: Ensemble, sigma) -> SlackReport:
    if div_kind not in DIV_KINDS:
        raise ValueError(f"unknown divergence kind {div_kind!r}; expected one of {DIV_KINDS}")
    p = ens.weights
    N = len(ens)
    rho_bar = ens.mixture()
    if div_kind == "sandwiched" and alpha == 1:
        div_kind = "umegaki"

    if div_kind == "umegaki":
        vals = np.array([umegaki(s, sigma).value for s in ens.states])
        mix = umegaki(rho_bar, sigma).value
        entropy = float(-np.sum(p * np.log2(p)))
        lowest = float(vals.min())
        weighted = _margin(mix, float(np.sum(p * vals)), entropy) if np.all(np.isfinite(vals)) else None
        return SlackReport("umegaki", None, mix, lowest, entropy, _margin(mix, lowest, entropy), N, weighted)

    if alpha is None or not alpha > 0:
        raise ValueError(f"{div_kind} needs alpha > 0")

    if div_kind == "sandwiched":
        vals = [sandwiched(s, sigma, alpha).value for s in ens.states]
        mix = sandwiched(rho_bar, sigma, alpha).value
        slack = sandwiched_slack(alpha, N)
        lowest = min(vals)
        return SlackReport("sandwiched", alpha, mix, lowest, slack, _margin(mix, lowest, slack), N)

    if math.isinf(alpha) or alpha == 1:
        raise ValueError("measured-lower is defined for alpha in (0, 1) and (1, inf)")
    # conservative: certified lower edge on the mixture, upper edge on the members
    mix = measured_bracket(rho_bar, sigma, alpha).lower
    lowest = min(sandwiched(s, sigma, alpha).value for s in ens.states)
    s_sigma = spectrum_card(sigma)
    e = eta(alpha)
    slack = sandwiched_slack(alpha, N) + e * math.log2(s_sigma)
    spec_slack = e * math.log2(N) + e * math.log2(s_sigma)
    margin = _margin(mix, lowest, slack)
    flagged = _margin(mix, lowest, spec_slack) < -MARGIN_TOL
    return SlackReport("measured-lower", alpha, mix, lowest, slack, margin, N, flagged=flagged)


def caratheodory_reduce(
    points, weights, cutoff: float = 1e-10
) -> tuple[list[int], np.ndarray]:
    """Rewrite a convex combination of points in R^D with at most D + 1 of them.

    Repeatedly takes an affine dependence ``sum l_i x_i = 0, sum l_i = 0`` and
    moves the weights along it until the first weight (lowest index on ties)
    reaches zero.
    """
    X = np.asarray(points, dtype=float)
    w = np.asarray(weights, dtype=float).copy()
    if X.ndim != 2 or X.shape[0] != w.shape[0]:
        raise ValueError("points must be an (m, D) array with one weight per point")
    m, D = X.shape
    if m <= D + 1:
        return list(range(m)), w
    active = [i for i in range(m) if w[i] > 0]
    w = w[active]
    while len(active) > D + 1:
        A = np.vstack([X[active].T, np.ones(len(active))])
        lam = np.linalg.svd(A)[2][-1].conj()
        if lam.max() <= 0:
            lam = -lam
        pos = lam > cutoff * np.abs(lam).max()
        ratios = np.full(len(active), np.inf)
        ratios[pos] = w[pos] / lam[pos]
        j = int(np.argmin(ratios))
        w = np.maximum(w - ratios[j] * lam, 0.0)
        w[j] = 0.0
        keep = w > 0
        active = [a for a, k in zip(active, keep) if k]
        w = w[keep]
    return active, w / w.sum()


def herm_to_real(x) -> np.ndarray:
    """Real coordinates of a Hermitian matrix in which the HS inner product is Euclidean."""
    m = as_operator(x).entries
    iu = np.triu_indices(m.shape[0], 1)
    return np.concatenate([m.diagonal().real, math.sqrt(2) * m[iu].real, math.sqrt(2) * m[iu].imag])


def real_to_herm(v: np.ndarray, D: int) -> np.ndarray:
    iu = np.triu_indices(D, 1)
    k = len(iu[0])
    m = np.zeros((D, D), dtype=complex)
    m[iu] = (v[D:D + k] + 1j * v[D + k:]) / math.sqrt(2)
    m = m + m.conj().T
    m[np.diag_indices(D)] = v[:D]
    return m


@lru_cache(maxsize=None)
def _sym_projector(d: int, n: int) -> np.ndarray:
    D = d**n
    cols = []
    for k in range(D * D):
        e = np.zeros(D * D)
        e[k] = 1.0
        op = LabeledOperator(real_to_herm(e, D), (d,) * n)
        cols.append(herm_to_real(symmetrize(op, d, n)))
    proj = np.array(cols).T
    proj.flags.writeable = False
    return proj


def sym_projector_rank(d: int, n: int) -> int:
    """Dimension of the real space of permutationally symmetric Hermitian operators."""
    return int(np.linalg.matrix_rank(_sym_projector(d, n), tol=1e-8))


@lru_cache(maxsize=None)
def sym_coordinates_basis(d: int, n: int) -> np.ndarray:
    """Orthonormal columns spanning the symmetric-Hermitian subspace in real coordinates."""
    w, v = np.linalg.eigh(_sym_projector(d, n))
    basis = v[:, w > 0.5]
    basis.flags.writeable = False
    return basis


def sym_coordinates(x, d: int, n: int) -> np.ndarray:
    return sym_coordinates_basis(d, n).T @ herm_to_real(x)


def sym_space_dim(d: int, n: int) -> tuple[int, int]:
    """Symmetric-subspace dimension and the polynomial bound on the symmetric-Hermitian dimension."""
    if d < 1 or n < 1:
        raise ValueError("d and n must be >= 1")
    # (d - 1)(d/2 + 1) = (d - 1)(d + 2)/2 is always an integer
    return math.comb(n + d - 1, n), (n + 1) ** ((d - 1) * (d + 2) // 2)


def sym_hermitian_dim_bound(d: int, n: int) -> int:
    """``(n+1)^{d^2-1}``: Young diagrams times squared irrep dimensions.

    The value from ``sym_space_dim`` counts each irrep block once rather than
    squared and undershoots the true dimension (10 > 9 at d=2, n=2).
    """
    if d < 1 or n < 1:
        raise ValueError("d and n must be >= 1")
    return (n + 1) ** (d * d - 1)


def iid_span_dim(d: int, n: int, samples: int, rng: np.random.Generator) -> int:
    """Numerical rank of ``{rho_i^{(x)n}}`` for random full-rank ``rho_i``."""
    expected = sym_projector_rank(d, n)
    if samples < 2 * expected:
        raise ValueError(f"need at least {2 * expected} samples, got {samples}")
    vecs = np.array([herm_to_real(tensor_power(random_state(d, rng), n)) for _ in range(samples)])
    s = np.linalg.svd(vecs, compute_uv=False)
    return int(np.sum(s > 1e-8 * s[0]))


@dataclass
class DeFinettiReport:
    slack: SlackReport
    n_original: int
    n_reduced: int
    mixture_residual: float
    caratheodory_bound: int

    @property
    def passed(self) -> bool:
        return self.slack.passed and self.n_reduced <= self.caratheodory_bound


def definetti_check(
    nu: Ensemble,
    n: int,
    sigma_sym,
    div_kind: str,
    alpha: float | None = None,
) -> DeFinettiReport:
    """Reduce ``E_nu rho^{(x)n}`` by Caratheodory and check quasi-concavity on the reduced ensemble."""
    d = nu.states[0].dim
    sigma_sym = as_operator(sigma_sym)
    if symmetry_deviation(LabeledOperator(sigma_sym.entries, (d,) * n), d, n) > 1e-8:
        raise ValueError("sigma is not permutationally symmetric")
    powers = [tensor_power(s, n) for s in nu.states]
    coords = np.array([sym_coordinates(x, d, n) for x in powers])
    idx, w = caratheodory_reduce(coords, nu.weights)
    target = nu.weights @ coords
    residual = float(np.abs(w @ coords[idx] - target).max())
    reduced = Ensemble(tuple((float(wi), DensityState.from_operator(powers[i])) for wi, i in zip(w, idx)))
    report = quasiconc_check(div_kind, alpha, reduced, sigma_sym)
    return DeFinettiReport(report, len(nu), len(idx), residual, coords.shape[1] + 1)
