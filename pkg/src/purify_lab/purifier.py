"""The random purification channel ``X -> sqrt(R_n) (X (x) 1_B^n) sqrt(R_n)``.

All channel outputs live on the interleaved ordering ``A1 B1 A2 B2 ... An Bn``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

from .haar import (
    MAX_RN_DIM,
    all_permutations,
    build_Rn,
    group_perm,
    interleave_perm,
    random_symmetric_state,
    simultaneous_perm_operator,
    symmetry_deviation,
    twirl_basis,
    twirl_on_subsystems,
)
from .tensor import (
    DensityState,
    LabeledOperator,
    ResourceError,
    as_operator,
    identity,
    mat_sqrt,
    operator_norm,
    partial_trace,
    random_state,
    reorder_subsystems,
    tensor_power,
    tensor_product,
    trace_norm,
)

SYMMETRY_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class PurificationChannel:
    d: int
    n: int
    sqrt_R: LabeledOperator

    @property
    def in_dims(self) -> tuple[int, ...]:
        return (self.d,) * self.n

    def __call__(self, x: LabeledOperator) -> LabeledOperator:
        return apply_channel(self, x)


@lru_cache(maxsize=None)
def purification_channel(d: int, n: int, max_dim: int = MAX_RN_DIM) -> PurificationChannel:
    R = build_Rn(d, n, max_dim)
    return PurificationChannel(d, n, mat_sqrt(R))


def embed_with_identity(x: LabeledOperator, d: int, n: int) -> LabeledOperator:
    """``x (x) 1_{B^n}`` reordered to interleaved ``(AB)^n``."""
    grouped = tensor_product([LabeledOperator(x.entries, (d,) * n), identity((d,) * n)])
    return reorder_subsystems(grouped, interleave_perm(n))


def apply_channel(ch: PurificationChannel, x: LabeledOperator) -> LabeledOperator:
    x = as_operator(x)
    if x.dim != ch.d**ch.n:
        raise ValueError(f"input of size {x.dim} does not act on (C^{ch.d})^{ch.n}")
    S = ch.sqrt_R.entries
    big = embed_with_identity(x, ch.d, ch.n)
    return LabeledOperator(S @ big.entries @ S, big.dims)


def purification_vector(rho: LabeledOperator) -> np.ndarray:
    """``(sqrt(rho) (x) 1)|Gamma>``; component ``(a, b)`` equals ``sqrt(rho)[a, b]``."""
    return mat_sqrt(as_operator(rho)).entries.ravel()


def standard_purification(rho: LabeledOperator) -> LabeledOperator:
    """``sqrt(rho) Gamma sqrt(rho)`` on ``A-systems (x) B-systems`` in grouped order."""
    rho = as_operator(rho)
    vec = purification_vector(rho)
    return LabeledOperator(np.outer(vec, vec.conj()), rho.dims + rho.dims)


def rhs_random_purification(rho: LabeledOperator, n: int) -> LabeledOperator:
    """``E_U[((1 (x) U) psi (1 (x) U)^dag)^{(x)n}]`` computed by the exact twirl on the B factors."""
    rho = as_operator(rho)
    if len(rho.dims) != 1:
        rho = LabeledOperator(rho.entries, (rho.dim,))
    d = rho.dim
    psi = standard_purification(rho)
    return twirl_on_subsystems(tensor_power(psi, n), range(1, 2 * n, 2), twirl_basis(d, n))


def rhs_symmetric(rho_sym: LabeledOperator, d: int, n: int, tol: float = SYMMETRY_TOL) -> LabeledOperator:
    """Twirled standard purification of a permutationally symmetric state on ``A^n``."""
    rho_sym = LabeledOperator(as_operator(rho_sym).entries, (d,) * n)
    dev = symmetry_deviation(rho_sym, d, n)
    if dev > tol:
        raise ValueError(f"input is not permutationally symmetric (deviation {dev:.3g})")
    psi = standard_purification(rho_sym)
    twirled = twirl_on_subsystems(psi, range(n, 2 * n), twirl_basis(d, n))
    return reorder_subsystems(twirled, interleave_perm(n))


def ab_marginal_a(x: LabeledOperator, n: int) -> LabeledOperator:
    """Trace out the B factors of an interleaved ``(AB)^n`` operator."""
    return partial_trace(x, range(0, 2 * n, 2))


def choi_of_map(
    fn: Callable[[LabeledOperator], LabeledOperator], in_dims: Sequence[int]
) -> LabeledOperator:
    """``sum_ij |i><j| (x) fn(|i><j|)`` with the input factors first."""
    in_dims = tuple(in_dims)
    D = math.prod(in_dims)
    blocks = {}
    out_dims = None
    for i in range(D):
        for j in range(D):
            e = np.zeros((D, D), dtype=complex)
            e[i, j] = 1.0
            out = fn(LabeledOperator(e, in_dims))
            out_dims = out.dims
            blocks[i, j] = out.entries
    Dout = math.prod(out_dims)
    J = np.zeros((D * Dout, D * Dout), dtype=complex)
    for (i, j), b in blocks.items():
        J[i * Dout:(i + 1) * Dout, j * Dout:(j + 1) * Dout] = b
    return LabeledOperator(J, in_dims + tuple(out_dims))


def choi_matrix(ch: PurificationChannel) -> LabeledOperator:
    """Choi operator of the purification channel, computed in one contraction."""
    d, n = ch.d, ch.n
    Din = d**n
    # grouped sqrt(R): rows (A^n, B^n), columns (A^n, B^n)
    Sg = reorder_subsystems(ch.sqrt_R, group_perm(n)).entries.reshape(d**(2 * n), Din, Din)
    # Lambda(|i><j|)[o, p] = sum_b S[o, (i, b)] S[(j, b), p] and S is Hermitian
    blocks = np.einsum("oib,pjb->iojp", Sg, Sg.conj())
    Dout = d**(2 * n)
    J = blocks.reshape(Din * Dout, Din * Dout)
    J = LabeledOperator(J, (d,) * n + (d,) * (2 * n))
    # output currently grouped A^n B^n; move to interleaved after the input factors
    out_perm = [n + p for p in interleave_perm(n)]
    return reorder_subsystems(J, list(range(n)) + out_perm)


@dataclass
class CPTPReport:
    cp_min_eig: float
    tp_residual: float
    cp: bool
    tp: bool

    @property
    def passed(self) -> bool:
        return self.cp and self.tp


def check_choi(J: LabeledOperator, n_in: int, tol: float = 1e-9) -> CPTPReport:
    m = J.entries
    min_eig = float(np.linalg.eigvalsh((m + m.conj().T) / 2).min())
    tr_out = partial_trace(J, range(n_in))
    resid = operator_norm(tr_out.entries - np.eye(tr_out.dim))
    return CPTPReport(min_eig, resid, min_eig >= -tol, resid <= tol)


def check_cptp(ch: PurificationChannel, tol: float = 1e-9) -> CPTPReport:
    return check_choi(choi_matrix(ch), ch.n, tol)


@dataclass
class TheoremReport:
    d: int
    n: int
    seed: int | None
    gap_iid: float
    gap_symmetric: float
    cp_min_eig: float
    tp_residual: float
    passed: bool

    def to_dict(self) -> dict:
        out = asdict(self)
        out["pass"] = out.pop("passed")
        return out


def verify_theorem(
    d: int,
    n: int,
    rho: DensityState | None = None,
    tol: float = 1e-9,
    seed: int | None = None,
    rho_sym: DensityState | None = None,
) -> TheoremReport:
    """Compare both sides of the channel identity on an i.i.d. and a symmetric input."""
    if d >= 2 and n >= 1 and (d * d) ** n > MAX_RN_DIM:
        # fail before sampling, which already costs n! permutations
        raise ResourceError(f"(d^2)^n = {(d * d) ** n} exceeds the size budget {MAX_RN_DIM}")
    rng = np.random.default_rng(seed)
    if rho is None:
        rho = random_state(d, rng)
    if rho_sym is None:
        rho_sym = random_symmetric_state(d, n, rng)
    ch = purification_channel(d, n)
    lhs = apply_channel(ch, tensor_power(rho, n))
    gap_iid = trace_norm(lhs.entries - rhs_random_purification(rho, n).entries)
    lhs_sym = apply_channel(ch, rho_sym)
    gap_sym = trace_norm(lhs_sym.entries - rhs_symmetric(rho_sym, d, n).entries)
    cptp = check_cptp(ch, tol)
    ok = gap_iid <= tol and gap_sym <= tol and cptp.passed
    return TheoremReport(d, n, seed, gap_iid, gap_sym, cptp.cp_min_eig, cptp.tp_residual, ok)


def simultaneous_symmetry_deviation(x: LabeledOperator, d_a: int, d_b: int, n: int) -> float:
    """``max_pi ||P x P^dag - x||_inf`` for joint permutations of interleaved AB pairs."""
    m = as_operator(x).entries
    dev = 0.0
    for p in all_permutations(n):
        P = simultaneous_perm_operator(p, d_a, d_b).entries
        dev = max(dev, operator_norm(P @ m @ P.T - m))
    return dev
