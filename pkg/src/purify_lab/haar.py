"""Symmetric-group operators, Haar sampling and exact n-fold twirling.

The twirl ``E_U[U^{(x)n} Y U^{dag(x)n}]`` is the Hilbert-Schmidt orthogonal
projection onto ``span{P_pi : pi in S_n}`` (Schur-Weyl duality), so it is
computed from the Gram system of the permutation operators instead of by
integration.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

from .tensor import (
    DensityState,
    LabeledOperator,
    ResourceError,
    as_operator,
    inverse_perm,
    max_entangled,
    random_state,
    reorder_subsystems,
    tensor_power,
)

GRAM_RCOND = 1e-10
MAX_RN_DIM = 4096


@dataclass(frozen=True)
class Permutation:
    """A bijection of ``{0, ..., n-1}``; ``images[k]`` is where ``k`` is sent."""

    images: tuple[int, ...]

    def __post_init__(self):
        images = tuple(int(i) for i in self.images)
        if sorted(images) != list(range(len(images))):
            raise ValueError(f"{images} is not a bijection")
        object.__setattr__(self, "images", images)

    @property
    def n(self) -> int:
        return len(self.images)

    def __call__(self, k: int) -> int:
        return self.images[k]

    def __mul__(self, other: "Permutation") -> "Permutation":
        # (self * other)(k) = self(other(k))
        return Permutation(tuple(self.images[other.images[k]] for k in range(self.n)))

    def inverse(self) -> "Permutation":
        return Permutation(tuple(inverse_perm(self.images)))

    @classmethod
    def identity(cls, n: int) -> "Permutation":
        return cls(tuple(range(n)))


def all_permutations(n: int) -> list[Permutation]:
    return [Permutation(p) for p in itertools.permutations(range(n))]


def cycle_count(p: Permutation) -> int:
    seen = [False] * p.n
    cycles = 0
    for start in range(p.n):
        if seen[start]:
            continue
        cycles += 1
        k = start
        while not seen[k]:
            seen[k] = True
            k = p.images[k]
    return cycles


def perm_operator(p: Permutation, d: int) -> LabeledOperator:
    """Unitary sending tensor factor ``k`` to position ``p(k)``.

    Equivalently ``P|i_1 ... i_n> = |i_{p^-1(1)} ... i_{p^-1(n)}>``, which makes
    ``perm_operator(p) @ perm_operator(q) == perm_operator(p * q)``.
    """
    n = p.n
    D = d**n
    digits = np.indices((d,) * n).reshape(n, D)
    inv = p.inverse().images
    out_digits = digits[list(inv)]
    rows = np.ravel_multi_index(tuple(out_digits), (d,) * n)
    m = np.zeros((D, D))
    m[rows, np.arange(D)] = 1.0
    return LabeledOperator(m, (d,) * n)


@dataclass(frozen=True, eq=False)
class TwirlBasis:
    d: int
    n: int
    perms: tuple[Permutation, ...]
    operators: tuple[LabeledOperator, ...]
    cycles: tuple[int, ...]
    gram: np.ndarray
    gram_pinv: np.ndarray


@lru_cache(maxsize=None)
def twirl_basis(d: int, n: int) -> TwirlBasis:
    perms = all_permutations(n)
    ops = tuple(perm_operator(p, d) for p in perms)
    cycles = tuple(cycle_count(p) for p in perms)
    gram = np.array(
        [[float(d) ** cycle_count(p.inverse() * q) for q in perms] for p in perms]
    )
    gram_pinv = np.linalg.pinv(gram, rcond=GRAM_RCOND, hermitian=True)
    gram.flags.writeable = False
    gram_pinv.flags.writeable = False
    return TwirlBasis(d, n, tuple(perms), ops, cycles, gram, gram_pinv)


def sample_haar(d: int, rng: np.random.Generator) -> LabeledOperator:
    """Haar-random unitary: QR of a Ginibre matrix with the R-diagonal phases divided out."""
    return LabeledOperator(sample_haar_batch(d, 1, rng)[0], (d,))


def sample_haar_batch(d: int, size: int, rng: np.random.Generator) -> np.ndarray:
    z = rng.standard_normal((size, d, d)) + 1j * rng.standard_normal((size, d, d))
    q, r = np.linalg.qr(z / np.sqrt(2))
    diag = np.diagonal(r, axis1=1, axis2=2)
    return q * (diag / np.abs(diag))[:, None, :]


def _perm_overlaps(y: np.ndarray, basis: TwirlBasis) -> np.ndarray:
    # t_pi = Tr[P_pi^dag y]; P_pi is real so P_pi^dag = P_pi^T
    return np.array([np.sum(P.entries * y) for P in basis.operators])


def twirl_exact(y: LabeledOperator, basis: TwirlBasis) -> LabeledOperator:
    y = as_operator(y)
    D = basis.d**basis.n
    if y.dim != D:
        raise ValueError(f"operator of size {y.dim} does not act on (C^{basis.d})^{basis.n}")
    coeffs = basis.gram_pinv @ _perm_overlaps(y.entries, basis)
    out = sum(c * P.entries for c, P in zip(coeffs, basis.operators))
    return LabeledOperator(out, (basis.d,) * basis.n)


def twirl_mc(
    y: LabeledOperator,
    d: int,
    n: int,
    samples: int,
    rng: np.random.Generator,
    chunk: int = 10_000,
) -> tuple[LabeledOperator, np.ndarray]:
    """Monte-Carlo twirl; returns the mean and the entrywise standard error.

    The standard error of a complex entry combines the real and imaginary
    variances, so ``|estimate - exact| <= k * stderr`` is the natural test.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    y = as_operator(y).entries
    D = d**n
    total = np.zeros((D, D), dtype=complex)
    total_sq = np.zeros((D, D))
    done = 0
    while done < samples:
        m = min(chunk, samples - done)
        us = sample_haar_batch(d, m, rng)
        w = us
        for _ in range(n - 1):
            w = np.einsum("sij,skl->sikjl", w, us).reshape(m, w.shape[1] * d, w.shape[2] * d)
        vals = w @ y @ np.conj(np.swapaxes(w, 1, 2))
        total += vals.sum(axis=0)
        total_sq += (np.abs(vals) ** 2).sum(axis=0)
        done += m
    mean = total / samples
    var = np.maximum(total_sq / samples - np.abs(mean) ** 2, 0.0)
    stderr = np.sqrt(var / max(samples - 1, 1))
    return LabeledOperator(mean, (d,) * n), stderr


def twirl_on_subsystems(
    x: LabeledOperator, twirled: Sequence[int], basis: TwirlBasis
) -> LabeledOperator:
    """Apply ``id (x) twirl`` with the twirl acting on the listed subsystems.

    ``twirled`` is ordered: its j-th entry plays the role of tensor factor j of
    ``(C^d)^{(x)n}``.
    """
    x = as_operator(x)
    k = len(x.dims)
    twirled = list(twirled)
    if len(twirled) != basis.n:
        raise ValueError(f"expected {basis.n} twirled subsystems, got {len(twirled)}")
    if any(not 0 <= i < k for i in twirled) or len(set(twirled)) != len(twirled):
        raise ValueError(f"invalid twirled subsystems {twirled} for dims {x.dims}")
    if any(x.dims[i] != basis.d for i in twirled):
        raise ValueError(f"twirled subsystems must all have dimension {basis.d}")
    rest = [i for i in range(k) if i not in twirled]
    order = rest + twirled
    grouped = reorder_subsystems(x, order)
    DT = basis.d**basis.n
    Dr = x.dim // DT
    t = grouped.entries.reshape(Dr, DT, Dr, DT)
    # C_s = Tr_T[(1 (x) P_s^dag) x]
    contractions = [np.einsum("ajbk,jk->ab", t, P.entries) for P in basis.operators]
    out = np.zeros((x.dim, x.dim), dtype=complex)
    for a, P in enumerate(basis.operators):
        m = sum(basis.gram_pinv[a, s] * contractions[s] for s in range(len(contractions)))
        out += np.kron(m, P.entries)
    res = LabeledOperator(out, grouped.dims)
    return reorder_subsystems(res, inverse_perm(order))


def interleave_perm(n: int) -> list[int]:
    """Subsystem order taking grouped ``A1..An B1..Bn`` to interleaved ``A1 B1 ... An Bn``."""
    return [j for i in range(n) for j in (i, n + i)]


def group_perm(n: int) -> list[int]:
    """Subsystem order taking interleaved ``A1 B1 ... An Bn`` to grouped ``A1..An B1..Bn``."""
    return [2 * i for i in range(n)] + [2 * i + 1 for i in range(n)]


@lru_cache(maxsize=None)
def build_Rn(d: int, n: int, max_dim: int = MAX_RN_DIM) -> LabeledOperator:
    """The Haar average of ``(1 (x) U^{(x)n}) Gamma^{(x)n} (1 (x) U^{dag(x)n})``.

    Returned in interleaved ordering ``(AB)^{(x)n}``.
    """
    if d < 2 or n < 1:
        raise ValueError("build_Rn needs d >= 2 and n >= 1")
    if (d * d) ** n > max_dim:
        raise ResourceError(f"(d^2)^n = {(d * d) ** n} exceeds the size budget {max_dim}")
    gamma_n = reorder_subsystems(tensor_power(max_entangled(d), n), group_perm(n))
    twirled = twirl_on_subsystems(gamma_n, range(n, 2 * n), twirl_basis(d, n))
    m = twirled.entries
    return reorder_subsystems(LabeledOperator((m + m.conj().T) / 2, twirled.dims), interleave_perm(n))


def symmetrize(x: LabeledOperator, d: int, n: int) -> LabeledOperator:
    """Average of ``P x P^dag`` over all factor permutations of ``(C^d)^{(x)n}``."""
    basis = twirl_basis(d, n)
    m = as_operator(x).entries
    out = sum(P.entries @ m @ P.entries.T for P in basis.operators) / len(basis.operators)
    return LabeledOperator(out, (d,) * n)


def symmetry_deviation(x: LabeledOperator, d: int, n: int) -> float:
    """``max_pi ||P x P^dag - x||_inf``."""
    m = as_operator(x).entries
    return max(
        float(np.linalg.norm(P.entries @ m @ P.entries.T - m, 2))
        for P in twirl_basis(d, n).operators
    )


def simultaneous_perm_operator(p: Permutation, d_a: int, d_b: int) -> LabeledOperator:
    """``P_p`` acting on interleaved ``(AB)^{(x)n}``, permuting AB pairs jointly."""
    return LabeledOperator(perm_operator(p, d_a * d_b).entries, (d_a, d_b) * p.n)


def random_symmetric_state(
    d: int, n: int, rng: np.random.Generator, mix: float = 0.0
) -> DensityState:
    """Random state on ``(C^d)^{(x)n}`` averaged over all factor permutations."""
    rho = random_state((d,) * n, rng, mix=mix)
    return DensityState.from_operator(symmetrize(rho, d, n))
