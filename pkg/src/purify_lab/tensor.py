"""Dense operator algebra on labeled tensor-product spaces.

Subsystem ordering is row-major: the leftmost entry of ``dims`` is the most
significant tensor factor, matching ``numpy.kron``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

HERM_TOL = 1e-12
EIG_TOL = 1e-10
TRACE_TOL = 1e-10
CLIP_REL = 1e-12


class DomainError(ValueError):
    """A matrix function was asked for outside its domain (e.g. log of a singular matrix)."""


class ResourceError(RuntimeError):
    """The requested construction exceeds the dense size budget."""


@dataclass(frozen=True, eq=False)
class LabeledOperator:
    """Square complex matrix tagged with its subsystem dimensions."""

    entries: np.ndarray
    dims: tuple[int, ...]

    def __post_init__(self):
        entries = np.array(self.entries, dtype=complex)
        dims = tuple(int(x) for x in self.dims)
        if len(dims) == 0:
            raise ValueError("dims must be non-empty")
        if any(x < 1 for x in dims):
            raise ValueError(f"dims must be positive, got {dims}")
        D = math.prod(dims)
        if entries.shape != (D, D):
            raise ValueError(f"entries shape {entries.shape} does not match dims {dims}")
        entries.flags.writeable = False
        object.__setattr__(self, "entries", entries)
        object.__setattr__(self, "dims", dims)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    @property
    def dag(self) -> "LabeledOperator":
        return LabeledOperator(self.entries.conj().T, self.dims)

    def trace(self) -> complex:
        return complex(np.trace(self.entries))

    def is_hermitian(self, tol: float = HERM_TOL) -> bool:
        return hermitian_deviation(self.entries) <= tol

    def _other(self, other) -> np.ndarray:
        if isinstance(other, LabeledOperator):
            if other.dims != self.dims:
                raise ValueError(f"dims mismatch: {self.dims} vs {other.dims}")
            return other.entries
        return np.asarray(other)

    def __matmul__(self, other):
        return LabeledOperator(self.entries @ self._other(other), self.dims)

    def __add__(self, other):
        return LabeledOperator(self.entries + self._other(other), self.dims)

    def __sub__(self, other):
        return LabeledOperator(self.entries - self._other(other), self.dims)

    def __mul__(self, scalar):
        return LabeledOperator(self.entries * scalar, self.dims)

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return LabeledOperator(self.entries / scalar, self.dims)

    def __neg__(self):
        return LabeledOperator(-self.entries, self.dims)

    def __repr__(self):
        return f"LabeledOperator(dims={self.dims})"


class DensityState(LabeledOperator):
    """A LabeledOperator that is Hermitian, PSD and of unit trace."""

    def __post_init__(self):
        super().__post_init__()
        dev = hermitian_deviation(self.entries)
        if dev > HERM_TOL:
            raise ValueError(f"state is not Hermitian (deviation {dev:.3g})")
        lam_min = np.linalg.eigvalsh(self.entries).min()
        if lam_min < -EIG_TOL:
            raise ValueError(f"state has negative eigenvalue {lam_min:.3g}")
        tr = np.trace(self.entries).real
        if abs(tr - 1.0) > TRACE_TOL:
            raise ValueError(f"state trace is {tr!r}, expected 1")

    @classmethod
    def from_operator(cls, op: LabeledOperator, hermitize: bool = True) -> "DensityState":
        """Promote ``op`` to a state, optionally symmetrizing away round-off first."""
        m = op.entries
        if hermitize:
            m = (m + m.conj().T) / 2
        return cls(m, op.dims)

    def __repr__(self):
        return f"DensityState(dims={self.dims})"


@dataclass(frozen=True, eq=False)
class SpectralDecomposition:
    eigenvalues: np.ndarray  # descending
    eigenvectors: np.ndarray  # columns
    dims: tuple[int, ...] = field(default=())

    def reconstruct(self) -> np.ndarray:
        v = self.eigenvectors
        return (v * self.eigenvalues) @ v.conj().T


def hermitian_deviation(m: np.ndarray) -> float:
    return float(np.abs(m - m.conj().T).max()) if m.size else 0.0


def as_operator(x, dims: Sequence[int] | None = None) -> LabeledOperator:
    if isinstance(x, LabeledOperator):
        return x
    x = np.asarray(x, dtype=complex)
    return LabeledOperator(x, tuple(dims) if dims is not None else (x.shape[0],))


def identity(dims: Sequence[int] | int) -> LabeledOperator:
    dims = (dims,) if isinstance(dims, int) else tuple(dims)
    return LabeledOperator(np.eye(math.prod(dims)), dims)


def ket(index: int, d: int) -> np.ndarray:
    v = np.zeros(d, dtype=complex)
    v[index] = 1.0
    return v


def projector(vec: np.ndarray, dims: Sequence[int] | None = None) -> LabeledOperator:
    vec = np.asarray(vec, dtype=complex).ravel()
    return LabeledOperator(np.outer(vec, vec.conj()), tuple(dims) if dims else (vec.size,))


def max_entangled(d: int) -> LabeledOperator:
    """Unnormalised maximally entangled operator Gamma = |Gamma><Gamma| on C^d x C^d."""
    vec = np.eye(d, dtype=complex).ravel()
    return LabeledOperator(np.outer(vec, vec), (d, d))


def tensor_product(ops: Iterable[LabeledOperator]) -> LabeledOperator:
    ops = [as_operator(o) for o in ops]
    if not ops:
        raise ValueError("tensor_product needs at least one operator")
    out = ops[0].entries
    dims = list(ops[0].dims)
    for op in ops[1:]:
        out = np.kron(out, op.entries)
        dims.extend(op.dims)
    return LabeledOperator(out, tuple(dims))


def tensor_power(op: LabeledOperator, n: int) -> LabeledOperator:
    return tensor_product([op] * n)


def _check_indices(indices: Iterable[int], k: int) -> list[int]:
    indices = list(indices)
    for i in indices:
        if not 0 <= i < k:
            raise ValueError(f"subsystem index {i} out of range for {k} subsystems")
    if len(set(indices)) != len(indices):
        raise ValueError(f"repeated subsystem index in {indices}")
    return indices


def partial_trace(x: LabeledOperator, keep: Iterable[int]) -> LabeledOperator:
    """Reduced operator on the subsystems in ``keep`` (kept in their original order)."""
    k = len(x.dims)
    keep = sorted(_check_indices(keep, k))
    if not keep:
        raise ValueError("keep must be non-empty; use trace() for the full trace")
    drop = [i for i in range(k) if i not in keep]
    t = x.entries.reshape(x.dims + x.dims)
    letters = "abcdefghijklmnopqrstuvwxyz"
    upper = letters.upper()
    row = [letters[i] for i in range(k)]
    col = [upper[i] for i in range(k)]
    for i in drop:
        col[i] = row[i]
    out_idx = "".join(row[i] for i in keep) + "".join(col[i] for i in keep)
    res = np.einsum("".join(row) + "".join(col) + "->" + out_idx, t)
    kd = tuple(x.dims[i] for i in keep)
    D = math.prod(kd)
    return LabeledOperator(res.reshape(D, D), kd)


def reorder_subsystems(x: LabeledOperator, perm: Sequence[int]) -> LabeledOperator:
    """Relabel subsystems so that new subsystem ``j`` is old subsystem ``perm[j]``."""
    k = len(x.dims)
    perm = list(perm)
    if sorted(perm) != list(range(k)):
        raise ValueError(f"{perm} is not a permutation of {k} subsystems")
    t = x.entries.reshape(x.dims + x.dims)
    t = t.transpose(perm + [p + k for p in perm])
    new_dims = tuple(x.dims[p] for p in perm)
    return LabeledOperator(t.reshape(x.dim, x.dim), new_dims)


def inverse_perm(perm: Sequence[int]) -> list[int]:
    inv = [0] * len(perm)
    for j, p in enumerate(perm):
        inv[p] = j
    return inv


def herm_eig(x: LabeledOperator | np.ndarray, tol: float = EIG_TOL) -> SpectralDecomposition:
    op = as_operator(x)
    m = op.entries
    if hermitian_deviation(m) > tol:
        raise ValueError("herm_eig requires a Hermitian operator")
    w, v = np.linalg.eigh((m + m.conj().T) / 2)
    return SpectralDecomposition(w[::-1].copy(), v[:, ::-1].copy(), op.dims)


def support_mask(eigenvalues: np.ndarray, clip: float = CLIP_REL) -> np.ndarray:
    """Eigenvalues counted as nonzero: strictly above ``clip`` times the largest one."""
    top = float(np.max(eigenvalues)) if eigenvalues.size else 0.0
    return eigenvalues > clip * max(top, 0.0)


def mat_func(
    x: LabeledOperator | np.ndarray,
    f: Callable[[np.ndarray], np.ndarray],
    support_only: bool = False,
    clip: float = CLIP_REL,
) -> LabeledOperator:
    """Apply ``f`` to the eigenvalues of the Hermitian operator ``x``.

    With ``support_only`` the eigenvalues at or below ``clip * lambda_max`` are
    treated as exact zeros and mapped to zero, so ``log`` and negative powers act
    as generalized (Moore-Penrose style) functions on the support.
    """
    op = as_operator(x)
    spec = herm_eig(op)
    lam = spec.eigenvalues
    vals = np.zeros_like(lam)
    with np.errstate(all="ignore"):
        if support_only:
            mask = support_mask(lam, clip)
            vals[mask] = f(lam[mask])
        else:
            vals = np.asarray(f(lam), dtype=float)
    if not np.all(np.isfinite(vals)):
        raise DomainError("matrix function undefined on the spectrum; try support_only=True")
    v = spec.eigenvectors
    return LabeledOperator((v * vals) @ v.conj().T, op.dims)


def mat_power(x, p: float, support_only: bool = True, clip: float = CLIP_REL) -> LabeledOperator:
    return mat_func(x, lambda t: np.power(t, p), support_only=support_only, clip=clip)


def mat_sqrt(x, clip: float = CLIP_REL) -> LabeledOperator:
    return mat_func(x, np.sqrt, support_only=True, clip=clip)


@dataclass(frozen=True)
class Norms:
    trace_norm: float
    operator_norm: float
    hs_norm: float


def norms(x: LabeledOperator | np.ndarray) -> Norms:
    s = np.linalg.svd(as_operator(x).entries, compute_uv=False)
    return Norms(float(s.sum()), float(s.max()), float(np.sqrt((s**2).sum())))


def trace_norm(x) -> float:
    return norms(x).trace_norm


def operator_norm(x) -> float:
    return float(np.linalg.norm(as_operator(x).entries, 2))


# Random objects used throughout the test-suites and CLI.

def random_hermitian(dims: Sequence[int] | int, rng: np.random.Generator) -> LabeledOperator:
    dims = (dims,) if isinstance(dims, int) else tuple(dims)
    D = math.prod(dims)
    g = rng.standard_normal((D, D)) + 1j * rng.standard_normal((D, D))
    return LabeledOperator((g + g.conj().T) / 2, dims)


def random_state(
    dims: Sequence[int] | int,
    rng: np.random.Generator,
    rank: int | None = None,
    mix: float = 0.0,
) -> DensityState:
    """Random state from the induced (Ginibre) measure, optionally mixed with white noise.

    ``mix`` in [0, 1) blends in the maximally mixed state, which keeps the
    spectrum away from zero for tests that take logarithms of tensor powers.
    """
    dims = (dims,) if isinstance(dims, int) else tuple(dims)
    D = math.prod(dims)
    k = D if rank is None else rank
    g = rng.standard_normal((D, k)) + 1j * rng.standard_normal((D, k))
    m = g @ g.conj().T
    m = m / np.trace(m).real
    if mix:
        m = (1 - mix) * m + mix * np.eye(D) / D
    m = (m + m.conj().T) / 2
    return DensityState(m, dims)


def random_pure_state(dims: Sequence[int] | int, rng: np.random.Generator) -> DensityState:
    return random_state(dims, rng, rank=1)
